"""Rolling back-tests of VIX option hedges with the forward variance swap.

Each episode estimates the model's single parameter on the window preceding
the start date, sells nothing and buys nothing but marks an ATM call to model,
then rebalances a forward-variance-swap hedge daily over the hedge horizon.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .core import (DAYS_PER_YEAR, FORWARD_VARIANCE, WEEKDAYS, BusinessCalendar, DatedSeries, StatsSummary,
                   _as_date, reduction_factor, summarize, working_day_offset)
from .fbm import FbmParams, forward_variance_family, simulate_rl_log_vix
from .models import MODEL_TAGS, ModelParams, make_model

log = logging.getLogger(__name__)


class BacktestError(ValueError):
    pass


@dataclass(frozen=True)
class BacktestConfig:
    """Back-test protocol. Day counts are business days.

    ``fixed_hurst=None`` re-estimates the Hurst exponent on every window.
    ``fixed_sigma`` pins the rough model's vol-of-log-VIX instead of estimating it.
    """

    estimation_window: int = 88
    hedge_horizon: int = 29
    option_maturity: int = 32
    model: str = "rfsv"
    fixed_hurst: float | None = 0.377
    sigma_delta: int = 1
    rebalance: str = "daily"
    fixed_sigma: float | None = None

    def __post_init__(self):
        if self.estimation_window < 2:
            raise ValueError("estimation_window must be >= 2")
        if not 0 < self.hedge_horizon < self.option_maturity:
            raise ValueError("need 0 < hedge_horizon < option_maturity")
        if self.model not in MODEL_TAGS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.rebalance != "daily":
            raise ValueError("only daily rebalancing is supported")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("estimation_window", "hedge_horizon", "option_maturity",
                                               "model", "fixed_hurst", "sigma_delta", "rebalance",
                                               "fixed_sigma")}


@dataclass(frozen=True)
class BacktestRecord:
    start_date: dt.date
    model: str
    pnl_hedged: float
    pnl_unhedged: float
    hedge_ratios: tuple
    params_used: ModelParams
    price_start: float = float("nan")
    price_end: float = float("nan")


class SuiteResult(NamedTuple):
    records: list
    stats_hedged: StatsSummary
    stats_unhedged: StatsSummary
    red_factor: float
    failures: list = []


class ForwardVarianceStore:
    """Forward variance quotes keyed by ``(date, maturity)``; lookups never interpolate."""

    def __init__(self, series_by_maturity: dict | None = None):
        self._by_maturity: dict = {}
        for mat, s in (series_by_maturity or {}).items():
            self.add(mat, s)

    def add(self, maturity, series: DatedSeries):
        if series.kind != FORWARD_VARIANCE:
            series = DatedSeries(series.dates, series.values, FORWARD_VARIANCE)
        self._by_maturity[_as_date(maturity)] = series

    @property
    def maturities(self) -> list:
        return sorted(self._by_maturity)

    def series(self, maturity) -> DatedSeries:
        m = _as_date(maturity)
        if m not in self._by_maturity:
            raise KeyError(f"no forward variance quotes for maturity {m.isoformat()}")
        return self._by_maturity[m]

    def value(self, date, maturity) -> float:
        s = self.series(maturity)
        try:
            return s.value_at(date)
        except KeyError:
            raise KeyError(f"no forward variance quote for ({_as_date(date).isoformat()}, "
                           f"{_as_date(maturity).isoformat()})") from None

    def rows(self):
        """``(date, maturity, value)`` tuples sorted by date then maturity."""
        out = [(d, m, float(v)) for m, s in self._by_maturity.items() for d, v in zip(s.dates, s.values)]
        return sorted(out, key=lambda r: (r[0], r[1]))

    def __len__(self) -> int:
        return sum(len(s) for s in self._by_maturity.values())


def _matched_forward(fvs, maturity: dt.date, dates: list) -> np.ndarray:
    if isinstance(fvs, DatedSeries):
        series = fvs
    else:
        try:
            series = fvs.series(maturity)
        except KeyError as exc:
            raise BacktestError(str(exc)) from None
    out, missing = [], []
    for d in dates:
        try:
            out.append(series.value_at(d))
        except KeyError:
            missing.append(d.isoformat())
    if missing:
        raise BacktestError("missing forward variance quotes on " + ", ".join(missing))
    F = np.asarray(out)
    if np.any(F <= 0):
        raise BacktestError("non-positive forward variance")
    return F


def run_single_backtest(vix: DatedSeries, fvs, start, cfg: BacktestConfig,
                        calendar: BusinessCalendar = WEEKDAYS) -> BacktestRecord:
    """One hedging episode starting at ``start``.

    ``fvs`` is either a :class:`DatedSeries` already matched to the option
    maturity or a :class:`ForwardVarianceStore`.
    """
    start = _as_date(start)
    try:
        i0 = vix.index_of(start)
    except KeyError:
        raise BacktestError(f"no VIX close on start date {start.isoformat()}") from None
    if i0 < cfg.estimation_window:
        raise BacktestError(f"estimation window needs {cfg.estimation_window} closes before "
                            f"{start.isoformat()}, have {i0}")
    window = vix.values[i0 - cfg.estimation_window : i0]
    model = make_model(cfg.model, hurst=cfg.fixed_hurst, delta=cfg.sigma_delta, sigma=cfg.fixed_sigma).fit(window)
    params = model.params_

    maturity = working_day_offset(start, cfg.option_maturity, calendar)
    days = [working_day_offset(start, k, calendar) for k in range(cfg.hedge_horizon + 1)]
    F = _matched_forward(fvs, maturity, days)
    K = float(vix.values[i0])

    ratios = np.empty(cfg.hedge_horizon)
    for k in range(cfg.hedge_horizon):
        q = params.quote(F[k], K, (cfg.option_maturity - k) / DAYS_PER_YEAR)
        if k == 0:
            price_start = q.price
        ratios[k] = q.hedge_ratio
    price_end = params.quote(F[-1], K, (cfg.option_maturity - cfg.hedge_horizon) / DAYS_PER_YEAR).price
    hedge_gain = float(ratios @ np.diff(F))
    pnl_unhedged = price_end - price_start
    return BacktestRecord(start_date=start, model=cfg.model, pnl_hedged=pnl_unhedged - hedge_gain,
                          pnl_unhedged=pnl_unhedged, hedge_ratios=tuple(ratios), params_used=params,
                          price_start=price_start, price_end=price_end)


def _episode(vix, fvs, start, cfg, calendar):
    try:
        return run_single_backtest(vix, fvs, start, cfg, calendar), None
    except (BacktestError, ValueError, ArithmeticError) as exc:
        return None, (_as_date(start), str(exc))


def run_backtest_suite(vix: DatedSeries, fvs, starts, cfg: BacktestConfig,
                       calendar: BusinessCalendar = WEEKDAYS, n_jobs: int = 1) -> SuiteResult:
    """Run every start; failed episodes are collected rather than raised.

    Records come back sorted by start date whatever the execution order.
    """
    starts = sorted({_as_date(s) for s in starts})
    if n_jobs == 1:
        results = [_episode(vix, fvs, s, cfg, calendar) for s in starts]
    else:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=n_jobs)(delayed(_episode)(vix, fvs, s, cfg, calendar) for s in starts)
    records = [r for r, _ in results if r is not None]
    failures = [f for _, f in results if f is not None]
    if failures:
        log.warning("%d of %d episodes failed", len(failures), len(starts))
    if not records:
        detail = f"; first: {failures[0][1]}" if failures else ""
        raise BacktestError(f"all {len(starts)} episodes failed{detail}")
    hedged = summarize([r.pnl_hedged for r in records])
    unhedged = summarize([r.pnl_unhedged for r in records])
    red = reduction_factor(unhedged, hedged) if hedged.rmse > 0 else float("inf")
    return SuiteResult(records, hedged, unhedged, red, failures)


def hurst_sweep(vix: DatedSeries, fvs, starts, cfg: BacktestConfig, h_values,
                calendar: BusinessCalendar = WEEKDAYS) -> list:
    """Hedged-PnL RMSE of the rough model for each fixed Hurst exponent in ``h_values``."""
    out = []
    for h in h_values:
        if not 0 < h < 1:
            raise ValueError(f"Hurst value {h} outside (0, 1)")
        res = run_backtest_suite(vix, fvs, starts, replace(cfg, model="rfsv", fixed_hurst=float(h)), calendar)
        out.append((float(h), res.stats_hedged.rmse))
    return out


@dataclass
class SyntheticDataset:
    vix: DatedSeries
    fvs: ForwardVarianceStore
    starts: list = field(default_factory=list)


def generate_synthetic_dataset(params: FbmParams, C: float, n_days: int, cfg: BacktestConfig, seed: int,
                               substeps: int = 10, first_date=dt.date(2001, 1, 2),
                               calendar: BusinessCalendar = WEEKDAYS) -> SyntheticDataset:
    """VIX closes and matched forward variance swaps from one rough-volatility path.

    For every admissible start date the store holds ``F^T`` from the start to
    the maturity ``T = start + option_maturity``. ``starts`` lists the start
    dates whose estimation window and hedge horizon fit inside the data.
    """
    need = cfg.estimation_window + cfg.option_maturity + 1
    if n_days < need:
        raise ValueError(f"n_days must be at least {need}")
    dt_year = 1.0 / DAYS_PER_YEAR
    x, dW, kernel, n_burn = simulate_rl_log_vix(params, n_days - 1, dt_year, 1, seed, substeps)
    dates = calendar.date_range(first_date, n_days)
    vix = DatedSeries(dates, C * np.exp(x[0]))
    first_start = cfg.estimation_window
    last_start = n_days - 1 - cfg.option_maturity
    start_idx = np.arange(first_start, last_start + 1)
    lookback = cfg.option_maturity
    fam = forward_variance_family(C, dW[0], kernel, n_burn, substeps, start_idx + lookback, lookback)
    store = ForwardVarianceStore()
    for row, s in enumerate(start_idx):
        store.add(dates[s + lookback], DatedSeries(dates[s : s + lookback + 1], fam[row], FORWARD_VARIANCE))
    return SyntheticDataset(vix=vix, fvs=store, starts=[dates[s] for s in start_idx])
