"""Shared domain types, business-day arithmetic and PnL summary statistics."""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

#: Business days per year used for every day -> year conversion.
DAYS_PER_YEAR = 252

VIX_LEVEL = "vix-level"
FORWARD_VARIANCE = "forward-variance"
PRICE = "price"
_KINDS = (VIX_LEVEL, FORWARD_VARIANCE, PRICE)


def _as_date(d) -> dt.date:
    if isinstance(d, dt.datetime):
        return d.date()
    if isinstance(d, dt.date):
        return d
    if isinstance(d, np.datetime64):
        return d.astype("datetime64[D]").astype(dt.date)
    return dt.date.fromisoformat(str(d))


@dataclass(frozen=True)
class DatedSeries:
    """Ordered ``(date, value)`` observations.

    Parameters
    ----------
    dates : sequence of date-like
        Strictly increasing observation dates.
    values : array-like
        Finite observations; strictly positive for ``vix-level`` and
        ``forward-variance`` series.
    kind : str
        One of ``"vix-level"``, ``"forward-variance"``, ``"price"``.
    """

    dates: tuple
    values: np.ndarray
    kind: str = VIX_LEVEL

    def __post_init__(self):
        dates = tuple(_as_date(d) for d in self.dates)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.kind not in _KINDS:
            raise ValueError(f"unknown series kind {self.kind!r}")
        if len(dates) != values.size:
            raise ValueError("dates and values differ in length")
        for a, b in zip(dates, dates[1:]):
            if b <= a:
                raise ValueError(f"dates not strictly increasing at {b.isoformat()}")
        if not np.all(np.isfinite(values)):
            raise ValueError("series contains non-finite values")
        if self.kind != PRICE and np.any(values <= 0):
            bad = dates[int(np.argmax(values <= 0))]
            raise ValueError(f"non-positive {self.kind} value on {bad.isoformat()}")
        values.setflags(write=False)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.dates)

    def index_of(self, d) -> int:
        """Position of date ``d``; raises ``KeyError`` when absent."""
        d = _as_date(d)
        i = int(np.searchsorted(self._ordinals, d.toordinal()))
        if i >= len(self.dates) or self.dates[i] != d:
            raise KeyError(d.isoformat())
        return i

    def value_at(self, d) -> float:
        return float(self.values[self.index_of(d)])

    def window(self, start, end) -> "DatedSeries":
        """Sub-series with ``start <= date <= end``."""
        o = self._ordinals
        i = int(np.searchsorted(o, _as_date(start).toordinal(), side="left"))
        j = int(np.searchsorted(o, _as_date(end).toordinal(), side="right"))
        return DatedSeries(self.dates[i:j], self.values[i:j], self.kind)

    @property
    def _ordinals(self) -> np.ndarray:
        return np.fromiter((d.toordinal() for d in self.dates), dtype=np.int64, count=len(self.dates))


@dataclass(frozen=True)
class ForwardVarianceCurve:
    """Forward variance curve ``theta -> V_t^{t+theta}`` at one date."""

    thetas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if thetas.shape != values.shape or thetas.ndim != 1:
            raise ValueError("thetas and values must be 1-d arrays of equal length")
        if np.any(thetas < 0) or np.any(np.diff(thetas) <= 0):
            raise ValueError("thetas must be non-negative and strictly increasing")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("curve values must be finite and non-negative")
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "values", values)

    @classmethod
    def flat(cls, level: float, horizon: float, n: int = 2) -> "ForwardVarianceCurve":
        return cls(np.linspace(0.0, horizon, n), np.full(n, float(level)))

    def __call__(self, theta):
        """Linear interpolation; flat extrapolation beyond the last node."""
        return np.interp(theta, self.thetas, self.values)


@dataclass(frozen=True)
class StatsSummary:
    mean: float
    std_dev: float
    rmse: float
    count: int

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std_dev, "rmse": self.rmse, "count": self.count}


def summarize(samples: Iterable[float]) -> StatsSummary:
    """Mean, population standard deviation and root mean square of ``samples``.

    The population convention keeps ``rmse**2 == mean**2 + std_dev**2``.
    """
    x = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    # sorting makes the float sums independent of input order
    x = np.sort(x)
    mean = math.fsum(x) / x.size
    var = math.fsum((x - mean) ** 2) / x.size
    rmse = math.sqrt(math.fsum(x * x) / x.size)
    return StatsSummary(mean=mean, std_dev=math.sqrt(var), rmse=rmse, count=int(x.size))


def reduction_factor(no_hedge: StatsSummary, hedge: StatsSummary) -> float:
    """Ratio of unhedged to hedged RMSE."""
    if not hedge.rmse > 0:
        raise ValueError("degenerate hedge")
    return no_hedge.rmse / hedge.rmse


@dataclass(frozen=True)
class BusinessCalendar:
    """Weekday calendar with an optional holiday list."""

    holidays: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "holidays", tuple(sorted(_as_date(h) for h in self.holidays)))

    @classmethod
    def from_file(cls, path) -> "BusinessCalendar":
        """One ISO date per line; blank lines and ``#`` comments ignored."""
        with open(path) as fh:
            lines = [ln.split("#", 1)[0].strip() for ln in fh]
        return cls(tuple(ln for ln in lines if ln))

    @property
    def _np_holidays(self):
        return np.array([np.datetime64(h.isoformat()) for h in self.holidays], dtype="datetime64[D]")

    def is_business_day(self, d) -> bool:
        return bool(np.is_busday(np.datetime64(_as_date(d).isoformat()), holidays=self._np_holidays))

    def offset(self, d, n: int) -> dt.date:
        return working_day_offset(d, n, self)

    def date_range(self, start, n: int) -> list[dt.date]:
        """``n`` consecutive business days beginning at the first one on/after ``start``."""
        first = np.busday_offset(np.datetime64(_as_date(start).isoformat()), 0, roll="forward",
                                 holidays=self._np_holidays)
        days = np.busday_offset(first, np.arange(n), roll="forward", holidays=self._np_holidays)
        return [d.astype(dt.date) for d in days]

    def count(self, start, end) -> int:
        """Business days in ``[start, end)``."""
        return int(np.busday_count(np.datetime64(_as_date(start).isoformat()),
                                   np.datetime64(_as_date(end).isoformat()),
                                   holidays=self._np_holidays))


WEEKDAYS = BusinessCalendar()


def working_day_offset(d, n: int, calendar: BusinessCalendar = WEEKDAYS) -> dt.date:
    """The ``n``-th business day strictly after ``d`` (``d`` itself when ``n == 0``)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    d = _as_date(d)
    if n == 0:
        return d
    out = np.busday_offset(np.datetime64(d.isoformat()), n, roll="backward",
                           holidays=calendar._np_holidays)
    return out.astype(dt.date)


def years(n_days: float) -> float:
    """Business days to years."""
    return n_days / DAYS_PER_YEAR


def as_dates(ds: Sequence) -> list[dt.date]:
    return [_as_date(d) for d in ds]
