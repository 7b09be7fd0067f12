"""Realized-moment estimators for the roughness and volatility parameters.

The functional API (``m_q_delta``, ``estimate_hurst``, ...) works on plain
series. ``HurstEstimator``, ``RoughVolatilityEstimator`` and
``QuadraticVariationEstimator`` wrap it with the scikit-learn estimator
protocol so the fits can sit inside pipelines and grid searches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import DAYS_PER_YEAR, DatedSeries

DEFAULT_LAGS = tuple(range(1, 31))
LOG_INCREMENTS = "log-increments"
LEVEL_INCREMENTS = "level-increments"


class InsufficientDataError(ValueError):
    """Raised when a window is too short; ``required`` holds the needed length."""

    def __init__(self, required: int, got: int):
        super().__init__(f"need at least {required} observations, got {got}")
        self.required = required
        self.got = got


@dataclass(frozen=True)
class HurstFit:
    hurst: float
    intercept: float
    lags_used: tuple
    r_squared: float
    moments: tuple = field(default=(), compare=False)


def _levels(series) -> np.ndarray:
    values = series.values if isinstance(series, DatedSeries) else series
    x = np.asarray(values, dtype=float).reshape(-1)
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise ValueError("levels must be finite and positive")
    return x


def m_q_delta(series, q: float, delta: int) -> float:
    """Mean of ``|log VIX_{k delta} - log VIX_{(k-1) delta}|**q`` over non-overlapping increments."""
    if q <= 0:
        raise ValueError("q must be positive")
    if delta < 1:
        raise ValueError("delta must be >= 1")
    logs = np.log(_levels(series))
    if logs.size < 2 * delta:
        raise InsufficientDataError(2 * delta, logs.size)
    n_inc = (logs.size - 1) // delta
    sampled = logs[: n_inc * delta + 1 : delta]
    return float(np.mean(np.abs(np.diff(sampled)) ** q))


def fit_power_law(lags, moments) -> HurstFit:
    """OLS of ``log m(2, lag)`` on ``log lag``; the Hurst exponent is half the slope."""
    lags = np.asarray(lags, dtype=float)
    m = np.asarray(moments, dtype=float)
    if lags.size < 2 or np.unique(lags).size < 2:
        raise ValueError("need at least two distinct lags")
    if np.all(m == 0):
        raise ValueError("constant series")
    if np.any(m <= 0):
        raise ValueError("zero moment at some lag; cannot take logs")
    x, y = np.log(lags), np.log(m)
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return HurstFit(hurst=float(slope / 2), intercept=float(intercept),
                    lags_used=tuple(int(v) for v in lags), r_squared=r2, moments=tuple(m))


def estimate_hurst(series, lags=DEFAULT_LAGS) -> HurstFit:
    """Half slope of ``m(2, lag)`` against ``lag`` in log-log coordinates (lags in days)."""
    lags = sorted(set(int(v) for v in lags))
    if len(lags) < 2:
        raise ValueError("need at least two distinct lags")
    moments = [m_q_delta(series, 2.0, lag) for lag in lags]
    return fit_power_law(lags, moments)


def estimate_sigma_rfsv(series, hurst: float, delta: int = 1) -> float:
    """``sqrt(m(2, delta) / delta**(2H))`` with ``delta`` measured in years."""
    m2 = m_q_delta(series, 2.0, delta)
    return math.sqrt(m2 / (delta / DAYS_PER_YEAR) ** (2 * hurst))


def estimate_gamma_quadratic_variation(series, mode: str = LOG_INCREMENTS) -> float:
    """Annualized vol-of-VIX from daily quadratic variation.

    ``log-increments`` (lognormal model): ``gamma^2 = sum (d log VIX)^2 / (n dt)``.
    ``level-increments`` (driftless CIR): ``gamma^2 = 4 sum (d VIX)^2 / (n dt)``.
    """
    x = _levels(series)
    if x.size < 2:
        raise InsufficientDataError(2, x.size)
    dt = 1.0 / DAYS_PER_YEAR
    if mode == LOG_INCREMENTS:
        inc = np.diff(np.log(x))
        scale = 1.0
    elif mode == LEVEL_INCREMENTS:
        inc = np.diff(x)
        scale = 4.0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return math.sqrt(scale * float(np.sum(inc * inc)) / (inc.size * dt))


class HurstEstimator(BaseEstimator):
    """Log-log regression of second moments of log-VIX increments.

    Parameters
    ----------
    lags : sequence of int
        Lags in business days, default 1..30.

    Attributes
    ----------
    hurst_ : float
    fit_ : HurstFit
    """

    def __init__(self, lags=DEFAULT_LAGS):
        self.lags = lags

    def fit(self, X, y=None):
        self.fit_ = estimate_hurst(X, self.lags)
        self.hurst_ = self.fit_.hurst
        return self

    def transform(self, X):
        """Second moments ``m(2, lag)`` of ``X`` at the fitted lags."""
        check_is_fitted(self, "fit_")
        return np.array([m_q_delta(X, 2.0, lag) for lag in self.fit_.lags_used])


class RoughVolatilityEstimator(BaseEstimator):
    """Vol-of-log-VIX under a fixed (or jointly estimated) Hurst exponent.

    With ``hurst=None`` the exponent is estimated on the same window first.
    """

    def __init__(self, hurst=0.377, delta: int = 1, lags=DEFAULT_LAGS):
        self.hurst = hurst
        self.delta = delta
        self.lags = lags

    def fit(self, X, y=None):
        if self.hurst is None:
            lags = [lag for lag in self.lags if 2 * lag <= len(X)]
            self.hurst_ = min(max(estimate_hurst(X, lags).hurst, 1e-3), 1 - 1e-3)
        else:
            self.hurst_ = float(self.hurst)
        self.sigma_ = estimate_sigma_rfsv(X, self.hurst_, self.delta)
        return self


class QuadraticVariationEstimator(BaseEstimator):
    """Vol-of-VIX ``gamma`` from daily quadratic variation (see ``estimate_gamma_quadratic_variation``)."""

    def __init__(self, mode: str = LOG_INCREMENTS):
        self.mode = mode

    def fit(self, X, y=None):
        self.gamma_ = estimate_gamma_quadratic_variation(X, self.mode)
        return self
