"""VIX call pricers and hedge ratios quoted against the forward variance swap.

Every pricer maps ``(F, K, tau)`` to a :class:`ModelQuote` where ``F`` is the
forward variance swap ``E[VIX_T^2 | F_t]`` for the option maturity, ``K`` the
strike in VIX units and ``tau`` the time to maturity in years. The hedge ratio
is the number of forward variance swaps held per option.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import integrate
from scipy.special import ive, ndtr
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .estimators import (LEVEL_INCREMENTS, LOG_INCREMENTS, RoughVolatilityEstimator,
                         estimate_gamma_quadratic_variation)
from .fbm import FbmParams, variance_increment

CIR_BUMP = 1e-4
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelQuote:
    price: float
    hedge_ratio: float


def _check_inputs(F, K, tau):
    if not F > 0:
        raise ValueError(f"forward variance must be positive, got {F}")
    if not K > 0:
        raise ValueError(f"strike must be positive, got {K}")
    if not tau > 0:
        raise ValueError(f"time to maturity must be positive, got {tau}")


def lognormal_quote(F: float, K: float, w: float) -> ModelQuote:
    """Call on ``VIX_T`` when ``log VIX_T`` is Gaussian with variance ``w`` and ``E[VIX_T^2] = F``."""
    sqrt_f = math.sqrt(F)
    if w <= 0:
        itm = sqrt_f > K
        return ModelQuote(max(sqrt_f - K, 0.0), (1.0 if itm else 0.0) / (2 * sqrt_f))
    damp = math.exp(-0.5 * w)
    future = sqrt_f * damp
    sd = math.sqrt(w)
    d1 = (math.log(future / K) + 0.5 * w) / sd
    d2 = d1 - sd
    n1 = float(ndtr(d1))
    price = future * n1 - K * float(ndtr(d2))
    return ModelQuote(price, n1 * damp / (2 * sqrt_f))


def lognormal_quote_arrays(F, K, w):
    """Vectorized :func:`lognormal_quote`; returns ``(price, hedge_ratio)`` arrays."""
    F, K, w = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (F, K, w)))
    sqrt_f = np.sqrt(F)
    pos = w > 0
    ws = np.where(pos, w, 1.0)
    damp = np.exp(-0.5 * ws)
    sd = np.sqrt(ws)
    d1 = (np.log(sqrt_f * damp / K) + 0.5 * ws) / sd
    n1 = ndtr(d1)
    price = np.where(pos, sqrt_f * damp * n1 - K * ndtr(d1 - sd), np.maximum(sqrt_f - K, 0.0))
    ratio = np.where(pos, n1 * damp, (sqrt_f > K).astype(float)) / (2 * sqrt_f)
    return price, ratio


def bs_quote(F: float, K: float, gamma: float, tau: float) -> ModelQuote:
    """Lognormal VIX with constant vol-of-VIX ``gamma``."""
    _check_inputs(F, K, tau)
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return lognormal_quote(F, K, gamma * gamma * tau)


def rfsv_quote(F: float, K: float, params: FbmParams, tau: float) -> ModelQuote:
    """Rough fractional model: lognormal VIX with variance ``variance_increment(params, tau)``."""
    _check_inputs(F, K, tau)
    return lognormal_quote(F, K, variance_increment(params, tau))


def cir_transition_density(v0: float, x, gamma: float, T: float):
    """Transition law of ``dX = gamma sqrt(X) dW`` after time ``T``.

    Returns ``(density(x), atom)`` where ``atom`` is the absorption mass at 0.
    With ``u = gamma^2 T / 4`` the continuous part is
    ``(1/2u) sqrt(v0/x) exp(-(v0+x)/2u) I_1(sqrt(v0 x)/u)``.
    """
    if not (v0 > 0 and gamma > 0 and T > 0):
        raise ValueError("v0, gamma and T must be positive")
    u = gamma * gamma * T / 4.0
    x = np.asarray(x, dtype=float)
    xp = np.where(x > 0, x, 1.0)
    z = np.sqrt(v0 * xp) / u
    # exp(-(v0+x)/2u) I1(z) = exp(-(sqrt v0 - sqrt x)^2 / 2u) ive(1, z)
    dens = (0.5 / u) * np.sqrt(v0 / xp) * np.exp(-(math.sqrt(v0) - np.sqrt(xp)) ** 2 / (2 * u)) * ive(1, z)
    dens = np.where(x > 0, dens, 0.0)
    atom = math.exp(-v0 / (2 * u))
    return (float(dens) if dens.ndim == 0 else dens), atom


def cir_upper_limit(v0: float, u: float) -> float:
    a = v0 + 40 * u * max(1.0, math.sqrt(v0 / u))
    b = (math.sqrt(v0) + math.sqrt(100 * u)) ** 2
    return max(a, b)


def _cir_price(F: float, K: float, gamma: float, tau: float) -> float:
    if gamma == 0:
        return max(math.sqrt(F) - K, 0.0)
    u = gamma * gamma * tau / 4.0
    lo, hi = K * K, cir_upper_limit(F, u)
    if lo >= hi:
        return 0.0

    def integrand(x):
        return (math.sqrt(x) - K) * cir_transition_density(F, x, gamma, tau)[0]

    points = [p for p in (F,) if lo < p < hi]
    val, err = integrate.quad(integrand, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
                              limit=400, points=points or None)
    if not err <= 1e-10:
        raise QuadratureError(f"CIR price quadrature did not converge (error estimate {err:.3g})")
    return val


def cir_quote(F: float, K: float, gamma: float, tau: float) -> ModelQuote:
    """Driftless CIR on ``VIX^2``; price by quadrature, hedge ratio by central difference."""
    _check_inputs(F, K, tau)
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    price = _cir_price(F, K, gamma, tau)
    if gamma == 0:
        return ModelQuote(price, (1.0 if math.sqrt(F) > K else 0.0) / (2 * math.sqrt(F)))
    h = CIR_BUMP * F
    up = _cir_price(F + h, K, gamma, tau)
    dn = _cir_price(F - h, K, gamma, tau)
    return ModelQuote(price, max((up - dn) / (2 * h), 0.0))


# ---------------------------------------------------------------------------
# parameter sets and estimator-style wrappers

@dataclass(frozen=True)
class BlackScholesParams:
    gamma: float
    tag = "bs"

    def quote(self, F, K, tau) -> ModelQuote:
        return bs_quote(F, K, self.gamma, tau)


@dataclass(frozen=True)
class CirParams:
    gamma: float
    tag = "cir"

    def quote(self, F, K, tau) -> ModelQuote:
        return cir_quote(F, K, self.gamma, tau)


@dataclass(frozen=True)
class RfsvParams:
    sigma: float
    hurst: float
    tag = "rfsv"

    def __post_init__(self):
        FbmParams(self.hurst, self.sigma)

    def quote(self, F, K, tau) -> ModelQuote:
        return rfsv_quote(F, K, FbmParams(self.hurst, self.sigma), tau)


ModelParams = Union[BlackScholesParams, CirParams, RfsvParams]


class _VIXModel(BaseEstimator):
    def quote(self, F, K, tau) -> ModelQuote:
        check_is_fitted(self, "params_")
        return self.params_.quote(F, K, tau)

    def predict(self, X):
        """Prices for rows ``(F, K, tau)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self.quote(*row).price for row in X])


class BlackScholesVIX(_VIXModel):
    """Lognormal VIX model; ``fit`` estimates ``gamma`` from log-increments of a VIX window."""

    def __init__(self, gamma=None):
        self.gamma = gamma

    def fit(self, X, y=None):
        g = self.gamma if self.gamma is not None else estimate_gamma_quadratic_variation(X, LOG_INCREMENTS)
        self.params_ = BlackScholesParams(float(g))
        return self


class CirVIX(_VIXModel):
    """Driftless CIR model on VIX^2; ``fit`` estimates ``gamma`` from level increments."""

    def __init__(self, gamma=None):
        self.gamma = gamma

    def fit(self, X, y=None):
        g = self.gamma if self.gamma is not None else estimate_gamma_quadratic_variation(X, LEVEL_INCREMENTS)
        self.params_ = CirParams(float(g))
        return self


class RfsvVIX(_VIXModel):
    """Rough fractional model; ``hurst=None`` re-estimates the exponent on each window."""

    def __init__(self, hurst=0.377, sigma=None, delta: int = 1):
        self.hurst = hurst
        self.sigma = sigma
        self.delta = delta

    def fit(self, X, y=None):
        if self.sigma is not None and self.hurst is not None:
            self.params_ = RfsvParams(float(self.sigma), float(self.hurst))
            return self
        est = RoughVolatilityEstimator(hurst=self.hurst, delta=self.delta).fit(X)
        self.params_ = RfsvParams(est.sigma_, est.hurst_)
        return self


MODEL_TAGS = ("bs", "cir", "rfsv")


def make_model(tag: str, hurst=0.377, delta: int = 1, sigma=None) -> _VIXModel:
    if tag == "bs":
        return BlackScholesVIX()
    if tag == "cir":
        return CirVIX()
    if tag == "rfsv":
        return RfsvVIX(hurst=hurst, sigma=sigma, delta=delta)
    raise ValueError(f"unknown model {tag!r}; expected one of {MODEL_TAGS}")


# ---------------------------------------------------------------------------
# Monte Carlo oracle

@dataclass(frozen=True)
class LognormalLaw:
    """``log VIX_T ~ N(mu, w)`` with ``E[VIX_T^2] = F``."""

    F: float
    w: float

    def sample_variance(self, n: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(n)
        return self.F * np.exp(2 * math.sqrt(self.w) * z - 2 * self.w)


@dataclass(frozen=True)
class CirEulerLaw:
    """Full-truncation Euler scheme for ``dX = gamma sqrt(X) dW`` over ``T`` years."""

    v0: float
    gamma: float
    T: float
    n_substeps: int = 200

    def sample_variance(self, n: int, rng: np.random.Generator) -> np.ndarray:
        x = np.full(n, float(self.v0))
        h = self.T / self.n_substeps
        vol = self.gamma * math.sqrt(h)
        for _ in range(self.n_substeps):
            x += vol * np.sqrt(np.maximum(x, 0.0)) * rng.standard_normal(n)
        return np.maximum(x, 0.0)


@dataclass(frozen=True)
class CirExactLaw:
    """Exact driftless CIR draw: ``X_T = u * chi2_{2N}`` with ``N ~ Poisson(v0 / 2u)``, ``u = gamma^2 T / 4``.

    ``N = 0`` gives the absorbed mass at zero.
    """

    v0: float
    gamma: float
    T: float

    def sample_variance(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = self.gamma * self.gamma * self.T / 4.0
        counts = rng.poisson(self.v0 / (2 * u), n)
        return u * rng.gamma(counts, 2.0)


def mc_price_oracle(terminal_law, K: float, n_draws: int, seed: int, chunk: int = 250_000):
    """Monte Carlo ``E[(sqrt(X_T) - K)_+]``; returns ``(price, std_error)``.

    ``K`` may be an array, in which case the same draws price every strike.
    """
    if n_draws < 10_000:
        raise ValueError("n_draws must be at least 1e4")
    rng = np.random.default_rng(seed)
    strikes = np.atleast_1d(np.asarray(K, dtype=float))
    s1 = np.zeros(strikes.size)
    s2 = np.zeros(strikes.size)
    shift = None
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        vix = np.sqrt(terminal_law.sample_variance(m, rng))
        pay = np.maximum(vix[:, None] - strikes[None, :], 0.0)
        if shift is None:
            shift = pay[0].copy()
        pay -= shift
        s1 += pay.sum(axis=0)
        s2 += (pay * pay).sum(axis=0)
        done += m
    centred = s1 / n_draws
    mean = shift + centred
    var = np.maximum(s2 / n_draws - centred * centred, 0.0)
    se = np.sqrt(var / (n_draws - 1))
    if np.ndim(K) == 0:
        return float(mean[0]), float(se[0])
    return mean, se
