"""Static replication of weighted variance swaps and forward variance extraction."""

from __future__ import annotations

import datetime as dt
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import ForwardVarianceCurve

TAIL_TOLERANCE = 1e-6


class ReplicationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PayoffSpec:
    """Local-volatility scale ``f`` of the underlying: linear, or tabulated on a grid.

    A tabulated ``f`` is interpolated linearly and held flat outside its grid.
    """

    kind: str = "linear"
    grid: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("linear", "tabulated"):
            raise ValueError(f"unknown payoff kind {self.kind!r}")
        if self.kind == "tabulated":
            g = np.asarray(self.grid, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if g.size < 2 or g.shape != v.shape or np.any(np.diff(g) <= 0):
                raise ValueError("tabulated f needs an increasing grid and matching values")
            if np.any(v <= 0):
                raise ValueError("f must be strictly positive")

    @classmethod
    def linear(cls) -> "PayoffSpec":
        return cls("linear")

    @classmethod
    def tabulated(cls, grid, values) -> "PayoffSpec":
        return cls("tabulated", tuple(map(float, grid)), tuple(map(float, values)))

    def f(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return x
        return np.interp(x, self.grid, self.values)

    def weight(self, K):
        """Strike weight ``h''(K) = 2 / f(K)^2``."""
        return 2.0 / self.f(K) ** 2


def h_function(spec: PayoffSpec, x: float, n_nodes: int = 4001) -> float:
    """``h(x) = int_1^x int_1^y 2/f(z)^2 dz dy``.

    Closed form ``2(x-1) - 2 log x`` for linear ``f``; otherwise the
    equivalent single integral ``int_1^x (x - z) 2/f(z)^2 dz`` by trapezoid.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise ValueError("h is defined for x > 0 only")
    if spec.kind == "linear":
        out = 2.0 * (xa - 1.0) - 2.0 * np.log(xa)
        return float(out) if out.ndim == 0 else out
    if xa.ndim:
        return np.array([h_function(spec, float(v), n_nodes) for v in xa.reshape(-1)]).reshape(xa.shape)
    x = float(xa)
    if x == 1.0:
        return 0.0
    z = np.linspace(1.0, x, n_nodes)
    return float(np.trapezoid((x - z) * spec.weight(z), z))


def h_prime(spec: PayoffSpec, x, n_nodes: int = 4001):
    if spec.kind == "linear":
        return 2.0 - 2.0 / np.asarray(x, dtype=float)
    if np.ndim(x):
        return np.array([h_prime(spec, float(v), n_nodes) for v in np.reshape(x, -1)]).reshape(np.shape(x))
    z = np.linspace(1.0, float(x), n_nodes)
    return float(np.trapezoid(spec.weight(z), z))


@dataclass(frozen=True)
class OptionGrid:
    date: dt.date
    maturity: dt.date
    strikes: np.ndarray
    call_prices: np.ndarray
    put_prices: np.ndarray
    spot: float
    monotonicity_tolerance: float = 1e-6

    def __post_init__(self):
        k = np.asarray(self.strikes, dtype=float)
        c = np.asarray(self.call_prices, dtype=float)
        p = np.asarray(self.put_prices, dtype=float)
        if not (k.shape == c.shape == p.shape) or k.ndim != 1:
            raise ValueError("strikes, calls and puts must be 1-d arrays of equal length")
        if np.any(k <= 0) or np.any(np.diff(k) <= 0):
            raise ValueError("strikes must be positive and strictly increasing")
        tol = self.monotonicity_tolerance
        if np.any(np.diff(c) > tol):
            raise ValueError("call prices increase with strike")
        if np.any(np.diff(p) < -tol):
            raise ValueError("put prices decrease with strike")
        object.__setattr__(self, "strikes", k)
        object.__setattr__(self, "call_prices", c)
        object.__setattr__(self, "put_prices", p)


class ReplicationPrice(float):
    """A float carrying the warnings raised while computing it."""

    warnings: tuple

    def __new__(cls, value, warns=()):
        obj = super().__new__(cls, value)
        obj.warnings = tuple(warns)
        return obj


def static_replication_price(grid: OptionGrid, spec: PayoffSpec) -> ReplicationPrice:
    """Value of the option strip replicating the weighted variance swap.

    Puts below spot and calls above spot are weighted by ``2/f(K)^2`` and
    integrated by trapezoid; prices outside the strike grid are taken as zero.
    """
    k, c, p, s = grid.strikes, grid.call_prices, grid.put_prices, grid.spot
    if not (k[0] <= s <= k[-1]):
        raise ValueError("strike grid does not bracket spot")
    c_s = float(np.interp(s, k, c))
    p_s = float(np.interp(s, k, p))
    lo = k < s
    hi = k > s
    k_put = np.concatenate([k[lo], [s]])
    v_put = np.concatenate([p[lo], [p_s]])
    k_call = np.concatenate([[s], k[hi]])
    v_call = np.concatenate([[c_s], c[hi]])
    value = (np.trapezoid(v_put * spec.weight(k_put), k_put)
             + np.trapezoid(v_call * spec.weight(k_call), k_call))
    warns = []
    if c[-1] > TAIL_TOLERANCE * s:
        warns.append(f"call tail not converged: price {c[-1]:.3g} at strike {k[-1]:.6g}")
    if p[0] > TAIL_TOLERANCE * s:
        warns.append(f"put tail not converged: price {p[0]:.3g} at strike {k[0]:.6g}")
    for w in warns:
        warnings.warn(w, ReplicationWarning, stacklevel=2)
    return ReplicationPrice(value, warns)


def forward_variance_from_swaps(thetas, U, tolerance: float = 1e-10) -> ForwardVarianceCurve:
    """Differentiate swap values ``U(theta)`` in ``theta``.

    Central differences inside the grid, one-sided at the two ends.
    """
    thetas = np.asarray(thetas, dtype=float)
    U = np.asarray(U, dtype=float)
    if thetas.size < 2 or thetas.shape != U.shape:
        raise ValueError("need at least two maturities with matching swap values")
    if np.any(np.diff(thetas) <= 0):
        raise ValueError("maturities must be strictly increasing")
    if np.any(np.diff(U) < -tolerance):
        raise ValueError("calendar arbitrage in swap quotes")
    v = np.gradient(U, thetas, edge_order=1)
    if np.any(v < 0):
        warnings.warn("negative forward variance clipped to zero", ReplicationWarning, stacklevel=2)
        v = np.maximum(v, 0.0)
    return ForwardVarianceCurve(thetas, v)
