"""Simulation of the one-factor forward variance model and hedging experiments.

The spot follows ``dS = f(S) sqrt(V^t_t) [rho dW1 + sqrt(1-rho^2) dW2]`` and
every forward variance ``V^u`` is driven by ``dV^u_t = V^u_t g(u-t) dW1``. The
curve is stored on absolute maturities ``u_j = j*dt`` so each step multiplies
the live nodes in place by exact lognormal factors; the diagonal node
``V^{t_k}_{t_k}`` is frozen once reached and serves as spot variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import integrate

from .core import ForwardVarianceCurve
from .fbm import FbmParams, path_normals, simulate_rl_market, variance_increment
from .models import lognormal_quote_arrays
from .replication import PayoffSpec, h_function, h_prime

MAX_HISTORY_CELLS = 50_000_000


# ---------------------------------------------------------------------------
# kernels

@dataclass(frozen=True)
class RoughBergomiKernel:
    """``g(u) = eta * u**(H - 1/2)``."""

    eta: float
    hurst: float

    def __post_init__(self):
        if self.eta <= 0 or not 0 < self.hurst < 1:
            raise ValueError("need eta > 0 and 0 < hurst < 1")

    def __call__(self, u):
        return self.eta * np.asarray(u, dtype=float) ** (self.hurst - 0.5)

    def integral(self, a: float, b: float) -> float:
        p = self.hurst + 0.5
        return self.eta * (b ** p - a ** p) / p


@dataclass(frozen=True)
class FouKernel:
    """Kernel of a stationary fractional Ornstein-Uhlenbeck log-volatility.

    ``g(u) = eta u^(H-1/2) - eta lam exp(-lam u) int_0^u v^(H-1/2) exp(lam v) dv``.
    """

    eta: float
    lam: float
    hurst: float

    def __post_init__(self):
        if self.eta <= 0 or self.lam < 0 or not 0 < self.hurst < 1:
            raise ValueError("need eta > 0, lam >= 0 and 0 < hurst < 1")

    def _memory(self, u: float) -> float:
        if u == 0 or self.lam == 0:
            return 0.0
        a = self.hurst - 0.5
        # weight='alg' absorbs the v**a singularity at the origin
        val, _ = integrate.quad(lambda v: math.exp(-self.lam * (u - v)), 0.0, u,
                                weight="alg", wvar=(a, 0.0))
        return val

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        flat = np.array([self.eta * x ** (self.hurst - 0.5) - self.eta * self.lam * self._memory(x)
                         for x in u.reshape(-1)])
        return float(flat[0]) if u.ndim == 0 else flat.reshape(u.shape)

    def integral(self, a: float, b: float) -> float:
        p = self.hurst + 0.5
        power = self.eta * (b ** p - a ** p) / p
        if self.lam == 0:
            return power
        mem, _ = integrate.quad(self._memory, a, b)
        return power - self.eta * self.lam * mem


@dataclass(frozen=True)
class TabulatedKernel:
    """Piecewise-linear ``g`` through ``(lags, values)``, flat beyond the last lag."""

    lags: tuple
    values: tuple

    def __post_init__(self):
        lags = np.asarray(self.lags, dtype=float)
        if lags.size < 2 or lags.shape != np.shape(self.values) or np.any(np.diff(lags) <= 0) or lags[0] < 0:
            raise ValueError("tabulated kernel needs increasing non-negative lags and matching values")

    def __call__(self, u):
        out = np.interp(u, self.lags, self.values)
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, a: float, b: float) -> float:
        x = np.union1d(np.asarray(self.lags, dtype=float), [a, b])
        x = x[(x >= a) & (x <= b)]
        return float(np.trapezoid(self(x), x))


@dataclass(frozen=True)
class ZeroKernel:
    def __call__(self, u):
        return np.zeros_like(np.asarray(u, dtype=float)) if np.ndim(u) else 0.0

    def integral(self, a: float, b: float) -> float:
        return 0.0


# ---------------------------------------------------------------------------
# state and paths

@dataclass(frozen=True)
class MarketState:
    t: float
    S: float
    curve: ForwardVarianceCurve


@dataclass
class MarketPaths:
    """Output of :func:`simulate_market`.

    ``curves[p, k, j]`` is ``V^{u_j}_{t_k}`` for ``j >= k`` and the frozen
    realized value ``V^{u_j}_{u_j}`` for ``j < k``.
    """

    dt: float
    times: np.ndarray
    S: np.ndarray
    curves: np.ndarray
    dW1: np.ndarray
    dW2: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.S.shape[0]

    @property
    def spot_variance(self) -> np.ndarray:
        """``V^{t_k}_{t_k}`` for every path and step."""
        k = np.arange(self.times.size)
        return self.curves[:, k, k]

    def state(self, path: int, k: int) -> MarketState:
        v = self.curves[path, k, k:]
        return MarketState(float(self.times[k]), float(self.S[path, k]),
                           ForwardVarianceCurve(self.dt * np.arange(v.size), v))


def _node_values(initial_curve: ForwardVarianceCurve, n_nodes: int, dt: float) -> np.ndarray:
    u = dt * np.arange(n_nodes)
    if initial_curve.thetas[-1] < u[-1] - 1e-12:
        raise ValueError("initial curve does not cover the simulation horizon")
    v = initial_curve(u)
    if np.any(v <= 0):
        raise ValueError("initial curve must be strictly positive")
    return v


def _kernel_table(kernel, n_nodes: int, dt: float) -> np.ndarray:
    g = np.zeros(n_nodes)
    if n_nodes > 1:
        g[1:] = kernel(dt * np.arange(1, n_nodes))
    return g


def iter_market(kernel, f: PayoffSpec, rho: float, initial_curve: ForwardVarianceCurve, n_steps: int,
                dt: float, n_paths: int, seed: int, S0: float = 1.0) -> Iterator[tuple]:
    """Step through the model, yielding ``(k, S_k, nodes_k, dW1_k, dW2_k)``.

    ``nodes_k`` is the live ``(n_paths, n_steps + 1)`` node array at ``t_k``;
    it is mutated in place on the next step. ``dW*_k`` drive ``t_k -> t_{k+1}``
    and are ``None`` on the last yield.
    """
    if not -1 < rho < 1:
        raise ValueError("rho must lie in (-1, 1)")
    if dt <= 0 or n_steps < 1:
        raise ValueError("need dt > 0 and n_steps >= 1")
    n_nodes = n_steps + 1
    nodes = np.tile(_node_values(initial_curve, n_nodes, dt), (n_paths, 1))
    g = _kernel_table(kernel, n_nodes, dt)
    g2h = 0.5 * g * g * dt
    z = path_normals(seed, n_paths, (2, n_steps))
    sqdt = math.sqrt(dt)
    rho_bar = math.sqrt(1 - rho * rho)
    logS = np.full(n_paths, math.log(S0))
    for k in range(n_steps):
        dW1 = z[:, 0, k] * sqdt
        dW2 = z[:, 1, k] * sqdt
        yield k, np.exp(logS), nodes, dW1, dW2
        S = np.exp(logS)
        v = nodes[:, k]
        scale = f.f(S) / S
        vol = scale * np.sqrt(v)
        logS = logS + vol * (rho * dW1 + rho_bar * dW2) - 0.5 * vol * vol * dt
        lags = np.arange(1, n_nodes - k)
        nodes[:, k + 1:] *= np.exp(g[lags][None, :] * dW1[:, None] - g2h[lags][None, :])
    yield n_steps, np.exp(logS), nodes, None, None


def simulate_market(kernel, f: PayoffSpec, rho: float, initial_curve: ForwardVarianceCurve, n_steps: int,
                    dt: float, n_paths: int, seed: int, S0: float = 1.0) -> MarketPaths:
    """Simulate ``n_paths`` paths of spot and forward variance curve.

    Curve nodes sit at ``u_j = j*dt``, ``j = 0..n_steps``. Deterministic given ``seed``.
    """
    n_nodes = n_steps + 1
    if n_paths * n_nodes * n_nodes > MAX_HISTORY_CELLS:
        raise MemoryError("curve history too large; use iter_market for streaming experiments")
    S = np.empty((n_paths, n_nodes))
    curves = np.empty((n_paths, n_nodes, n_nodes))
    dW1 = np.zeros((n_paths, n_steps))
    dW2 = np.zeros((n_paths, n_steps))
    for k, s, nodes, w1, w2 in iter_market(kernel, f, rho, initial_curve, n_steps, dt, n_paths, seed, S0):
        S[:, k] = s
        curves[:, k, :] = nodes
        if w1 is not None:
            dW1[:, k] = w1
            dW2[:, k] = w2
    return MarketPaths(dt=dt, times=dt * np.arange(n_nodes), S=S, curves=curves, dW1=dW1, dW2=dW2)


def _trap_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n, dt)
    if n:
        w[0] = w[-1] = 0.5 * dt
    if n == 1:
        w[0] = 0.0
    return w


def _step_index(t: float, dt: float, limit: int) -> int:
    k = int(round(t / dt))
    if abs(k * dt - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"time {t} is not a grid date")
    if k < 0 or k > limit:
        raise ValueError(f"time {t} beyond curve coverage")
    return k


def _varswap_from_nodes(diag: np.ndarray, nodes: np.ndarray, k: int, K: int, dt: float) -> np.ndarray:
    realized = diag[..., : k + 1] @ _trap_weights(k + 1, dt)
    expected = nodes[..., k : K + 1] @ _trap_weights(K - k + 1, dt)
    return realized + expected


def varswap_value(paths: MarketPaths, T: float, t: float) -> np.ndarray:
    """Replication portfolio value ``U^T_t`` on every path.

    Realized leg ``int_0^t V^u_u du`` plus expected leg ``int_t^T V^u_t du``,
    both by trapezoid on the node grid.
    """
    last = paths.times.size - 1
    K = _step_index(T, paths.dt, last)
    k = _step_index(t, paths.dt, last)
    if k > K:
        raise ValueError("t must not exceed T")
    return _varswap_from_nodes(paths.spot_variance, paths.curves[:, k, :], k, K, paths.dt)


def _dg_from_nodes(nodes: np.ndarray, k: int, K: int, dt: float, g_table: np.ndarray, first_cell: float):
    """``int_{t_k}^{T} V^u g(u - t_k) du`` with the first cell integrated analytically."""
    if K <= k:
        return np.zeros(nodes.shape[:-1])
    live = nodes[..., k + 1 : K + 1]
    w = _trap_weights(K - k, dt)
    out = (live * g_table[1 : K - k + 1]) @ w
    return out + first_cell * nodes[..., k + 1]


def dg_u(state: MarketState, kernel, T: float) -> float:
    """``D_g U^T_t = int_t^T V^u_t g(u - t) du`` from a single market state.

    The curve's own theta nodes define the grid (uniform spacing expected).
    """
    theta = state.curve.thetas
    tau = T - state.t
    if tau < 0 or tau > theta[-1] + 1e-12:
        raise ValueError("T beyond curve coverage")
    if tau == 0:
        return 0.0
    h = float(theta[1] - theta[0])
    m = int(round(tau / h))
    if not np.allclose(np.diff(theta[: m + 1]), h) or abs(m * h - tau) > 1e-9 * max(1, tau):
        raise ValueError("dg_u needs a uniform curve grid containing T - t")
    g = _kernel_table(kernel, m + 1, h)
    return float(_dg_from_nodes(state.curve.values[: m + 1], 0, m, h, g, kernel.integral(0.0, h)))


# ---------------------------------------------------------------------------
# experiments

@dataclass
class UeqPanel:
    """Per-step increments of ``U^T`` and the predicted ``D_g U^T dW1``."""

    dU: np.ndarray
    predicted: np.ndarray

    def regression(self):
        """Slope through the origin and R^2 of ``dU`` on ``predicted``."""
        x = self.predicted.reshape(-1)
        y = self.dU.reshape(-1)
        slope = float(x @ y / (x @ x))
        resid = y - slope * x
        r2 = 1.0 - float(resid @ resid) / float(((y - y.mean()) ** 2).sum())
        return slope, r2


def ueq_panel(kernel, rho: float, initial_curve: ForwardVarianceCurve, T: float, n_steps: int,
              n_paths: int, seed: int, t_max: float = None) -> UeqPanel:
    """Simulate and collect ``(dU^T_t, D_gU^T_t dW1_t)`` for steps with ``t < t_max``."""
    dt = T / n_steps
    g = _kernel_table(kernel, n_steps + 1, dt)
    first = kernel.integral(0.0, dt)
    k_max = n_steps if t_max is None else min(n_steps, int(round(t_max / dt)))
    diag = np.zeros((n_paths, n_steps + 1))
    dU, pred = [], []
    prev_u = prev_pred = None
    for k, _, nodes, w1, _ in iter_market(kernel, PayoffSpec.linear(), rho, initial_curve, n_steps, dt,
                                          n_paths, seed):
        diag[:, k] = nodes[:, k]
        u_now = _varswap_from_nodes(diag, nodes, k, n_steps, dt)
        if prev_u is not None:
            dU.append(u_now - prev_u)
            pred.append(prev_pred)
        if k >= k_max or w1 is None:
            break
        prev_u = u_now
        prev_pred = _dg_from_nodes(nodes, k, n_steps, dt, g, first) * w1
    return UeqPanel(np.column_stack(dU), np.column_stack(pred))


def log_contract_replication_experiment(kernel, rho: float, initial_curve: ForwardVarianceCurve, T: float,
                                        n_steps: int, n_paths: int, seed: int, S0: float = 1.0) -> np.ndarray:
    """Terminal error of replicating ``h(S_T)`` by delta trading plus the realized variance leg.

    ``h(S_T) - [h(S_0) + sum h'(S_k) dS_k + int_0^T V^u_u du]`` per path, for linear ``f``.
    """
    spec = PayoffSpec.linear()
    dt = T / n_steps
    gains = np.zeros(n_paths)
    diag = np.zeros((n_paths, n_steps + 1))
    prev_S = None
    for k, S, nodes, _, _ in iter_market(kernel, spec, rho, initial_curve, n_steps, dt, n_paths, seed, S0):
        diag[:, k] = nodes[:, k]
        if prev_S is not None:
            gains += h_prime(spec, prev_S) * (S - prev_S)
        prev_S = S
    realized = diag @ _trap_weights(n_steps + 1, dt)
    return h_function(spec, prev_S) - (h_function(spec, S0) + gains + realized)


@dataclass
class HedgeExperiment:
    hedged: np.ndarray
    unhedged: np.ndarray
    price0: np.ndarray


def delta_hedge_experiment(params: FbmParams, C: float, K, T: float, n_steps: int, n_paths: int,
                           seed: int) -> HedgeExperiment:
    """Hold the rough-model hedge ratio in the forward variance swap, rebalanced every step.

    ``K=None`` strikes each path at the money (``K = VIX_0``).
    """
    dt = T / n_steps
    mkt = simulate_rl_market(params, C, n_steps, dt, T, n_paths, seed)
    vix_T = mkt.vix[:, n_steps]
    strikes = mkt.vix[:, 0] if K is None else np.full(n_paths, float(K))
    fwd = mkt.forward[:, : n_steps + 1]
    taus = T - dt * np.arange(n_steps)
    w = np.array([variance_increment(params, tau) for tau in taus])
    price, ratio = lognormal_quote_arrays(fwd[:, :n_steps], strikes[:, None], w[None, :])
    payoff = np.maximum(vix_T - strikes, 0.0)
    unhedged = payoff - price[:, 0]
    hedged = unhedged - np.sum(ratio * np.diff(fwd, axis=1), axis=1)
    return HedgeExperiment(hedged=hedged, unhedged=unhedged, price0=price[:, 0])
