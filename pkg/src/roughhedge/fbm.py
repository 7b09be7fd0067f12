"""Fractional Gaussian machinery.

Holds the conditional-variance function used by the rough pricer, the exact
fBm covariance with a Cholesky path sampler, and a Riemann-Liouville market
simulator that produces joint (VIX, forward variance swap) paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

MAX_CHOLESKY_STEPS = 4096
BURN_IN_YEARS = 2.0


@dataclass(frozen=True)
class FbmParams:
    """Roughness ``hurst`` and vol-of-log-VIX ``sigma`` (per sqrt year)."""

    hurst: float
    sigma: float

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise ValueError(f"hurst must lie in (0, 1), got {self.hurst}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")


def path_normals(seed: int, n_paths: int, shape) -> np.ndarray:
    """Standard normals of shape ``(n_paths, *shape)``; path ``i`` uses substream ``i``.

    A path's draws depend only on ``(seed, i)``, never on ``n_paths``.
    """
    shape = tuple(np.atleast_1d(shape))
    children = np.random.SeedSequence(seed).spawn(n_paths)
    out = np.empty((n_paths,) + shape)
    for i, child in enumerate(children):
        out[i] = np.random.default_rng(child).standard_normal(shape)
    return out


def variance_increment(params: FbmParams, tau: float) -> float:
    """Conditional variance of ``X_T`` given information at ``T - tau``.

    ``sigma**2 * tau**(2H) / (2H * Gamma(H + 1/2)**2)``.
    """
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    if tau == 0:
        return 0.0
    H = params.hurst
    return params.sigma ** 2 * tau ** (2 * H) / (2 * H * math.gamma(H + 0.5) ** 2)


def fbm_covariance(hurst: float, s, t):
    """``E[B_s B_t] = (s^2H + t^2H - |t-s|^2H) / 2``; broadcasts over arrays."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h2 = 2 * hurst
    out = 0.5 * (s ** h2 + t ** h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


def simulate_fbm_paths(hurst: float, n_steps: int, dt: float, n_paths: int, seed: int) -> np.ndarray:
    """Exact fBm paths on ``0, dt, ..., n_steps*dt`` by Cholesky factorization.

    Returns an array of shape ``(n_paths, n_steps + 1)`` whose first column is 0.
    """
    if not 0.0 < hurst < 1.0:
        raise ValueError("hurst must lie in (0, 1)")
    if n_steps < 1 or n_steps > MAX_CHOLESKY_STEPS:
        raise ValueError(f"n_steps must be in [1, {MAX_CHOLESKY_STEPS}]")
    t = dt * np.arange(1, n_steps + 1)
    cov = fbm_covariance(hurst, t[:, None], t[None, :])
    L = _cholesky(cov)
    z = path_normals(seed, n_paths, n_steps)
    paths = np.zeros((n_paths, n_steps + 1))
    paths[:, 1:] = z @ L.T
    return paths


def _cholesky(cov: np.ndarray) -> np.ndarray:
    scale = float(np.max(np.diag(cov)))
    for jitter in (0.0, 1e-14, 1e-12, 1e-10):
        try:
            return np.linalg.cholesky(cov + jitter * scale * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("cholesky failure")


@dataclass
class RLMarket:
    """Simulated VIX and forward-variance-swap paths on an observation grid.

    ``forward[:, k]`` is ``F^T_{t_k}`` for the single maturity ``maturity``;
    entries after the maturity are NaN.
    """

    times: np.ndarray
    vix: np.ndarray
    forward: np.ndarray
    log_vix: np.ndarray
    maturity: float


class RLKernel:
    """Left-point Riemann-Liouville kernel ``sigma/Gamma(H+1/2) * lag^(H-1/2)`` on a grid."""

    def __init__(self, params: FbmParams, dt: float):
        self.params = params
        self.dt = dt
        self.scale = params.sigma / math.gamma(params.hurst + 0.5)

    def weights(self, lags_in_steps: np.ndarray) -> np.ndarray:
        lags = np.asarray(lags_in_steps, dtype=float) * self.dt
        return self.scale * lags ** (self.params.hurst - 0.5)

    def conditional_variance(self, n_steps: int) -> np.ndarray:
        """``Var[X_T | F_{T - m dt}]`` for ``m = 0..n_steps`` as seen by the grid scheme."""
        w = self.weights(np.arange(1, n_steps + 1))
        return np.concatenate([[0.0], np.cumsum(w * w) * self.dt])


def simulate_rl_log_vix(params: FbmParams, n_steps: int, dt: float, n_paths: int, seed: int,
                        substeps: int = 1, burn_in: float = BURN_IN_YEARS):
    """Riemann-Liouville ``X`` on the observation grid plus the fine Brownian increments.

    Returns ``(x_obs, dW, kernel, n_burn)`` where ``dW`` has shape
    ``(n_paths, n_burn + n_steps*substeps)`` on the fine grid and observation
    ``k`` sits at fine index ``n_burn + k*substeps``.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    h = dt / substeps
    n_burn = int(round(burn_in / h))
    n_fine = n_burn + n_steps * substeps
    kernel = RLKernel(params, h)
    dW = path_normals(seed, n_paths, n_fine) * math.sqrt(h)
    if params.sigma == 0 or n_fine == 0:
        x_fine = np.zeros((n_paths, n_fine + 1))
    else:
        w = kernel.weights(np.arange(1, n_fine + 1))
        # X[k] = sum_{j<k} w[k-j] dW[j]  (left point, s_j strictly before t_k)
        conv = fftconvolve(dW, w[None, :], axes=1)[:, :n_fine]
        x_fine = np.zeros((n_paths, n_fine + 1))
        x_fine[:, 1:] = conv
    obs_idx = n_burn + substeps * np.arange(n_steps + 1)
    return x_fine[:, obs_idx], dW, kernel, n_burn


def forward_variance_paths(C: float, dW: np.ndarray, kernel: RLKernel, n_burn: int, substeps: int,
                           maturity_step: int, obs_steps: np.ndarray) -> np.ndarray:
    """``F^T_t = C^2 exp(2 Z_t(T) + 2 Var[X_T | F_t])`` at observation steps ``obs_steps``.

    ``maturity_step`` and ``obs_steps`` count observation steps from time 0;
    all ``obs_steps`` must be ``<= maturity_step``.
    """
    obs_steps = np.asarray(obs_steps, dtype=int)
    if np.any(obs_steps > maturity_step):
        raise ValueError("observation after maturity")
    j_T = n_burn + maturity_step * substeps
    if kernel.params.sigma == 0:
        return np.full((dW.shape[0], obs_steps.size), C * C)
    w = kernel.weights(j_T - np.arange(j_T))
    z_cum = np.zeros((dW.shape[0], j_T + 1))
    z_cum[:, 1:] = np.cumsum(dW[:, :j_T] * w[None, :], axis=1)
    fine_obs = n_burn + obs_steps * substeps
    z = z_cum[:, fine_obs]
    cvar = kernel.conditional_variance(j_T - n_burn)
    v = cvar[j_T - fine_obs]
    return C * C * np.exp(2 * z + 2 * v[None, :])


def simulate_rl_market(params: FbmParams, C: float, n_steps: int, dt: float, horizon_T: float,
                       n_paths: int, seed: int, substeps: int = 1,
                       burn_in: float = BURN_IN_YEARS) -> RLMarket:
    """Simulate ``VIX_t = C exp(X_t)`` with Riemann-Liouville ``X`` and its forward variance swap.

    The grid is ``t_k = k*dt`` for ``k = 0..n_steps`` after a discarded
    ``burn_in`` prefix; each observation step is split into ``substeps`` fine
    steps. ``horizon_T`` must be a grid date.
    """
    if horizon_T > n_steps * dt + 1e-12:
        raise ValueError("maturity beyond the simulated grid")
    m_T = int(round(horizon_T / dt))
    if abs(m_T * dt - horizon_T) > 1e-9 * max(1.0, horizon_T):
        raise ValueError("maturity must be a grid date")
    x, dW, kernel, n_burn = simulate_rl_log_vix(params, n_steps, dt, n_paths, seed, substeps, burn_in)
    times = dt * np.arange(n_steps + 1)
    forward = np.full((n_paths, n_steps + 1), np.nan)
    forward[:, :m_T + 1] = forward_variance_paths(C, dW, kernel, n_burn, substeps, m_T,
                                                  np.arange(m_T + 1))
    return RLMarket(times=times, vix=C * np.exp(x), forward=forward, log_vix=x, maturity=m_T * dt)


def forward_variance_family(C: float, dW: np.ndarray, kernel: RLKernel, n_burn: int, substeps: int,
                            maturity_steps, lookback: int) -> np.ndarray:
    """Forward variance swaps for many maturities on a single path.

    Row ``r`` holds ``F^{T_r}_t`` at observation steps
    ``maturity_steps[r] - lookback, ..., maturity_steps[r]``. The memory
    before each window is one FFT convolution shared by all maturities.
    """
    dW = np.asarray(dW, dtype=float).reshape(-1)
    mats = np.asarray(maturity_steps, dtype=int)
    if np.any(mats < lookback):
        raise ValueError("lookback window starts before time 0")
    D = lookback * substeps
    n_fine = dW.size
    if kernel.params.sigma == 0:
        return np.full((mats.size, lookback + 1), C * C)
    # history[i] = sum_{j<i} w(i + D - j) dW_j
    w_shift = kernel.weights(np.arange(D + 1, D + n_fine + 1))
    history = np.zeros(n_fine + 1)
    history[1:] = fftconvolve(dW, w_shift)[:n_fine]
    anchors = n_burn + (mats - lookback) * substeps
    if np.any(anchors + D > n_fine):
        raise ValueError("maturity beyond the simulated grid")
    w_local = kernel.weights(D - np.arange(D))
    segs = dW[anchors[:, None] + np.arange(D)[None, :]]
    local = np.zeros((mats.size, D + 1))
    local[:, 1:] = np.cumsum(segs * w_local[None, :], axis=1)
    z = history[anchors][:, None] + local[:, ::substeps]
    cvar = kernel.conditional_variance(D)[::-1][::substeps]
    return C * C * np.exp(2 * z + 2 * cvar[None, :])
