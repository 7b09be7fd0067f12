import math

import numpy as np
import pytest

from roughhedge.fbm import (FbmParams, RLKernel, fbm_covariance, forward_variance_family, forward_variance_paths,
                            path_normals, simulate_fbm_paths, simulate_rl_log_vix, simulate_rl_market,
                            variance_increment)


def test_params_validation():
    with pytest.raises(ValueError):
        FbmParams(0.0, 0.5)
    with pytest.raises(ValueError):
        FbmParams(0.3, -1.0)


def test_path_normals_substreams_independent_of_count():
    a = path_normals(5, 3, 10)
    b = path_normals(5, 7, 10)
    np.testing.assert_array_equal(a, b[:3])
    assert not np.array_equal(a[0], a[1])


def test_variance_increment_brownian_case():
    # H = 1/2 collapses to sigma^2 tau
    assert variance_increment(FbmParams(0.5, 0.8), 0.3) == pytest.approx(0.64 * 0.3, rel=1e-14)
    assert variance_increment(FbmParams(0.3, 0.8), 0.0) == 0.0
    with pytest.raises(ValueError):
        variance_increment(FbmParams(0.3, 0.8), -1.0)


def test_variance_increment_matches_kernel_quadrature():
    # Var = int_0^tau (sigma/Gamma(H+1/2))^2 s^(2H-1) ds
    p = FbmParams(0.2, 1.3)
    tau = 0.4
    direct = (p.sigma / math.gamma(p.hurst + 0.5)) ** 2 * tau ** (2 * p.hurst) / (2 * p.hurst)
    assert variance_increment(p, tau) == pytest.approx(direct, rel=1e-14)


def test_fbm_covariance_properties():
    assert fbm_covariance(0.5, 0.3, 0.7) == pytest.approx(0.3)
    t = np.linspace(0.1, 1, 6)
    c = fbm_covariance(0.2, t[:, None], t[None, :])
    np.testing.assert_allclose(c, c.T)
    np.testing.assert_allclose(np.diag(c), t ** 0.4)
    assert np.all(np.linalg.eigvalsh(c) > 0)


def test_cholesky_paths_match_covariance():
    H, n, dt = 0.3, 8, 0.1
    paths = simulate_fbm_paths(H, n, dt, 20000, seed=1)
    assert np.all(paths[:, 0] == 0)
    emp = np.cov(paths[:, 1:].T, bias=True)
    t = dt * np.arange(1, n + 1)
    np.testing.assert_allclose(emp, fbm_covariance(H, t[:, None], t[None, :]), atol=0.03 * t[-1] ** (2 * H))
    with pytest.raises(ValueError):
        simulate_fbm_paths(H, 5000, dt, 1, 0)


def test_rl_variance_matches_grid_conditional_variance():
    p = FbmParams(0.377, 0.5)
    dt = 1 / 252
    x, dW, kernel, n_burn = simulate_rl_log_vix(p, 20, dt, 4000, seed=3, burn_in=0.25)
    # X_20 - E[X_20 | F_0] has the grid conditional variance over 20 steps
    w = kernel.weights(np.arange(1, n_burn + 21))
    z0 = dW[:, :n_burn] @ w[::-1][: n_burn]
    resid = x[:, 20] - z0
    cvar = kernel.conditional_variance(20)[20]
    assert np.var(resid) == pytest.approx(cvar, rel=0.06)
    # grid variance converges to the continuous one
    fine = RLKernel(p, dt / 200).conditional_variance(4000)[-1]
    assert fine == pytest.approx(variance_increment(p, 20 * dt), rel=0.05)


def test_forward_variance_is_martingale_and_terminal_match():
    p = FbmParams(0.3, 0.6)
    mkt = simulate_rl_market(p, 0.2, n_steps=30, dt=1 / 252, horizon_T=20 / 252, n_paths=6000, seed=2,
                             burn_in=0.5)
    F = mkt.forward
    np.testing.assert_allclose(F[:, 20], mkt.vix[:, 20] ** 2, rtol=1e-12)
    assert np.all(np.isnan(F[:, 21:]))
    incr = F[:, 20] - F[:, 0]
    assert abs(incr.mean()) < 3 * incr.std() / math.sqrt(incr.size)
    with pytest.raises(ValueError):
        simulate_rl_market(p, 0.2, 10, 0.1, 2.0, 1, 0)


def test_forward_family_matches_single_maturity():
    p = FbmParams(0.377, 0.5)
    x, dW, kernel, n_burn = simulate_rl_log_vix(p, 60, 1 / 252, 1, seed=4, substeps=3, burn_in=0.2)
    fam = forward_variance_family(0.2, dW[0], kernel, n_burn, 3, [40, 55], lookback=10)
    for row, m in enumerate([40, 55]):
        ref = forward_variance_paths(0.2, dW, kernel, n_burn, 3, m, np.arange(m - 10, m + 1))
        np.testing.assert_allclose(fam[row], ref[0], rtol=1e-12)


def test_zero_sigma_is_deterministic():
    mkt = simulate_rl_market(FbmParams(0.3, 0.0), 0.2, 5, 0.1, 0.5, 2, 0)
    np.testing.assert_allclose(mkt.vix, 0.2)
    np.testing.assert_allclose(mkt.forward, 0.04)
