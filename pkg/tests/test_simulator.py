import math

import numpy as np
import pytest

from roughhedge.core import ForwardVarianceCurve
from roughhedge.fbm import FbmParams
from roughhedge.replication import PayoffSpec
from roughhedge.simulator import (FouKernel, RoughBergomiKernel, TabulatedKernel, ZeroKernel,
                                  delta_hedge_experiment, dg_u, iter_market, log_contract_replication_experiment,
                                  simulate_market, ueq_panel, varswap_value)

FLAT = ForwardVarianceCurve.flat(0.04, 1.0)


def test_kernels():
    rb = RoughBergomiKernel(1.5, 0.1)
    assert rb(0.25) == pytest.approx(1.5 * 0.25 ** -0.4)
    assert rb.integral(0.0, 0.5) == pytest.approx(1.5 * 0.5 ** 0.6 / 0.6)
    # lam = 0 reduces the fOU kernel to the power law
    fou0 = FouKernel(1.5, 0.0, 0.1)
    assert fou0(0.3) == pytest.approx(rb(0.3))
    fou = FouKernel(1.0, 2.0, 0.3)
    assert fou(0.2) < RoughBergomiKernel(1.0, 0.3)(0.2)
    assert fou.integral(0.0, 0.1) == pytest.approx(
        sum(fou(u) for u in np.linspace(0.0005, 0.0995, 100)) * 0.001, rel=2e-2)
    tab = TabulatedKernel((0.0, 1.0), (1.0, 3.0))
    assert tab(0.5) == 2.0 and tab.integral(0.0, 1.0) == pytest.approx(2.0)
    assert ZeroKernel().integral(0, 1) == 0.0
    with pytest.raises(ValueError):
        RoughBergomiKernel(-1.0, 0.1)


def test_forward_variances_are_martingales():
    paths = simulate_market(RoughBergomiKernel(1.0, 0.2), PayoffSpec.linear(), -0.7, FLAT, 20, 0.01, 4000, 3)
    v_end = paths.curves[:, -1, -1]
    assert v_end.mean() == pytest.approx(0.04, abs=3 * v_end.std() / math.sqrt(v_end.size))
    s_end = paths.S[:, -1]
    assert s_end.mean() == pytest.approx(1.0, abs=3 * s_end.std() / math.sqrt(s_end.size))
    k = 7
    np.testing.assert_allclose(paths.curves[:, k:, k], paths.curves[:, k:k + 1, k].repeat(20 - k + 1, 1))


def test_zero_kernel_freezes_curve():
    paths = simulate_market(ZeroKernel(), PayoffSpec.linear(), 0.0, FLAT, 10, 0.01, 5, 1)
    np.testing.assert_allclose(paths.curves, 0.04)
    np.testing.assert_allclose(paths.spot_variance, 0.04)


def test_varswap_value_at_zero_and_maturity():
    paths = simulate_market(RoughBergomiKernel(1.0, 0.3), PayoffSpec.linear(), -0.5, FLAT, 16, 1 / 64, 50, 2)
    np.testing.assert_allclose(varswap_value(paths, 0.25, 0.0), 0.04 * 0.25)
    realized = varswap_value(paths, 0.25, 0.25)
    v = paths.spot_variance
    np.testing.assert_allclose(realized, (v.sum(1) - 0.5 * (v[:, 0] + v[:, -1])) / 64)
    with pytest.raises(ValueError):
        varswap_value(paths, 0.25, 0.3)


def test_dg_u_flat_curve_closed_form():
    # flat v, power kernel: D_gU = v eta tau^(H+1/2) / (H+1/2), up to the trapezoid error
    eta, H, tau, n = 1.2, 0.3, 0.2, 2000
    curve = ForwardVarianceCurve(np.linspace(0, tau, n + 1), np.full(n + 1, 0.04))
    from roughhedge.simulator import MarketState
    got = dg_u(MarketState(0.0, 1.0, curve), RoughBergomiKernel(eta, H), tau)
    assert got == pytest.approx(0.04 * eta * tau ** (H + 0.5) / (H + 0.5), rel=2e-3)


def test_iter_market_streams_same_paths():
    gen = iter_market(RoughBergomiKernel(1.0, 0.2), PayoffSpec.linear(), -0.3, FLAT, 8, 0.05, 3, 9)
    S_stream = [s.copy() for _, s, _, _, _ in gen]
    paths = simulate_market(RoughBergomiKernel(1.0, 0.2), PayoffSpec.linear(), -0.3, FLAT, 8, 0.05, 3, 9)
    np.testing.assert_array_equal(np.column_stack(S_stream), paths.S)


def test_ueq_regression_coarse():
    panel = ueq_panel(RoughBergomiKernel(1.0, 0.3), -0.7, FLAT, 0.1, 100, 100, seed=1, t_max=0.05)
    slope, r2 = panel.regression()
    assert slope == pytest.approx(1.0, abs=0.05)
    assert r2 > 0.98


def test_log_contract_zero_vol_of_vol_error_small():
    err = log_contract_replication_experiment(ZeroKernel(), 0.0, FLAT, 0.25, 128, 2000, 5)
    assert abs(err.mean()) < 4 * err.std() / math.sqrt(err.size)
    assert np.sqrt(np.mean(err ** 2)) < 2e-3


def test_delta_hedge_reduces_variance():
    exp = delta_hedge_experiment(FbmParams(0.377, 0.5), 0.2, None, 29 / 252, 29, 300, 4)
    assert exp.hedged.std() < 0.25 * exp.unhedged.std()
    assert exp.price0.shape == (300,)
