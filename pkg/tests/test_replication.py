import datetime as dt
import math

import numpy as np
import pytest
from scipy.stats import norm

from roughhedge.replication import (OptionGrid, PayoffSpec, ReplicationWarning, forward_variance_from_swaps,
                                    h_function, h_prime, static_replication_price)

D0, D1 = dt.date(2020, 1, 2), dt.date(2021, 1, 4)


def bs_grid(S, sigma, T, strikes):
    K = np.asarray(strikes, dtype=float)
    sd = sigma * math.sqrt(T)
    d1 = (np.log(S / K) + 0.5 * sd * sd) / sd
    C = S * norm.cdf(d1) - K * norm.cdf(d1 - sd)
    return OptionGrid(D0, D1, K, C, C - S + K, S)


def test_h_linear_closed_form():
    spec = PayoffSpec.linear()
    assert h_function(spec, 1.0) == 0.0
    assert h_function(spec, 2.0) == pytest.approx(2 - 2 * math.log(2))
    x = np.array([0.5, 1.5])
    np.testing.assert_allclose(h_function(spec, x), 2 * (x - 1) - 2 * np.log(x))
    np.testing.assert_allclose(h_prime(spec, x), 2 - 2 / x)
    with pytest.raises(ValueError):
        h_function(spec, 0.0)


def test_tabulated_flat_f_is_quadratic():
    # f = 2 everywhere: h(x) = (x - 1)^2 / 4
    spec = PayoffSpec.tabulated([0.1, 5.0], [2.0, 2.0])
    assert h_function(spec, 1.8) == pytest.approx(0.16, rel=1e-8)
    assert h_prime(spec, 1.8) == pytest.approx(0.4, rel=1e-8)
    np.testing.assert_allclose(h_function(spec, np.array([0.6, 1.8])), [0.04, 0.16], rtol=1e-8)


def test_tabulated_linear_f_agrees_with_closed_form():
    g = np.linspace(0.1, 4, 400)
    tab = PayoffSpec.tabulated(g, g)
    assert h_function(tab, 1.7, n_nodes=20001) == pytest.approx(h_function(PayoffSpec.linear(), 1.7), rel=1e-4)


def test_payoff_spec_validation():
    with pytest.raises(ValueError):
        PayoffSpec("cubic")
    with pytest.raises(ValueError):
        PayoffSpec.tabulated([1.0, 0.5], [1.0, 1.0])
    with pytest.raises(ValueError):
        PayoffSpec.tabulated([0.5, 1.0], [1.0, 0.0])


def test_static_replication_recovers_bs_total_variance():
    g = bs_grid(1.0, 0.25, 0.5, np.linspace(0.25, 3.0, 1501))
    v = static_replication_price(g, PayoffSpec.linear())
    assert v == pytest.approx(0.25 ** 2 * 0.5, rel=1e-3)
    assert v.warnings == ()


def test_truncated_grid_warns_and_underprices():
    g = bs_grid(1.0, 0.25, 0.5, np.linspace(0.8, 1.2, 81))
    with pytest.warns(ReplicationWarning, match="tail not converged"):
        v = static_replication_price(g, PayoffSpec.linear())
    assert len(v.warnings) == 2
    assert v < 0.25 ** 2 * 0.5


def test_option_grid_validation():
    with pytest.raises(ValueError, match="call prices increase"):
        OptionGrid(D0, D1, [1.0, 2.0], [0.1, 0.2], [0.1, 0.3], 1.5)
    with pytest.raises(ValueError, match="strictly increasing"):
        OptionGrid(D0, D1, [2.0, 1.0], [0.1, 0.2], [0.1, 0.3], 1.5)
    with pytest.raises(ValueError, match="bracket"):
        static_replication_price(OptionGrid(D0, D1, [1.0, 2.0], [0.2, 0.1], [0.1, 0.3], 3.0), PayoffSpec.linear())


def test_forward_variance_from_swaps():
    th = np.array([0.1, 0.2, 0.3, 0.4])
    U = 0.04 * th + 0.05 * th ** 2
    c = forward_variance_from_swaps(th, U)
    # central differences are exact for quadratics; one-sided ends are first order
    np.testing.assert_allclose(c.values[1:3], 0.04 + 0.1 * th[1:3])
    with pytest.raises(ValueError, match="calendar arbitrage"):
        forward_variance_from_swaps(th, U[::-1])


def test_forward_variance_clipping_warns():
    th = np.array([0.1, 0.2, 0.3])
    U = np.array([0.004, 0.004 - 1e-12, 0.01])
    with pytest.warns(ReplicationWarning, match="clipped"):
        c = forward_variance_from_swaps(th, U, tolerance=1e-9)
    assert np.all(c.values >= 0)
