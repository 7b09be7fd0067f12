import datetime as dt
from dataclasses import replace

import numpy as np
import pytest

from roughhedge.backtest import (BacktestConfig, BacktestError, ForwardVarianceStore, generate_synthetic_dataset,
                                 hurst_sweep, run_backtest_suite, run_single_backtest)
from roughhedge.core import FORWARD_VARIANCE, WEEKDAYS, DatedSeries, working_day_offset
from roughhedge.fbm import FbmParams
from roughhedge.models import bs_quote


@pytest.fixture(scope="module")
def dataset():
    return generate_synthetic_dataset(FbmParams(0.377, 0.5), 0.2, 400, BacktestConfig(), seed=1)


def flat_market(n=140, level=0.2, jitter=0.0):
    dates = WEEKDAYS.date_range(dt.date(2015, 1, 2), n)
    rng = np.random.default_rng(0)
    vix = DatedSeries(dates, level * np.exp(jitter * rng.standard_normal(n)))
    return vix, dates


def test_config_validation():
    with pytest.raises(ValueError):
        BacktestConfig(hedge_horizon=40, option_maturity=32)
    with pytest.raises(ValueError):
        BacktestConfig(model="sabr")
    assert BacktestConfig().as_dict()["estimation_window"] == 88


def test_no_motion_market():
    # constant F: hedge earns nothing; PnL is pure time decay of the mark
    vix, dates = flat_market(jitter=0.01)
    start = dates[100]
    mat = working_day_offset(start, 32)
    days = [working_day_offset(start, k) for k in range(30)]
    fvs = DatedSeries(days, np.full(30, 0.04), FORWARD_VARIANCE)
    rec = run_single_backtest(vix, fvs, start, BacktestConfig(model="bs"))
    assert rec.pnl_hedged == rec.pnl_unhedged
    g = rec.params_used.gamma
    K = vix.value_at(start)
    expected = bs_quote(0.04, K, g, 3 / 252).price - bs_quote(0.04, K, g, 32 / 252).price
    assert rec.pnl_unhedged == pytest.approx(expected, rel=1e-12)
    assert len(rec.hedge_ratios) == 29
    assert mat > days[-1]


def test_single_backtest_errors():
    vix, dates = flat_market(jitter=0.01)
    store = ForwardVarianceStore()
    with pytest.raises(BacktestError, match="estimation window"):
        run_single_backtest(vix, store, dates[10], BacktestConfig())
    with pytest.raises(BacktestError, match="no forward variance quotes"):
        run_single_backtest(vix, store, dates[100], BacktestConfig())
    with pytest.raises(BacktestError, match="no VIX close"):
        run_single_backtest(vix, store, dt.date(2015, 1, 3), BacktestConfig())


def test_store_lookup_never_interpolates():
    d = WEEKDAYS.date_range("2020-01-01", 3)
    store = ForwardVarianceStore({d[2]: DatedSeries([d[0], d[2]], [0.04, 0.05], FORWARD_VARIANCE)})
    assert store.value(d[0], d[2]) == 0.04
    with pytest.raises(KeyError, match="no forward variance quote for"):
        store.value(d[1], d[2])
    assert len(store) == 2 and store.rows()[0] == (d[0], d[2], 0.04)


def test_suite_is_order_independent_and_parallel_safe(dataset):
    starts = dataset.starts[::40]
    cfg = BacktestConfig()
    a = run_backtest_suite(dataset.vix, dataset.fvs, starts, cfg)
    b = run_backtest_suite(dataset.vix, dataset.fvs, starts[::-1], cfg, n_jobs=2)
    assert [r.start_date for r in a.records] == sorted(starts)
    assert a.stats_hedged == b.stats_hedged
    assert a.red_factor > 1


def test_suite_collects_failures(dataset):
    bad = dt.date(1999, 1, 4)
    res = run_backtest_suite(dataset.vix, dataset.fvs, dataset.starts[:2] + [bad], BacktestConfig(model="bs"))
    assert len(res.records) == 2
    assert res.failures[0][0] == bad
    with pytest.raises(BacktestError, match="all 1 episodes failed"):
        run_backtest_suite(dataset.vix, dataset.fvs, [bad], BacktestConfig())


def test_sweep_half_matches_bs(dataset):
    starts = dataset.starts[::60]
    cfg = BacktestConfig()
    sweep = hurst_sweep(dataset.vix, dataset.fvs, starts, cfg, [0.3, 0.5])
    bs = run_backtest_suite(dataset.vix, dataset.fvs, starts, replace(cfg, model="bs"))
    assert sweep[1][1] == pytest.approx(bs.stats_hedged.rmse, abs=1e-12)
    with pytest.raises(ValueError):
        hurst_sweep(dataset.vix, dataset.fvs, starts, cfg, [1.2])


def test_synthetic_dataset_shape(dataset):
    assert len(dataset.vix) == 400
    first = dataset.starts[0]
    assert dataset.vix.index_of(first) == 88
    s = dataset.fvs.series(working_day_offset(first, 32))
    assert len(s) == 33
    # the swap settles on VIX^2 at maturity
    assert s.values[-1] == pytest.approx(dataset.vix.value_at(s.dates[-1]) ** 2, rel=1e-12)
