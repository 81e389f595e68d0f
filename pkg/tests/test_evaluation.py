import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hdfts.evaluation import (
    BacktestConfig,
    EvalReport,
    MetricError,
    cpd,
    ecp,
    evaluate,
    expanding_backtest,
    interval_score,
    mafe,
    mean_interval_score,
    rmsfe,
    run_backtest,
)
from hdfts.pipeline import TWA_FFM, TWA_OWA_FFM
from hdfts.simulate import simulate_panel


def test_point_metric_examples():
    a = np.zeros(4)
    assert rmsfe(a, a) == 0 and mafe(a, a) == 0
    assert rmsfe([0, 0], [1, -1]) == pytest.approx(1) and mafe([0, 0], [1, -1]) == pytest.approx(1)
    assert rmsfe([0, 0], [0, 2]) == pytest.approx(math.sqrt(2)) and mafe([0, 0], [0, 2]) == pytest.approx(1)
    with pytest.raises(MetricError):
        rmsfe([], [])
    with pytest.raises(MetricError):
        mafe([1, 2], [1])


def test_coverage_examples():
    a = np.full(20, 5.0)
    assert ecp(a, a - 1, a + 1) == 1.0
    assert cpd(a, a - 1, a + 1, 0.05) == pytest.approx(0.05)
    lo, up = a - 1, a + 1
    up[[0, 1]] = 4.0
    lo[[0, 1]] = 3.0
    lo[2] = 6.0
    up[2] = 7.0
    assert ecp(a, lo, up) == pytest.approx(0.85)
    assert cpd(a, lo, up, 0.05) == pytest.approx(0.10)
    a = np.zeros(100)
    lo, up = -np.ones(100), np.ones(100)
    lo[:5] = 0.5
    up[:5] = 1.0
    assert cpd(a, lo, up, 0.05) == pytest.approx(0.0, abs=1e-15)


def test_interval_score_examples():
    assert interval_score(1, 3, 2, 0.05) == 2
    assert interval_score(1, 3, 4, 0.2) == pytest.approx(12)
    assert interval_score(2, 2, 2, 0.05) == 0
    with pytest.raises(MetricError):
        interval_score(3, 1, 2)
    with pytest.raises(MetricError):
        mean_interval_score([], [], [])


def test_metrics_keep_leading_axes():
    a = np.random.default_rng(0).normal(size=(2, 3, 4, 5))
    assert rmsfe(a, 0 * a).shape == (2, 3)
    assert mean_interval_score(a - 1, a + 1, a).shape == (2, 3)


@given(st.integers(0, 2**31), st.floats(0.01, 0.5))
def test_metric_invariants(seed, alpha):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 7, 6))
    f = a + rng.normal(size=a.shape)
    assert np.all(rmsfe(a, f) >= mafe(a, f) - 1e-15)
    half = np.abs(rng.normal(size=a.shape))
    lo, up = f - half, f + half
    e = ecp(a, lo, up)
    c = cpd(a, lo, up, alpha)
    assert np.all((0 <= e) & (e <= 1))
    assert np.all((0 <= c) & (c <= max(alpha, 1 - alpha) + 1e-15))
    s = interval_score(lo, up, a, alpha)
    assert np.all(s >= 0)
    inside = (lo <= a) & (a <= up)
    np.testing.assert_array_equal(s[inside], (up - lo)[inside])
    assert np.all(ecp(a, lo - 0.3, up + 0.3) >= e)


def test_backtest_origin_counts():
    sp = simulate_panel(N=3, T=49, p=5, sigma=0.02, seed=1)
    res = expanding_backtest(sp.panel, BacktestConfig(engine="arima"))
    assert [len(res.forecasts[h].origins) for h in range(1, 11)] == list(range(10, 0, -1))
    assert res.forecasts[10].target_years == (2023,)
    assert res.forecasts[1].target_years[0] == 2014
    assert res.skipped == ()


def test_backtest_skips_infeasible_horizons():
    sp = simulate_panel(N=3, T=20, p=5, sigma=0.02, seed=1)
    res = expanding_backtest(sp.panel, BacktestConfig(engine="arima", pi_mode="split-sd", horizons=(1, 3, 4, 6)))
    assert sorted(res.forecasts) == [1, 3, 4]
    skipped = dict(res.skipped)
    assert 6 in skipped
    assert 4 in skipped and "split calibration" in skipped[4]  # validation block has 4 years, sd needs M >= 2
    assert sorted(res.intervals) == [1, 3]


def test_first_train_end_and_errors():
    sp = simulate_panel(N=3, T=20, p=5, sigma=0.02, seed=1)
    res = expanding_backtest(sp.panel, BacktestConfig(first_train_end=1989, horizons=(1, 2), engine="arima"))
    assert res.forecasts[1].origins[0] == 15
    with pytest.raises(ValueError):
        expanding_backtest(sp.panel, BacktestConfig(first_train_end=1994))
    with pytest.raises(ValueError):
        BacktestConfig(pi_mode="bootstrap")
    with pytest.raises(ValueError):
        BacktestConfig(horizons=(0,))


def test_noiseless_recovery_and_determinism():
    sp = simulate_panel(N=4, T=30, p=8, sigma=0.0, seed=6)
    cfgs = [BacktestConfig(horizons=(1, 2), engine="arima", method=m) for m in (TWA_OWA_FFM, TWA_FFM)]
    results, rep = run_backtest(sp.panel, cfgs)
    assert rep.value("RMSFE", TWA_OWA_FFM, "arima", "none", "G1", 1) < 1e-8
    _, rep2 = run_backtest(sp.panel, cfgs)
    assert rep.rows == rep2.rows


def test_evaluate_interval_rows():
    sp = simulate_panel(N=3, T=30, p=5, sigma=0.03, seed=9)
    res = expanding_backtest(sp.panel, BacktestConfig(engine="arima", pi_mode="sequential", horizons=(1, 2)))
    rep = evaluate(res)
    metrics = {r["metric"] for r in rep.rows}
    assert metrics == {"RMSFE", "MAFE", "ECP", "CPD", "IS"}
    key = ("ECP", TWA_OWA_FFM, "arima", "sequential", "G2", 2)
    assert rep.per_unit[key].shape == (3,)
    assert rep.value(*key) == pytest.approx(rep.per_unit[key].mean())


def test_report_summary():
    rep = EvalReport()
    for h, v in enumerate([3.0, 1.0, 2.0], start=1):
        rep.add("RMSFE", "m", "e", "none", "F", h, v)
    assert rep.summary("RMSFE", "m", "e", "none", "F") == (2.0, 2.0)
    assert all(math.isnan(x) for x in rep.summary("MAFE", "m", "e", "none", "F"))
    with pytest.raises(KeyError):
        rep.value("RMSFE", "m", "e", "none", "F", 9)


def test_thread_count_does_not_change_results(monkeypatch):
    sp = simulate_panel(N=3, T=25, p=6, sigma=0.03, seed=11)
    cfg = [BacktestConfig(horizons=(1, 3), engine="ets")]
    monkeypatch.setenv("HDFTS_THREADS", "1")
    _, serial = run_backtest(sp.panel, cfg)
    monkeypatch.setenv("HDFTS_THREADS", "4")
    _, threaded = run_backtest(sp.panel, cfg)
    assert serial.rows == threaded.rows
