import numpy as np
import pytest
from hypothesis import given, strategies as st

from hdfts.tsforecast import (
    QuantileAr,
    fit_ar,
    fit_ets,
    fit_quantile_ar,
    fit_quantile_ar_batch,
    forecast_series,
    pinball_loss,
    predict_quantile,
    predict_quantile_batch,
    quantile_regression,
)
from oracles import check_loss, grid_pinball


# --- ETS --------------------------------------------------------------------

@pytest.mark.parametrize("h", [1, 5, 20])
def test_ets_constant_series(h):
    model, fc = fit_ets(np.full(15, 3.0), h)
    np.testing.assert_array_equal(fc, np.full(h, 3.0))


def test_ets_linear_trend():
    model, fc = fit_ets(np.arange(1.0, 13.0), 2)
    assert model.variant in ("Holt", "DampedHolt")
    np.testing.assert_allclose(fc, [13.0, 14.0], atol=0.2)


@given(st.integers(0, 2**31))
def test_ets_noise_forecasts_within_range(seed):
    y = np.random.default_rng(seed).normal(size=25)
    _, fc = fit_ets(y, 5)
    assert y.min() - 1e-9 <= fc.min() and fc.max() <= y.max() + 1e-9


def test_ets_fits_are_deterministic_and_reject_bad_input():
    y = np.random.default_rng(3).normal(size=30).cumsum()
    a = fit_ets(y, 4)[1]
    b = fit_ets(y, 4)[1]
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        fit_ets(np.ones(3), 1)
    with pytest.raises(ValueError):
        fit_ets(np.array([1.0, np.nan, 2.0, 3.0]), 1)


# --- AR ---------------------------------------------------------------------

def test_ar_white_noise_selects_order_zero():
    hits = 0
    for seed in range(20):
        y = np.random.default_rng(seed).normal(size=200)
        model, fc = fit_ar(y, 3, 4)
        if model.order == 0:
            hits += 1
            np.testing.assert_allclose(fc, y[3:].mean(), atol=1e-12)
    assert hits >= 14


def test_ar1_coefficient_recovered():
    rng = np.random.default_rng(8)
    y = np.zeros(2000)
    for t in range(1, y.size):
        y[t] = 0.8 * y[t - 1] + rng.normal()
    model, _ = fit_ar(y, 3, 1)
    assert model.order >= 1
    assert abs(model.coefficients[0] - 0.8) < 0.1


def test_ar_constant_series():
    model, fc = fit_ar(np.full(12, 2.5), 3, 3)
    assert model.order == 0
    np.testing.assert_allclose(fc, 2.5)


@given(st.integers(0, 2**31), st.floats(-100, 100))
def test_ar_shift_equivariance(seed, c):
    y = np.random.default_rng(seed).normal(size=40).cumsum() * 0.1
    _, f1 = fit_ar(y, 3, 5)
    _, f2 = fit_ar(y + c, 3, 5)
    np.testing.assert_allclose(f2, f1 + c, atol=1e-8)


def test_ar_too_short():
    with pytest.raises(ValueError):
        fit_ar(np.arange(4.0), 3, 1)


def test_forecast_series_engines():
    y = 2 * 0.9 ** np.arange(30)
    np.testing.assert_allclose(forecast_series(y, 3, "arima"), 2 * 0.9 ** np.arange(30, 33), rtol=1e-6)
    assert forecast_series(np.array([1.0, 2.0]), 2, "ets").tolist() == [1.5, 1.5]
    assert forecast_series(np.array([1.0, 2.0]), 2, "arima").tolist() == [1.5, 1.5]
    walk = np.random.default_rng(1).normal(size=60).cumsum() + np.arange(60)
    fc = forecast_series(walk, 2, "arima")
    assert np.all(np.isfinite(fc))
    with pytest.raises(ValueError):
        forecast_series(walk, 1, "prophet")


@given(st.integers(0, 2**31), st.integers(3, 12))
def test_short_series_never_explode(seed, n):
    y = np.random.default_rng(seed).normal(size=n)
    for engine in ("ets", "arima"):
        fc = forecast_series(y, 10, engine)
        span = np.ptp(y) + 1
        assert np.all(np.abs(fc - y.mean()) <= 50 * span)


# --- quantile AR ------------------------------------------------------------

def test_quantile_constant_series():
    m = fit_quantile_ar(np.full(12, 0.7), 0.95, 1)
    assert predict_quantile(m, np.full(m.order, 0.7)) == pytest.approx(0.7, abs=1e-8)


def test_quantile_uniform_intercept():
    y = np.random.default_rng(95).uniform(size=2000)
    m = fit_quantile_ar(y, 0.95, 0)
    assert m.order == 0
    assert abs(m.intercept - 0.95) < 0.05
    # the minimiser is not unique when n * tau is an integer; compare losses
    exact = float(check_loss(y - np.quantile(y, 0.95, method="inverted_cdf"), 0.95))
    assert m.pinball_loss <= exact + 1e-12


def _lag_design(y, p):
    target = y[p:]
    cols = [np.ones(target.size)] + [y[p - k:y.size - k] for k in range(1, p + 1)]
    return np.column_stack(cols), target


@given(st.integers(0, 2**31), st.integers(4, 10), st.sampled_from([0, 1]), st.sampled_from([0.5, 0.8, 0.95]))
def test_quantile_regression_beats_grid(seed, n, p, tau):
    y = np.abs(np.random.default_rng(seed).normal(size=n + p))
    X, target = _lag_design(y, p)
    beta, loss, _ = quantile_regression(X, target, tau)
    assert loss == pytest.approx(float(check_loss(target - X @ beta, tau)), abs=1e-12)
    assert loss <= grid_pinball(X, target, tau, half_width=6.0, steps=401 if p else 4001) + 1e-4


def test_quantile_ar_n8_p1_against_grid():
    y = np.array([0.3, 0.1, 0.8, 0.5, 0.2, 0.9, 0.4, 0.6, 0.7])
    X, target = _lag_design(y, 1)
    _, loss, _ = quantile_regression(X, target, 0.95)
    assert loss <= grid_pinball(X, target, 0.95, half_width=3.0, steps=1201) + 1e-4


def test_batch_matches_single():
    rng = np.random.default_rng(5)
    Y = np.abs(rng.normal(size=(7, 15)))
    orders, coefs, losses, conv = fit_quantile_ar_batch(Y, 0.9, 2)
    for k in range(7):
        m = fit_quantile_ar(Y[k], 0.9, 2)
        assert m.order == orders[k]
        assert m.pinball_loss == pytest.approx(losses[k], abs=1e-12)
    preds = predict_quantile_batch(orders, coefs, Y)
    for k in range(7):
        m = fit_quantile_ar(Y[k], 0.9, 2)
        assert preds[k] == pytest.approx(predict_quantile(m, Y[k, Y.shape[1] - m.order:]), abs=1e-12)


def test_predict_quantile_examples():
    assert predict_quantile(QuantileAr(0.95, 0, 0.4, np.array([]), 0.0, True), []) == 0.4
    assert predict_quantile(QuantileAr(0.95, 0, -1.0, np.array([]), 0.0, True), []) == 0.0
    m = QuantileAr(0.95, 1, 0.1, np.array([0.5]), 0.0, True)
    assert predict_quantile(m, [0.2]) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        predict_quantile(m, [0.2, 0.3])


@given(st.integers(0, 2**31))
def test_predictions_non_negative(seed):
    Y = np.abs(np.random.default_rng(seed).normal(size=(5, 9))) * np.array([[0], [1], [1], [2], [1e-6]])
    orders, coefs, _, _ = fit_quantile_ar_batch(Y, 0.95, 2)
    assert np.all(predict_quantile_batch(orders, coefs, Y) >= 0)


def test_quantile_input_validation():
    with pytest.raises(ValueError):
        fit_quantile_ar(np.array([0.1, 0.2, 0.3]), 0.9, 1)
    with pytest.raises(ValueError):
        fit_quantile_ar(np.array([0.1, -0.2, 0.3, 0.4, 0.5]), 0.9, 0)
    with pytest.raises(ValueError):
        fit_quantile_ar(np.ones(6), 1.5, 0)


def test_pinball_loss():
    r = np.array([1.0, -2.0])
    assert pinball_loss(r, 0.9) == pytest.approx((0.9 * 1 + 0.1 * 2) / 2)
