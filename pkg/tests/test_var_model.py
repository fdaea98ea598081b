import numpy as np
import pytest

from conftest import random_stable_model
from utils.errors import NumericalError, RankDeficiencyError, ValidationError
from utils.series import as_series
from utils.simulation import stationary_covariance
from utils.var_model import (
    VarModel,
    companion_matrix,
    fit,
    fit_least_squares,
    fit_yule_walker,
    load_model,
    noise_correlation,
    pick_order,
    residuals,
    sample_autocovariance,
    save_model,
    select_order_aic,
    significant_correlations,
    spectral_radius,
)


def test_least_squares_recovers_coefficients(var2_series):
    truth, series = var2_series
    model = fit_least_squares(series, 2)
    assert model.order == 2
    np.testing.assert_allclose(model.coeffs, truth.coeffs, atol=0.06)
    np.testing.assert_allclose(model.noise_cov, truth.noise_cov, atol=0.08)
    assert model.n_obs == series.n_obs


def test_least_squares_exact_on_noiseless_rotation():
    theta = 0.3
    a = 0.95 * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    y = np.zeros((50, 2))
    y[0] = [1.0, 0.0]
    for n in range(1, 50):
        y[n] = a @ y[n - 1]
    model = fit_least_squares(as_series(y), 1)
    np.testing.assert_allclose(model.coeffs[0], a, atol=1e-8)
    assert np.abs(model.noise_cov).max() < 1e-20


def test_yule_walker_close_to_least_squares(var2_series):
    _, series = var2_series
    ls = fit(series, 2, "ls")
    yw = fit(series, 2, "yw")
    np.testing.assert_allclose(yw.coeffs, ls.coeffs, atol=0.02)
    assert yw.is_stable


def test_yule_walker_with_exact_autocovariances():
    # VAR(1): C_1 = A C_0 and C_0 = A C_0 A^T + V
    a = np.array([[0.5, 0.1], [0.0, 0.4]])
    v = np.array([[1.0, 0.2], [0.2, 1.0]])
    c0 = stationary_covariance(VarModel(a[np.newaxis], v))
    model = fit_yule_walker([c0, a @ c0], 1)
    np.testing.assert_allclose(model.coeffs[0], a, atol=1e-12)
    np.testing.assert_allclose(model.noise_cov, v, atol=1e-12)


def test_order_zero_fit_is_sample_covariance(rng):
    y = rng.normal(size=(300, 2))
    model = fit_least_squares(as_series(y), 0)
    assert model.order == 0
    assert model.coeffs.shape == (0, 2, 2)
    np.testing.assert_allclose(model.noise_cov, y.T @ y / 300, rtol=1e-12)


def test_insufficient_data_is_rejected(rng):
    series = as_series(rng.normal(size=(6, 2)))
    with pytest.raises(ValidationError, match="insufficient data"):
        fit_least_squares(series, 3)


def test_rank_deficiency_names_the_collinear_regressor(rng):
    x = rng.normal(size=200)
    series = as_series(np.column_stack([x, 2.0 * x]), ("p", "q"))
    with pytest.raises(RankDeficiencyError) as info:
        fit_least_squares(series, 1)
    assert len(info.value.collinear) == 1
    lag, name = info.value.collinear[0]
    assert lag == 1 and name in ("p", "q")


def test_aic_prefers_true_order(var2_series):
    _, series = var2_series
    best, aic = select_order_aic(series, 8)
    assert len(aic) == 9
    assert best == 2
    assert aic[2] < aic[0] and aic[2] < aic[1]


def test_aic_independent_of_workers(var2_series):
    _, series = var2_series
    assert select_order_aic(series, 4, workers=1) == select_order_aic(series, 4, workers=3)


def test_pick_order_breaks_ties_toward_smaller_order():
    assert pick_order([3.0, 3.0, 5.0]) == 0
    assert pick_order([4.0, 2.0, 2.0 + 1e-12]) == 1


def test_residuals_are_prediction_errors(var2_series):
    _, series = var2_series
    model = fit_least_squares(series, 2)
    resid = residuals(model, series)
    assert resid.values.shape == (series.n_obs - 2, 2)
    assert resid.start_index == 2
    y = series.values
    expected = y[5] - model.coeffs[0] @ y[4] - model.coeffs[1] @ y[3]
    np.testing.assert_allclose(resid.values[3], expected, atol=1e-12)
    # no intercept: the residual mean is small but not exactly zero
    assert np.abs(resid.values.mean(axis=0)).max() < 0.1


def test_companion_and_radius(rng):
    model = random_stable_model(rng, 3, 2, radius=0.7)
    f = companion_matrix(model)
    assert f.shape == (6, 6)
    np.testing.assert_array_equal(f[3:, :3], np.eye(3))
    assert spectral_radius(model) == pytest.approx(0.7, rel=1e-9)
    assert model.is_stable


def test_noise_correlation_threshold_and_flags():
    v = np.array([[4.0, 1.0], [1.0, 1.0]])
    model = VarModel(np.zeros((1, 2, 2)), v, n_obs=98)
    corr = noise_correlation(model)
    assert corr.matrix[0, 1] == pytest.approx(0.5)
    assert corr.threshold == pytest.approx(0.1)
    assert significant_correlations(model) == [(2, 1, pytest.approx(0.5))]


def test_noise_correlation_zero_variance_fails():
    model = VarModel(np.zeros((0, 2, 2)), np.diag([1.0, 0.0]))
    with pytest.raises(ValidationError, match="zero noise variance"):
        noise_correlation(model)


def test_model_json_round_trip(tmp_path, rng):
    model = random_stable_model(rng, 3, 2)
    path = save_model(VarModel(model.coeffs, model.noise_cov, ("a", "b", "c"), 0.25, 120), tmp_path / "m.json")
    back = load_model(path)
    np.testing.assert_array_equal(back.coeffs, model.coeffs)
    np.testing.assert_array_equal(back.noise_cov, model.noise_cov)
    assert back.channel_names == ("a", "b", "c")
    assert back.sampling_interval == 0.25
    assert back.n_obs == 120


def test_model_rejects_non_psd_noise():
    with pytest.raises(ValidationError, match="positive semi-definite"):
        VarModel(np.zeros((0, 2, 2)), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_sample_autocovariance_lag_zero(rng):
    y = rng.normal(size=(100, 2))
    c = sample_autocovariance(as_series(y), 2)
    assert len(c) == 3
    np.testing.assert_allclose(c[0], y.T @ y / 100)


def test_aic_selects_zero_for_white_noise():
    y = np.random.default_rng(0).normal(size=(2000, 1))
    best, aic = select_order_aic(as_series(y), 5)
    assert len(aic) == 6
    assert best == 0


def test_sample_autocovariance_two_samples():
    c = sample_autocovariance(as_series([1.0, -1.0]), 1)
    assert c[0][0, 0] == 1.0
    assert c[1][0, 0] == -0.5
    with pytest.raises(ValidationError, match="max_lag"):
        sample_autocovariance(as_series([1.0, -1.0]), 2)


def test_yule_walker_scalar_ar1():
    model = fit_yule_walker([np.array([[1.0]]), np.array([[0.5]])], 1)
    assert model.coeffs[0, 0, 0] == pytest.approx(0.5, abs=1e-12)
    assert model.noise_cov[0, 0] == pytest.approx(0.75, abs=1e-12)


def test_yule_walker_zero_variance_is_singular():
    with pytest.raises(NumericalError):
        fit_yule_walker([np.array([[0.0]]), np.array([[0.0]])], 1)


def test_residual_covariance_is_the_fitted_noise(var2_series):
    _, series = var2_series
    model = fit_least_squares(series, 2)
    e = residuals(model, series).values
    cov = e.T @ e / e.shape[0]
    np.testing.assert_allclose(cov, model.noise_cov, rtol=1e-10, atol=1e-12)


def test_noise_correlation_of_strongly_coupled_pair():
    v = np.array([[1.0, 0.84575], [0.84575, 1.0]])
    corr = noise_correlation(VarModel(np.zeros((0, 2, 2)), v), n_obs=998)
    assert corr.matrix[1, 0] == pytest.approx(0.84575, abs=1e-12)
    assert corr.threshold == pytest.approx(1.0 / np.sqrt(1000.0))
    assert round(corr.threshold, 4) == 0.0316
