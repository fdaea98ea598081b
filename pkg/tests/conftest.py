"""Shared model and data factories for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from utils.series import as_series
from utils.var_model import VarModel, spectral_radius


def random_psd(rng: np.random.Generator, k: int) -> np.ndarray:
    """Random well-conditioned covariance with non-zero off-diagonals."""
    l = rng.normal(size=(k, k))
    return l @ l.T / k + 0.1 * np.eye(k)


def random_stable_model(rng: np.random.Generator, k: int, m: int, radius: float = 0.8) -> VarModel:
    """Random VAR(m) rescaled so its companion spectral radius equals ``radius``."""
    coeffs = rng.normal(scale=0.5, size=(m, k, k))
    raw = spectral_radius(VarModel(coeffs, np.eye(k)))
    scale = radius / raw
    coeffs = np.stack([coeffs[j] * scale ** (j + 1) for j in range(m)])
    return VarModel(coeffs, random_psd(rng, k))


def negative_covariance_model() -> VarModel:
    """Bivariate VAR(1) whose strongly negative noise covariance cancels power."""
    return VarModel(
        np.array([[[0.5, 0.3], [0.3, 0.5]]]),
        np.array([[1.0, -0.8], [-0.8, 1.0]]),
        ("a", "b"),
    )


def four_channel_model() -> VarModel:
    """VAR(1) with unit independent noises where a (1,2) covariance raises
    the variance of channel 2 and lowers that of channel 4."""
    a = np.array(
        [
            [0.5, 0.0, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
            [0.0, 0.0, 0.5, 0.0],
            [0.8, -0.5, 0.0, 0.0],
        ]
    )
    return VarModel(a[np.newaxis], np.eye(4), ("y1", "y2", "y3", "y4"))


def simulate_var(model: VarModel, n_obs: int, seed: int, burn: int = 200) -> np.ndarray:
    """Plain recursion with Cholesky-coloured Gaussian noise, independent of the library simulator."""
    rng = np.random.default_rng(seed)
    k, m = model.k, model.order
    chol = np.linalg.cholesky(model.noise_cov)
    noise = rng.standard_normal((burn + n_obs, k)) @ chol.T
    y = np.zeros_like(noise)
    for n in range(burn + n_obs):
        y[n] = noise[n]
        for j in range(1, min(m, n) + 1):
            y[n] += model.coeffs[j - 1] @ y[n - j]
    return y[burn:]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def neg_model() -> VarModel:
    return negative_covariance_model()


@pytest.fixture
def mc_model() -> VarModel:
    return four_channel_model()


@pytest.fixture
def var2_series():
    """Long sample of a strongly second-order bivariate process."""
    model = VarModel(
        np.array([[[0.6, 0.2], [-0.1, 0.5]], [[-0.4, 0.0], [0.1, -0.3]]]),
        np.array([[1.0, 0.3], [0.3, 0.5]]),
        ("x1", "x2"),
    )
    return model, as_series(simulate_var(model, 4000, seed=7), ("x1", "x2"))


@pytest.fixture
def csv_file(tmp_path, var2_series):
    """The VAR(2) sample written as CSV with a header line."""
    _, series = var2_series
    path = tmp_path / "series.csv"
    series.to_frame().to_csv(path, index=False, float_format="%.17g")
    return path
