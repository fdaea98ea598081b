import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.signal import welch

from conftest import random_stable_model, simulate_var
from utils.errors import SingularFrequencyError
from utils.series import FrequencyGrid, make_grid
from utils.simulation import stationary_covariance
from utils.spectral import (
    ar_fourier,
    cross_spectrum,
    spectral_peaks,
    spectrum_diagonal,
    spectrum_frame,
    transfer_matrix,
)
from utils.var_model import VarModel


def test_ar_fourier_at_zero_frequency():
    model = VarModel(np.array([[[0.5, 0.1], [0.0, 0.3]], [[0.1, 0.0], [0.2, 0.1]]]), np.eye(2))
    np.testing.assert_allclose(ar_fourier(model, 0.0), np.eye(2) - model.coeffs.sum(axis=0), atol=1e-15)


def test_ar_fourier_matches_direct_sum(rng):
    model = random_stable_model(rng, 3, 4)
    f = 0.137
    direct = np.eye(3) - sum(model.coeffs[j] * np.exp(-2j * np.pi * (j + 1) * f) for j in range(4))
    np.testing.assert_allclose(ar_fourier(model, f), direct, atol=1e-13)


def test_white_noise_spectrum_is_flat():
    v = np.array([[2.0, 0.5], [0.5, 1.0]])
    model = VarModel(np.zeros((0, 2, 2)), v)
    cs = cross_spectrum(model, make_grid(11))
    for p in cs.matrices:
        np.testing.assert_allclose(p, v, atol=1e-15)


def test_univariate_ar1_spectrum():
    a, s2 = 0.6, 1.5
    model = VarModel(np.array([[[a]]]), np.array([[s2]]))
    grid = make_grid(51)
    p = spectrum_diagonal(cross_spectrum(model, grid), 0)
    f = grid.points
    expected = s2 / (1 - 2 * a * np.cos(2 * np.pi * f) + a * a)
    np.testing.assert_allclose(p, expected, rtol=1e-12)


def test_cross_spectrum_is_hermitian_psd(rng):
    model = random_stable_model(rng, 4, 2)
    cs = cross_spectrum(model, make_grid(31))
    for p in cs.matrices:
        np.testing.assert_array_equal(p, np.conj(p.T))
        assert np.linalg.eigvalsh(p).min() > -1e-10 * np.real(np.trace(p))


def test_unit_root_is_singular_at_zero():
    model = VarModel(np.array([[[1.0]]]), np.array([[1.0]]))
    with pytest.raises(SingularFrequencyError) as info:
        transfer_matrix(model, 0.0)
    assert info.value.frequency == 0.0
    assert "f=0" in str(info.value)


def test_parallel_grid_matches_serial(rng):
    model = random_stable_model(rng, 3, 3)
    grid = make_grid(64)
    serial = cross_spectrum(model, grid).matrices
    threaded = cross_spectrum(model, grid, workers=4).matrices
    np.testing.assert_array_equal(serial, threaded)


@pytest.mark.parametrize("seed", range(20))
def test_integrated_spectrum_matches_lyapunov_variance(seed):
    rng = np.random.default_rng(1000 + seed)
    k = int(rng.integers(2, 5))
    m = int(rng.integers(1, 4))
    model = random_stable_model(rng, k, m)
    grid = make_grid(1025, 0.5)
    p = np.real(np.diagonal(cross_spectrum(model, grid).matrices, axis1=1, axis2=2))
    # the spectrum is even in f: integrate [0, 1/2] and double
    integrated = 2.0 * trapezoid(p, grid.points, axis=0)
    np.testing.assert_allclose(integrated, np.diag(stationary_covariance(model)), rtol=5e-3)


def test_spectrum_matches_averaged_periodogram():
    model = VarModel(
        np.array([[[0.4, 0.2], [-0.1, 0.3]]]),
        np.array([[1.0, 0.3], [0.3, 0.5]]),
    )
    replicates, length, nperseg = 200, 4096, 128
    data = np.stack([simulate_var(model, length, seed=s) for s in range(replicates)])
    freqs, pxx = welch(data, fs=1.0, window="hann", nperseg=nperseg, axis=1)
    # one-sided density: halve to compare with the two-sided model spectrum
    estimate = pxx.mean(axis=0) / 2.0
    cs = cross_spectrum(model, FrequencyGrid(freqs))
    band = (freqs >= 0.02) & (freqs <= 0.48)
    for channel in range(2):
        truth = spectrum_diagonal(cs, channel)
        np.testing.assert_allclose(estimate[band, channel], truth[band], rtol=0.05)


def test_spectral_peaks_of_resonant_ar2():
    # poles at radius 0.9 and angle 2 pi 0.2 put the peak near f = 0.2
    r, f0 = 0.9, 0.2
    model = VarModel(
        np.array([[[2 * r * np.cos(2 * np.pi * f0)]], [[-r * r]]]),
        np.array([[1.0]]),
    )
    cs = cross_spectrum(model, make_grid(501))
    peaks = spectral_peaks(cs, 0, n_peaks=1)
    assert len(peaks) == 1
    assert peaks[0][0] == pytest.approx(0.2, abs=0.01)


def test_spectral_peaks_fill_with_shoulder():
    # a low-pass AR(1) has its only maximum at f = 0
    model = VarModel(np.array([[[0.7]]]), np.array([[1.0]]))
    cs = cross_spectrum(model, make_grid(201))
    peaks = spectral_peaks(cs, 0, n_peaks=2)
    assert peaks[0][0] == 0.0
    no_shoulders = spectral_peaks(cs, 0, n_peaks=2, include_shoulders=False)
    assert len(no_shoulders) == 1
    assert len(peaks) <= 2


def test_spectrum_frame_layout():
    model = VarModel(np.zeros((0, 2, 2)), np.eye(2))
    frame = spectrum_frame(cross_spectrum(model, make_grid(3)))
    assert list(frame.columns) == [
        "f",
        "p_11_re", "p_11_im", "p_12_re", "p_12_im",
        "p_21_re", "p_21_im", "p_22_re", "p_22_im",
    ]
    assert frame["p_11_re"].tolist() == [1.0, 1.0, 1.0]


def test_negative_frequency_gives_conjugate_spectrum(rng):
    model = random_stable_model(rng, 3, 2)
    v = model.noise_cov
    for f in (0.05, 0.21, 0.37):
        np.testing.assert_allclose(ar_fourier(model, -f), np.conj(ar_fourier(model, f)), atol=1e-14)
        b_pos = transfer_matrix(model, f).b_of_f
        b_neg = transfer_matrix(model, -f).b_of_f
        p_pos = b_pos @ v @ np.conj(b_pos.T)
        p_neg = b_neg @ v @ np.conj(b_neg.T)
        np.testing.assert_allclose(p_neg, np.conj(p_pos), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("seed", range(100))
def test_transfer_matrix_inverts_ar_fourier(seed):
    model = random_stable_model(np.random.default_rng(1000 + seed), 3, 2)
    for f in make_grid(21).points:
        tm = transfer_matrix(model, f)
        np.testing.assert_allclose(tm.a_of_f @ tm.b_of_f, np.eye(3), atol=1e-10)
