"""
Frequency response and cross-spectrum of a VAR model.

    A(f) = I - sum_j A_j exp(-2 pi i j f)
    B(f) = A(f)^{-1}
    P(f) = B(f) V B(f)^*

A(f) is evaluated directly by Horner's rule in z = exp(-2 pi i f) at
each requested frequency, so any grid (not only FFT bins) can be used.
A(f) that is singular to working precision raises an error instead of
producing infinities, since the decompositions divide by p_ii(f).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd
from scipy.signal import find_peaks

from utils.errors import SingularFrequencyError, ValidationError  # type: ignore
from utils.series import FrequencyGrid  # type: ignore
from utils.var_model import VarModel  # type: ignore


logger = logging.getLogger(__name__)

SINGULARITY_TOLERANCE = 1e-12
INVERSE_RESIDUAL_TOLERANCE = 1e-8


@dataclass(frozen=True)
class TransferMatrix:
    """A(f) and its inverse B(f) at one frequency."""

    frequency: float
    a_of_f: np.ndarray
    b_of_f: np.ndarray


@dataclass(frozen=True)
class CrossSpectrum:
    """Hermitian k x k spectral matrices P(f) over a grid.

    Attributes:
        grid: The frequency grid.
        matrices: Complex array of shape (len(grid), k, k).
        channel_names: Channel labels.
    """

    grid: FrequencyGrid
    matrices: np.ndarray
    channel_names: tuple

    @property
    def k(self) -> int:
        return self.matrices.shape[1]


def ar_fourier(model: VarModel, f: float) -> np.ndarray:
    """A(f) = I - sum_j A_j e^{-2 pi i j f}, evaluated with Horner's rule."""
    k = model.k
    z = np.exp(-2j * np.pi * f)
    acc = np.zeros((k, k), dtype=complex)
    for a_j in model.coeffs[::-1]:
        acc = (acc + a_j) * z
    return np.eye(k, dtype=complex) - acc


def transfer_matrix(model: VarModel, f: float) -> TransferMatrix:
    """A(f) together with B(f) = A(f)^{-1}.

    Raises:
        SingularFrequencyError: |det A(f)| is below 1e-12 * scale^k, with
            scale the largest entry magnitude of A(f), or the solve does
            not reproduce the identity.
    """
    a = ar_fourier(model, f)
    k = model.k
    scale = float(np.abs(a).max())
    det = np.linalg.det(a)
    if scale == 0.0 or abs(det) < SINGULARITY_TOLERANCE * scale ** k:
        raise SingularFrequencyError(f, f"|det A(f)| = {abs(det):.3g}")
    b = np.linalg.solve(a, np.eye(k, dtype=complex))
    residual = np.abs(a @ b - np.eye(k)).max()
    if residual > INVERSE_RESIDUAL_TOLERANCE * max(1.0, float(np.abs(b).max())):
        raise SingularFrequencyError(f, f"inverse residual {residual:.3g}")
    return TransferMatrix(float(f), a, b)


def transfer_matrices(model: VarModel, grid: FrequencyGrid, workers: int = 1) -> np.ndarray:
    """B(f) for every grid point as an array of shape (len(grid), k, k).

    Grid points are independent; ``workers > 1`` evaluates them on a
    thread pool with results kept in grid order.
    """
    points = list(grid.points)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda f: transfer_matrix(model, f).b_of_f, points))
    else:
        results = [transfer_matrix(model, f).b_of_f for f in points]
    return np.stack(results)


def cross_spectrum(model: VarModel, grid: FrequencyGrid, workers: int = 1) -> CrossSpectrum:
    """P(f) = B(f) V B(f)^* on the grid, symmetrised to be exactly Hermitian."""
    b = transfer_matrices(model, grid, workers)
    p = b @ model.noise_cov @ np.conj(np.swapaxes(b, 1, 2))
    p = 0.5 * (p + np.conj(np.swapaxes(p, 1, 2)))
    logger.debug("cross spectrum evaluated at %d frequencies, k=%d", len(grid), model.k)
    return CrossSpectrum(grid, p, model.channel_names)


def spectrum_diagonal(cs: CrossSpectrum, channel: int) -> np.ndarray:
    """Power spectrum p_ii(f) of ``channel`` (0-based) as a real array."""
    if not 0 <= channel < cs.k:
        raise ValidationError(f"channel index {channel} out of range for k={cs.k}")
    return np.real(cs.matrices[:, channel, channel]).copy()


def spectral_peaks(
    cs: CrossSpectrum,
    channel: int,
    n_peaks: int = 2,
    include_shoulders: bool = True,
) -> List[Tuple[float, float]]:
    """Locate the dominant peaks of a channel's power spectrum.

    Local maxima are ranked by height.  When fewer than ``n_peaks``
    exist and ``include_shoulders`` is set, shoulders fill the list:
    points on a rising or falling stretch where the slope comes closest
    to flat.

    Args:
        cs: Cross spectrum.
        channel: 0-based channel index.
        n_peaks: Maximum number of frequencies returned.
        include_shoulders: Whether shoulders may fill missing peaks.

    Returns:
        ``(frequency, power)`` tuples, highest power first.
    """
    p = spectrum_diagonal(cs, channel)
    f = cs.grid.points
    # pad with -inf so maxima at the grid edges are detected too
    padded = np.concatenate([[-np.inf], p, [-np.inf]])
    maxima, _ = find_peaks(padded)
    candidates = list(maxima - 1)
    ranked = sorted(candidates, key=lambda i: -p[i])[:n_peaks]
    if include_shoulders and len(ranked) < n_peaks and p.size >= 3:
        slope = np.gradient(p, f)
        falling, _ = find_peaks(slope)
        rising, _ = find_peaks(-slope)
        shoulders = [i for i in falling if slope[i] < 0] + [i for i in rising if slope[i] > 0]
        shoulders = sorted((i for i in shoulders if i not in ranked), key=lambda i: -p[i])
        ranked += shoulders[: n_peaks - len(ranked)]
    return [(float(f[i]), float(p[i])) for i in ranked]


def spectrum_frame(cs: CrossSpectrum) -> pd.DataFrame:
    """Export layout: ``f`` then ``p_{i}{j}_re`` / ``p_{i}{j}_im`` in row-major order (1-based)."""
    columns = {"f": cs.grid.points}
    for i in range(cs.k):
        for j in range(cs.k):
            columns[f"p_{i + 1}{j + 1}_re"] = np.real(cs.matrices[:, i, j])
            columns[f"p_{i + 1}{j + 1}_im"] = np.imag(cs.matrices[:, i, j])
    return pd.DataFrame(columns)
