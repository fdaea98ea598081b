"""
Power contribution analysis.

Classical (Akaike) decomposition assumes a diagonal noise covariance
and splits each channel's power spectrum into k non-negative parts,

    s_il(f) = |b_il(f)|^2 sigma_l^2,      r_il(f) = s_il(f) / p_ii(f).

The extended decomposition keeps the off-diagonal covariances tau_lm
and adds k(k-1)/2 pair terms

    s_ij(f) = 2 (alpha_il alpha_im + beta_il beta_im) tau_lm,

with b = alpha + i beta.  The factor 2 collects the (l, m) and (m, l)
cross products, so the terms still add up to p_ii(f).  Pair terms are
real but can be negative: correlated noise can reduce power.  Relative
shares then fall outside [0, 1] while still summing to one.

Term numbers: 1..k for the independent noises, then pair (l, m),
m < l, gets j = j_l + m with j_2 = k and j_l = j_{l-1} + l - 2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from utils.errors import ValidationError, ZeroPowerError  # type: ignore
from utils.series import FrequencyGrid  # type: ignore
from utils.spectral import transfer_matrices  # type: ignore
from utils.var_model import VarModel  # type: ignore


logger = logging.getLogger(__name__)

CLASSICAL = "classical"
EXTENDED = "extended"
MODES = (CLASSICAL, EXTENDED)


def pair_index(l: int, m: int, k: int) -> int:
    """Term number of the noise pair (l, m), 1-based with 1 <= m < l <= k."""
    if not (1 <= m < l <= k):
        raise ValidationError(f"pair (l={l}, m={m}) needs 1 <= m < l <= k={k}")
    j_l = k
    for step in range(3, l + 1):
        j_l += step - 2
    return j_l + m


@dataclass(frozen=True)
class PairIndexMap:
    """Bijection between noise pairs (l, m) and term numbers k+1..k(k+1)/2."""

    k: int
    forward: Dict[Tuple[int, int], int]
    inverse: Dict[int, Tuple[int, int]]

    @classmethod
    def build(cls, k: int) -> "PairIndexMap":
        forward = {(l, m): pair_index(l, m, k) for l in range(2, k + 1) for m in range(1, l)}
        inverse = {j: lm for lm, j in forward.items()}
        return cls(k, forward, inverse)

    @property
    def n_terms(self) -> int:
        return self.k * (self.k + 1) // 2

    def column(self, l: int, m: int) -> int:
        """0-based array column of pair (l, m)."""
        return self.forward[(l, m)] - 1

    def pair(self, j: int) -> Tuple[int, int]:
        return self.inverse[j]

    def labels(self, names: Sequence[str]) -> List[str]:
        """``name_l`` for single terms and ``name_m+name_l`` (m < l) for pairs."""
        labels = [str(n) for n in names]
        for j in range(self.k + 1, self.n_terms + 1):
            l, m = self.inverse[j]
            labels.append(f"{names[m - 1]}+{names[l - 1]}")
        return labels


@dataclass(frozen=True)
class ContributionDecomposition:
    """Per-frequency, per-target power contributions.

    Attributes:
        grid: Frequencies.
        mode: ``classical`` or ``extended``.
        absolute: Array (len(grid), k, n_terms); ``absolute[f, i, j]``
            is the power contributed by term j to target i.
        total: Array (len(grid), k) of p_ii(f) (sum of the terms).
        relative: ``absolute / total``, or None for an absolute-only result.
        term_labels: One label per term.
        channel_names: Target labels.
    """

    grid: FrequencyGrid
    mode: str
    absolute: np.ndarray
    total: np.ndarray
    relative: Optional[np.ndarray]
    term_labels: tuple
    channel_names: tuple

    @property
    def k(self) -> int:
        return self.total.shape[1]

    @property
    def n_terms(self) -> int:
        return self.absolute.shape[2]

    def values(self, kind: str = "absolute") -> np.ndarray:
        if kind == "absolute":
            return self.absolute
        if kind == "relative":
            if self.relative is None:
                raise ValidationError("decomposition has no relative contributions")
            return self.relative
        raise ValidationError(f"unknown kind '{kind}' (expected 'absolute' or 'relative')")


def _check_target(dec: ContributionDecomposition, target: int) -> None:
    if not 0 <= target < dec.k:
        raise ValidationError(f"target index {target} out of range for k={dec.k}")


def _classical_terms(b: np.ndarray, noise_cov: np.ndarray) -> np.ndarray:
    alpha, beta = np.real(b), np.imag(b)
    return (alpha ** 2 + beta ** 2) * np.diag(noise_cov)[np.newaxis, np.newaxis, :]


def _extended_terms(b: np.ndarray, noise_cov: np.ndarray) -> np.ndarray:
    k = noise_cov.shape[0]
    index = PairIndexMap.build(k)
    alpha, beta = np.real(b), np.imag(b)
    terms = np.empty(b.shape[:2] + (index.n_terms,))
    terms[:, :, :k] = _classical_terms(b, noise_cov)
    for (l, m), j in index.forward.items():
        cross = alpha[:, :, l - 1] * alpha[:, :, m - 1] + beta[:, :, l - 1] * beta[:, :, m - 1]
        terms[:, :, j - 1] = 2.0 * cross * noise_cov[l - 1, m - 1]
    return terms


def _decompose(model: VarModel, grid: FrequencyGrid, mode: str, workers: int) -> ContributionDecomposition:
    if mode not in MODES:
        raise ValidationError(f"unknown mode '{mode}' (expected one of {MODES})")
    b = transfer_matrices(model, grid, workers)
    if mode == CLASSICAL:
        absolute = _classical_terms(b, model.noise_cov)
        labels = tuple(model.channel_names)
    else:
        absolute = _extended_terms(b, model.noise_cov)
        labels = tuple(PairIndexMap.build(model.k).labels(model.channel_names))
    total = absolute.sum(axis=2)
    logger.debug("%s decomposition: %d frequencies, %d terms", mode, len(grid), absolute.shape[2])
    return ContributionDecomposition(grid, mode, absolute, total, None, labels, tuple(model.channel_names))


def _with_relative(dec: ContributionDecomposition) -> ContributionDecomposition:
    positive = dec.total > 0
    if not np.all(positive):
        fi, ci = np.argwhere(~positive)[0]
        raise ZeroPowerError(float(dec.grid.points[fi]), dec.channel_names[ci])
    relative = dec.absolute / dec.total[:, :, np.newaxis]
    return ContributionDecomposition(
        dec.grid, dec.mode, dec.absolute, dec.total, relative, dec.term_labels, dec.channel_names
    )


def akaike_absolute(model: VarModel, grid: FrequencyGrid, workers: int = 1) -> ContributionDecomposition:
    """Akaike absolute power contributions |b_jl(f)|^2 sigma_l^2.

    Off-diagonal noise covariances are ignored (treated as zero).
    """
    return _decompose(model, grid, CLASSICAL, workers)


def akaike_relative(model: VarModel, grid: FrequencyGrid, workers: int = 1) -> ContributionDecomposition:
    """Akaike relative power contributions; each row sums to one.

    Raises:
        ZeroPowerError: A channel has zero power at some grid frequency.
    """
    return _with_relative(akaike_absolute(model, grid, workers))


def extended_absolute(model: VarModel, grid: FrequencyGrid, workers: int = 1) -> ContributionDecomposition:
    """Extended absolute contributions: k independent terms then the signed pair terms."""
    return _decompose(model, grid, EXTENDED, workers)


def extended_relative(model: VarModel, grid: FrequencyGrid, workers: int = 1) -> ContributionDecomposition:
    """Extended relative contributions; they sum to one but may leave [0, 1]."""
    return _with_relative(extended_absolute(model, grid, workers))


def decompose(
    model: VarModel, grid: FrequencyGrid, mode: str = EXTENDED, relative: bool = True, workers: int = 1
) -> ContributionDecomposition:
    """Dispatch on ``mode`` and whether relative shares are wanted."""
    dec = _decompose(model, grid, mode, workers)
    return _with_relative(dec) if relative else dec


def cumulative_stack(dec: ContributionDecomposition, target: int, kind: str = "absolute") -> np.ndarray:
    """Running sums over the terms of one target, for stacked-area plots.

    Returns:
        Array (len(grid), n_terms); the last column equals the total
        (or one for relative values).
    """
    _check_target(dec, target)
    return np.cumsum(dec.values(kind)[:, target, :], axis=1)


def band_contributions(
    dec: ContributionDecomposition,
    target: int,
    f_low: Optional[float] = None,
    f_high: Optional[float] = None,
) -> pd.Series:
    """Integrate each absolute term over a frequency band.

    The integral is doubled to account for the mirrored negative
    frequencies, so over the full [0, 0.5] band the terms add up to the
    stationary variance of the target.

    Args:
        dec: Decomposition on a grid covering the band.
        target: 0-based target channel.
        f_low: Lower band edge (default: first grid point).
        f_high: Upper band edge (default: last grid point).

    Returns:
        Series indexed by term label.
    """
    _check_target(dec, target)
    f = dec.grid.points
    lo = f[0] if f_low is None else f_low
    hi = f[-1] if f_high is None else f_high
    mask = (f >= lo) & (f <= hi)
    if mask.sum() < 2:
        raise ValidationError(f"band [{lo}, {hi}] contains fewer than two grid points")
    values = 2.0 * trapezoid(dec.absolute[mask, target, :], f[mask], axis=0)
    return pd.Series(values, index=list(dec.term_labels), name=dec.channel_names[target])


def decomposition_frame(dec: ContributionDecomposition, target: int, kind: str = "absolute") -> pd.DataFrame:
    """Columns ``f``, ``total`` and one column per term for one target.

    For relative values ``total`` is the row sum of the shares (one).
    """
    _check_target(dec, target)
    values = dec.values(kind)[:, target, :]
    total = dec.total[:, target] if kind == "absolute" else values.sum(axis=1)
    frame = pd.DataFrame(values, columns=list(dec.term_labels))
    frame.insert(0, "total", total)
    frame.insert(0, "f", dec.grid.points)
    return frame


def stack_frame(dec: ContributionDecomposition, target: int, kind: str = "absolute") -> pd.DataFrame:
    """Cumulative sums per term, labelled like :func:`decomposition_frame`."""
    stack = cumulative_stack(dec, target, kind)
    frame = pd.DataFrame(stack, columns=list(dec.term_labels))
    frame.insert(0, "f", dec.grid.points)
    return frame


def decomposition_to_json(dec: ContributionDecomposition) -> Dict[str, Any]:
    """JSON-ready structure with mode, term metadata and per-target values."""
    k = dec.k
    index = PairIndexMap.build(k)
    terms = []
    for j, label in enumerate(dec.term_labels, start=1):
        if j <= k:
            terms.append({"j": j, "l": j, "m": j, "label": label})
        else:
            l, m = index.pair(j)
            terms.append({"j": j, "l": l, "m": m, "label": label})
    targets = []
    for i, name in enumerate(dec.channel_names):
        entry = {
            "channel": name,
            "total": dec.total[:, i].tolist(),
            "absolute": dec.absolute[:, i, :].tolist(),
        }
        if dec.relative is not None:
            entry["relative"] = dec.relative[:, i, :].tolist()
        targets.append(entry)
    return {
        "mode": dec.mode,
        "k": k,
        "n_terms": dec.n_terms,
        "frequencies": dec.grid.points.tolist(),
        "terms": terms,
        "targets": targets,
    }
