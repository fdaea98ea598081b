"""
Multichannel time series and the frequency grid.

This module ingests observation tables (one row per time step, one
column per channel), validates them and applies the small amount of
preprocessing the models expect.  It also defines the frequency grid
shared by every spectral computation.  Frequencies are kept in
cycles/sample; conversion to Hz belongs to presentation code.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from utils.errors import DataFormatError, ValidationError  # type: ignore
from utils.output import FLOAT_FORMAT, write_text_atomic  # type: ignore


logger = logging.getLogger(__name__)

# Default grid: 201 uniform points on [0, 0.5]
DEFAULT_GRID_POINTS = 201
DEFAULT_F_MAX = 0.5


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class MultivariateSeries:
    """An N x k block of observations with channel names.

    Attributes:
        names: k unique channel labels.
        values: N x k read-only float array.
        sampling_interval: Time units per sample (positive).
    """

    names: tuple
    values: np.ndarray
    sampling_interval: float = 1.0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise ValidationError("series values must be a 2D array of shape (N, k)")
        n_obs, k = values.shape
        if n_obs < 1 or k < 1:
            raise ValidationError(f"series needs N >= 1 and k >= 1, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad_row, bad_col = np.argwhere(~np.isfinite(values))[0]
            raise ValidationError(
                f"series contains a non-finite value at row {bad_row + 1}, column {bad_col + 1}"
            )
        names = tuple(str(n) for n in self.names)
        if len(names) != k:
            raise ValidationError(f"expected {k} channel names, got {len(names)}")
        if len(set(names)) != k:
            raise ValidationError(f"channel names must be unique: {list(names)}")
        if not (self.sampling_interval > 0 and np.isfinite(self.sampling_interval)):
            raise ValidationError(f"sampling_interval must be positive, got {self.sampling_interval}")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "sampling_interval", float(self.sampling_interval))

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "MultivariateSeries":
        """Return a series with the same names and interval but new values."""
        return MultivariateSeries(self.names, values, self.sampling_interval)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(np.array(self.values), columns=list(self.names))


@dataclass(frozen=True)
class FrequencyGrid:
    """Ascending frequencies in cycles/sample, all within [0, 0.5]."""

    points: np.ndarray

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=float).reshape(-1)
        if points.size < 1:
            raise ValidationError("frequency grid must not be empty")
        if not np.all(np.isfinite(points)):
            raise ValidationError("frequency grid contains non-finite values")
        if points[0] < 0.0 or points[-1] > 0.5:
            raise ValidationError("frequency grid must lie within [0, 0.5] cycles/sample")
        if np.any(np.diff(points) <= 0):
            raise ValidationError("frequency grid must be strictly increasing")
        object.__setattr__(self, "points", _frozen(points))

    def __len__(self) -> int:
        return self.points.size

    def to_hz(self, sampling_interval: float) -> np.ndarray:
        """Convert the grid to Hz for a series sampled every ``sampling_interval``."""
        return self.points / float(sampling_interval)


def default_names(k: int) -> List[str]:
    return [f"x{i + 1}" for i in range(k)]


def load_csv(
    path: Union[str, Path],
    has_header: bool = True,
    sampling_interval: float = 1.0,
) -> MultivariateSeries:
    """Read a comma-separated observation table.

    Args:
        path: CSV file with one row per time step and one column per
            channel.
        has_header: If True the first line holds channel names;
            otherwise names are generated as ``x1..xk``.
        sampling_interval: Time units per sample.

    Returns:
        The series, rows in file order.

    Raises:
        DataFormatError: The file is unreadable, empty, ragged or has a
            non-numeric cell.  Cell positions are reported as 1-based
            data row (header excluded) and column.
    """
    path = Path(path)
    try:
        raw = pd.read_csv(
            path,
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
        )
    except FileNotFoundError:
        raise DataFormatError(f"input file not found: {path}")
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"{path}: no data rows")
    except pd.errors.ParserError as e:
        raise DataFormatError(f"{path}: ragged rows ({e})")
    except (OSError, UnicodeDecodeError) as e:
        raise DataFormatError(f"cannot read {path}: {e}")

    if has_header:
        header = [str(h).strip() for h in raw.iloc[0].tolist()] if len(raw) else []
        body = raw.iloc[1:]
    else:
        header = []
        body = raw
    if body.shape[0] == 0:
        raise DataFormatError(f"{path}: no data rows")
    if body.shape[1] == 0:
        raise DataFormatError(f"{path}: no columns")

    # Rows with fewer fields than the widest row come back as NaN.
    missing = body.isna().to_numpy()
    if missing.any():
        row = int(np.argwhere(missing.any(axis=1))[0][0]) + 1
        raise DataFormatError(f"{path}: ragged rows (row {row} has too few fields)", row=row)

    stripped = body.apply(lambda col: col.str.strip())
    numeric = stripped.apply(pd.to_numeric, errors="coerce")
    values = numeric.to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        cell = stripped.iat[r, c]
        raise DataFormatError(
            f"{path}: non-numeric value {cell!r} at row {r + 1}, column {c + 1}",
            row=int(r) + 1,
            column=int(c) + 1,
        )
    # correctly rounded parse so written files read back bit for bit
    values = stripped.to_numpy(dtype=str).astype(float)

    names = header if has_header else default_names(values.shape[1])
    if has_header and any(not h for h in names):
        raise DataFormatError(f"{path}: header has an empty channel name")
    try:
        series = MultivariateSeries(tuple(names), values, sampling_interval)
    except ValidationError as e:
        raise DataFormatError(f"{path}: {e}")
    logger.debug("loaded %s: N=%d, k=%d", path, series.n_obs, series.k)
    return series


def series_to_csv(series: MultivariateSeries) -> str:
    """Render a series as CSV text (header line, 17 significant digits)."""
    return series.to_frame().to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_csv(series: MultivariateSeries, path: Union[str, Path]) -> Path:
    """Write ``series`` to ``path`` atomically; ``load_csv`` reads it back unchanged."""
    return write_text_atomic(Path(path), series_to_csv(series))


def demean(series: MultivariateSeries) -> MultivariateSeries:
    """Subtract each column's sample mean.

    Columns whose mean is already zero to within ``1e-12 * max|value|``
    are left untouched, which makes the operation idempotent bit for bit.
    """
    values = np.array(series.values)
    means = values.mean(axis=0)
    scale = np.abs(values).max(axis=0)
    centred = np.abs(means) <= 1e-12 * scale
    means[centred] = 0.0
    return series.with_values(values - means[np.newaxis, :])


def make_grid(n_points: int = DEFAULT_GRID_POINTS, f_max: float = DEFAULT_F_MAX) -> FrequencyGrid:
    """Uniform grid from 0 to ``f_max`` inclusive.

    Args:
        n_points: Number of grid points (at least 2).
        f_max: Upper frequency in (0, 0.5] cycles/sample.

    Returns:
        The grid.

    Raises:
        ValidationError: ``n_points < 2`` or ``f_max`` out of range.
    """
    if int(n_points) != n_points or n_points < 2:
        raise ValidationError(f"grid needs at least 2 points, got {n_points}")
    if not (0.0 < f_max <= 0.5):
        raise ValidationError(f"f_max must lie in (0, 0.5], got {f_max}")
    return FrequencyGrid(np.linspace(0.0, float(f_max), int(n_points)))


def as_series(
    values: Union[np.ndarray, Sequence[Sequence[float]]],
    names: Optional[Sequence[str]] = None,
    sampling_interval: float = 1.0,
) -> MultivariateSeries:
    """Wrap an array as a series, generating ``x1..xk`` names when none are given."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return MultivariateSeries(tuple(names or default_names(arr.shape[1])), arr, sampling_interval)


def channel_index(names: Sequence[str], key: Union[int, str]) -> int:
    """Resolve a channel given by name or 1-based number to a 0-based index.

    Names match exactly first, then case-insensitively.

    Raises:
        ValidationError: No channel matches ``key``.
    """
    names = [str(n) for n in names]
    text = str(key).strip()
    if text in names:
        return names.index(text)
    lowered = [n.lower() for n in names]
    if text.lower() in lowered:
        return lowered.index(text.lower())
    try:
        number = int(text)
    except ValueError:
        number = 0
    if 1 <= number <= len(names):
        return number - 1
    raise ValidationError(f"unknown channel '{key}'; expected a name from {names} or a number 1..{len(names)}")
