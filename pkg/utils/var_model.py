"""
Vector autoregressive models: fitting, order selection and residuals.

A k-channel VAR(m) model is

    y_n = A_1 y_{n-1} + ... + A_m y_{n-m} + v_n,   v_n ~ N(0, V).

Two estimators are provided.  Least squares regresses each row on its
m lagged rows (no intercept; series are expected to be demeaned).
Yule-Walker solves the block-Toeplitz normal equations built from the
sample autocovariances.  Order selection scores every candidate order
on the same effective sample with

    AIC(m) = (N - M) log det V_m + 2 (k^2 m + k (k + 1) / 2),

where M is the largest candidate order.

Models are immutable and exchanged between commands as JSON.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg

from utils.errors import (  # type: ignore
    NumericalError,
    RankDeficiencyError,
    ValidationError,
)
from utils.output import to_json_text, write_text_atomic  # type: ignore
from utils.series import MultivariateSeries, default_names  # type: ignore


logger = logging.getLogger(__name__)

# Relative pivot size below which a regressor counts as collinear
RANK_TOLERANCE = 1e-10
# Relative tie width when comparing AIC values
AIC_TIE_TOLERANCE = 1e-9
# Condition number above which the Yule-Walker system is treated as singular
YW_CONDITION_LIMIT = 1e12


def _readonly(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float, copy=True)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class VarModel:
    """A fitted (or hand-specified) VAR model.

    Attributes:
        coeffs: Array of shape (m, k, k); ``coeffs[j - 1]`` is A_j.
        noise_cov: Symmetric k x k noise covariance V.
        channel_names: k channel labels.
        sampling_interval: Time units per sample of the fitted series.
        n_obs: Length of the series the model was fitted on, if any.
    """

    coeffs: np.ndarray
    noise_cov: np.ndarray
    channel_names: tuple = ()
    sampling_interval: float = 1.0
    n_obs: Optional[int] = None

    def __post_init__(self) -> None:
        noise_cov = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        if noise_cov.ndim != 2 or noise_cov.shape[0] != noise_cov.shape[1]:
            raise ValidationError(f"noise_cov must be square, got shape {noise_cov.shape}")
        k = noise_cov.shape[0]
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.size == 0:
            coeffs = np.zeros((0, k, k))
        if coeffs.ndim == 2 and k == 1:
            coeffs = coeffs.reshape(-1, 1, 1)
        if coeffs.ndim != 3 or coeffs.shape[1:] != (k, k):
            raise ValidationError(
                f"coeffs must have shape (m, {k}, {k}), got {coeffs.shape}"
            )
        if not (np.all(np.isfinite(coeffs)) and np.all(np.isfinite(noise_cov))):
            raise ValidationError("model contains non-finite coefficients or covariances")
        scale = max(float(np.abs(noise_cov).max()), np.finfo(float).tiny)
        if np.abs(noise_cov - noise_cov.T).max() > 1e-12 * scale:
            raise ValidationError("noise_cov must be symmetric")
        noise_cov = 0.5 * (noise_cov + noise_cov.T)
        trace = float(np.trace(noise_cov))
        if k and np.linalg.eigvalsh(noise_cov).min() < -1e-10 * max(trace, 0.0):
            raise ValidationError("noise_cov must be positive semi-definite")
        names = tuple(self.channel_names) if self.channel_names else tuple(default_names(k))
        if len(names) != k or len(set(names)) != k:
            raise ValidationError(f"expected {k} unique channel names, got {list(names)}")
        object.__setattr__(self, "coeffs", _readonly(coeffs))
        object.__setattr__(self, "noise_cov", _readonly(noise_cov))
        object.__setattr__(self, "channel_names", names)
        object.__setattr__(self, "sampling_interval", float(self.sampling_interval))

    @property
    def k(self) -> int:
        return self.noise_cov.shape[0]

    @property
    def order(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_stable(self) -> bool:
        return spectral_radius(self) < 1.0

    def with_noise_cov(self, noise_cov: np.ndarray) -> "VarModel":
        return VarModel(self.coeffs, noise_cov, self.channel_names, self.sampling_interval, self.n_obs)

    def diagonalized(self) -> "VarModel":
        """Copy of the model with the off-diagonal noise covariances set to zero."""
        return self.with_noise_cov(np.diag(np.diag(self.noise_cov)))


@dataclass(frozen=True)
class ResidualSeries:
    """One-step prediction errors e_n for n = m+1..N.

    Attributes:
        values: (N - m) x k array.
        start_index: 0-based row of the source series the first residual
            belongs to (equal to the model order).
    """

    values: np.ndarray
    start_index: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _readonly(self.values))


@dataclass(frozen=True)
class NoiseCorrelation:
    """Noise correlation matrix with its significance threshold 1/sqrt(N+2)."""

    matrix: np.ndarray
    threshold: Optional[float]
    channel_names: tuple = field(default=())

    def significant_pairs(self) -> List[Tuple[int, int, float]]:
        """1-based ``(l, m, r_lm)`` with ``m < l`` and ``|r_lm|`` above the threshold."""
        if self.threshold is None:
            return []
        k = self.matrix.shape[0]
        return [
            (l + 1, m + 1, float(self.matrix[l, m]))
            for l in range(1, k)
            for m in range(l)
            if abs(self.matrix[l, m]) > self.threshold
        ]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.matrix, index=list(self.channel_names), columns=list(self.channel_names))


# ---------------------------------------------------------------------------
# Autocovariances and estimators


def sample_autocovariance(series: MultivariateSeries, max_lag: int) -> List[np.ndarray]:
    """Sample autocovariances C_0..C_max_lag with divisor N.

    C_h = (1/N) sum_{n=h+1..N} y_n y_{n-h}^T.  The series is used as
    given; demean it first.
    """
    y = np.asarray(series.values)
    n_obs = y.shape[0]
    if max_lag < 0 or max_lag >= n_obs:
        raise ValidationError(f"max_lag must lie in [0, N-1] = [0, {n_obs - 1}], got {max_lag}")
    return [y[h:].T @ y[: n_obs - h] / n_obs for h in range(max_lag + 1)]


def _lagged_design(y: np.ndarray, order: int, start: int) -> Tuple[np.ndarray, np.ndarray]:
    """Targets y_n (n >= start) and regressors [y_{n-1}, ..., y_{n-order}]."""
    n_obs = y.shape[0]
    targets = y[start:]
    if order == 0:
        return targets, np.zeros((n_obs - start, 0))
    lags = [y[start - j : n_obs - j] for j in range(1, order + 1)]
    return targets, np.concatenate(lags, axis=1)


def _solve_regression(
    targets: np.ndarray, regressors: np.ndarray, order: int, names: Sequence[str]
) -> np.ndarray:
    """Least-squares coefficients as an (m, k, k) array, checking the rank first."""
    k = targets.shape[1]
    if order == 0:
        return np.zeros((0, k, k))
    _, r, piv = scipy.linalg.qr(regressors, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = RANK_TOLERANCE * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol)) if diag.size and diag[0] > 0 else 0
    if rank < regressors.shape[1]:
        collinear = sorted((int(col) // k + 1, names[int(col) % k]) for col in piv[rank:])
        raise RankDeficiencyError(collinear)
    beta, *_ = scipy.linalg.lstsq(regressors, targets)
    # beta rows are ordered (lag 1 channels, lag 2 channels, ...); A_j = block^T
    return np.stack([beta[(j - 1) * k : j * k, :].T for j in range(1, order + 1)])


def _residual_covariance(residuals: np.ndarray) -> np.ndarray:
    cov = residuals.T @ residuals / residuals.shape[0]
    return 0.5 * (cov + cov.T)


def fit_least_squares(series: MultivariateSeries, order: int) -> VarModel:
    """Fit a VAR(order) model by ordinary least squares.

    The coefficients minimise sum_n ||y_n - sum_j A_j y_{n-j}||^2 over
    n = m+1..N and the noise covariance is the residual covariance with
    divisor N - m.  Order 0 gives an empty coefficient list with
    V = (1/N) sum y_n y_n^T.

    Args:
        series: Observations, normally demeaned.
        order: Model order m >= 0.

    Returns:
        The fitted model.

    Raises:
        ValidationError: Negative order or too few observations
            (N must be at least k*m + k + 1).
        RankDeficiencyError: The lagged regressors are collinear.
    """
    if int(order) != order or order < 0:
        raise ValidationError(f"order must be a non-negative integer, got {order}")
    order = int(order)
    y = np.asarray(series.values)
    n_obs, k = y.shape
    needed = k * order + k + 1
    if order > 0 and n_obs < needed:
        raise ValidationError(
            f"insufficient data: order {order} with k={k} needs N >= {needed}, got N={n_obs}"
        )
    targets, regressors = _lagged_design(y, order, order)
    coeffs = _solve_regression(targets, regressors, order, series.names)
    resid = targets - regressors @ _stack_coeffs(coeffs).T if order else targets
    model = VarModel(
        coeffs,
        _residual_covariance(resid),
        series.names,
        series.sampling_interval,
        n_obs,
    )
    logger.debug("least-squares VAR(%d) fitted on N=%d, k=%d", order, n_obs, k)
    return model


def _stack_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """[A_1 A_2 ... A_m] as a k x km block row."""
    if coeffs.shape[0] == 0:
        return np.zeros((coeffs.shape[1], 0))
    return np.concatenate(list(coeffs), axis=1)


def fit_yule_walker(
    cov: Sequence[np.ndarray],
    order: int,
    channel_names: Optional[Sequence[str]] = None,
    sampling_interval: float = 1.0,
    n_obs: Optional[int] = None,
) -> VarModel:
    """Solve the multivariate Yule-Walker equations.

    The equations C_h = sum_j A_j C_{h-j} (h = 1..m, C_{-h} = C_h^T) are
    solved as one block-Toeplitz system, and V = C_0 - sum_j A_j C_j^T.

    Args:
        cov: Autocovariances C_0..C_L with L >= order.
        order: Model order m >= 0.
        channel_names: Optional labels.
        sampling_interval: Carried into the model.
        n_obs: Series length the autocovariances came from.

    Returns:
        The fitted model.

    Raises:
        NumericalError: The block-Toeplitz system is singular.
    """
    cov = [np.atleast_2d(np.asarray(c, dtype=float)) for c in cov]
    if order < 0 or len(cov) < order + 1:
        raise ValidationError(f"need at least {order + 1} autocovariances, got {len(cov)}")
    k = cov[0].shape[0]
    c0 = cov[0]
    if order == 0:
        if np.linalg.cond(c0) > YW_CONDITION_LIMIT:
            raise NumericalError("Yule-Walker system is singular: C_0 is not invertible")
        return VarModel(np.zeros((0, k, k)), c0, tuple(channel_names or ()), sampling_interval, n_obs)

    def block(lag: int) -> np.ndarray:
        return cov[lag] if lag >= 0 else cov[-lag].T

    # gamma[(j, h)] = C_{h-j}, so [A_1..A_m] gamma = [C_1..C_m]
    gamma = np.block([[block(h - j) for h in range(order)] for j in range(order)])
    rhs = np.concatenate([cov[h] for h in range(1, order + 1)], axis=1)
    if not np.all(np.isfinite(gamma)) or np.linalg.cond(gamma) > YW_CONDITION_LIMIT:
        raise NumericalError("Yule-Walker system is singular (block-Toeplitz matrix not invertible)")
    stacked = scipy.linalg.solve(gamma.T, rhs.T).T
    coeffs = np.stack([stacked[:, j * k : (j + 1) * k] for j in range(order)])
    v = c0 - sum(coeffs[j] @ cov[j + 1].T for j in range(order))
    v = 0.5 * (v + v.T)
    logger.debug("Yule-Walker VAR(%d) fitted, k=%d", order, k)
    return VarModel(coeffs, v, tuple(channel_names or ()), sampling_interval, n_obs)


def fit(series: MultivariateSeries, order: int, estimator: str = "ls") -> VarModel:
    """Fit with the named estimator (``ls`` or ``yw``)."""
    if estimator == "ls":
        return fit_least_squares(series, order)
    if estimator == "yw":
        if order >= series.n_obs:
            raise ValidationError(f"insufficient data: order {order} needs N > {order}")
        cov = sample_autocovariance(series, order)
        return fit_yule_walker(cov, order, series.names, series.sampling_interval, series.n_obs)
    raise ValidationError(f"unknown estimator '{estimator}' (expected 'ls' or 'yw')")


# ---------------------------------------------------------------------------
# Order selection


def _aic_for_order(y: np.ndarray, order: int, max_order: int, names: Sequence[str]) -> float:
    targets, regressors = _lagged_design(y, order, max_order)
    coeffs = _solve_regression(targets, regressors, order, names)
    resid = targets - regressors @ _stack_coeffs(coeffs).T if order else targets
    v = _residual_covariance(resid)
    k = y.shape[1]
    sign, logdet = np.linalg.slogdet(v)
    if sign <= 0:
        logdet = -math.inf
    n_eff = y.shape[0] - max_order
    return n_eff * logdet + 2.0 * (k * k * order + k * (k + 1) / 2.0)


def pick_order(aic_values: Sequence[float]) -> int:
    """Index of the smallest AIC, preferring the smaller order on ties."""
    values = np.asarray(aic_values, dtype=float)
    best = float(np.min(values))
    if math.isinf(best):
        return int(np.argmin(values))
    width = AIC_TIE_TOLERANCE * max(1.0, abs(best))
    return int(np.flatnonzero(values <= best + width)[0])


def select_order_aic(
    series: MultivariateSeries, max_order: int, workers: int = 1
) -> Tuple[int, List[float]]:
    """Choose the VAR order by AIC over 0..max_order.

    All candidates are fitted on the common sample n = max_order+1..N
    so the criteria are comparable.

    Args:
        series: Observations, normally demeaned.
        max_order: Largest candidate order.
        workers: Candidate fits run on this many threads; the result
            does not depend on it.

    Returns:
        ``(best_order, aic_values)`` with ``aic_values[m]`` for order m.
    """
    if int(max_order) != max_order or max_order < 0:
        raise ValidationError(f"max_order must be a non-negative integer, got {max_order}")
    max_order = int(max_order)
    y = np.asarray(series.values)
    n_obs, k = y.shape
    needed = max(k * max_order + k + 1, (k + 1) * max_order + 1)
    if max_order > 0 and n_obs < needed:
        raise ValidationError(
            f"insufficient data: max_order {max_order} with k={k} needs N >= {needed}, got N={n_obs}"
        )
    orders = range(max_order + 1)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            aic = list(pool.map(lambda m: _aic_for_order(y, m, max_order, series.names), orders))
    else:
        aic = [_aic_for_order(y, m, max_order, series.names) for m in orders]
    best = pick_order(aic)
    logger.info("AIC order selection over 0..%d: best order %d", max_order, best)
    return best, aic


# ---------------------------------------------------------------------------
# Residuals, stability and noise correlation


def residuals(model: VarModel, series: MultivariateSeries) -> ResidualSeries:
    """One-step prediction errors e_n = y_n - sum_j A_j y_{n-j}, n = m+1..N."""
    y = np.asarray(series.values)
    if y.shape[1] != model.k:
        raise ValidationError(f"series has k={y.shape[1]} channels but the model has k={model.k}")
    m = model.order
    if y.shape[0] <= m:
        raise ValidationError(f"series of length {y.shape[0]} is too short for order {m}")
    targets, regressors = _lagged_design(y, m, m)
    values = targets - regressors @ _stack_coeffs(model.coeffs).T if m else targets.copy()
    return ResidualSeries(values, m)


def companion_matrix(model: VarModel) -> np.ndarray:
    """The km x km companion matrix of the model (k x k zero block for order 0)."""
    k, m = model.k, model.order
    if m == 0:
        return np.zeros((k, k))
    top = _stack_coeffs(model.coeffs)
    if m == 1:
        return top
    bottom = np.concatenate([np.eye(k * (m - 1)), np.zeros((k * (m - 1), k))], axis=1)
    return np.concatenate([top, bottom], axis=0)


def spectral_radius(model: VarModel) -> float:
    """Largest absolute eigenvalue of the companion matrix."""
    if model.order == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(companion_matrix(model)))))


def check_stability(model: VarModel) -> float:
    """Return the spectral radius, logging a warning for a non-stable model."""
    radius = spectral_radius(model)
    if radius >= 1.0:
        logger.warning(
            "model is not stable (companion spectral radius %.6g >= 1); "
            "spectra are still evaluated where A(f) is invertible",
            radius,
        )
    return radius


def noise_correlation(model: VarModel, n_obs: Optional[int] = None) -> NoiseCorrelation:
    """Correlation matrix of the noise with the 1/sqrt(N+2) flagging threshold.

    Args:
        model: Model whose noise covariance has a positive diagonal.
        n_obs: Series length for the threshold; defaults to
            ``model.n_obs``.  Without either the threshold is None.

    Raises:
        ValidationError: A noise variance is zero.
    """
    v = np.asarray(model.noise_cov)
    variances = np.diag(v)
    if np.any(variances <= 0):
        zero = [model.channel_names[i] for i in np.flatnonzero(variances <= 0)]
        raise ValidationError(f"zero noise variance for channel(s): {', '.join(zero)}")
    sd = np.sqrt(variances)
    corr = v / np.outer(sd, sd)
    np.fill_diagonal(corr, 1.0)
    n = n_obs if n_obs is not None else model.n_obs
    threshold = 1.0 / math.sqrt(n + 2) if n is not None else None
    return NoiseCorrelation(_readonly(corr), threshold, model.channel_names)


def significant_correlations(model: VarModel, n_obs: Optional[int] = None) -> List[Tuple[int, int, float]]:
    """Noise pairs whose correlation exceeds 1/sqrt(N+2); 1-based ``(l, m, r)``, m < l."""
    return noise_correlation(model, n_obs).significant_pairs()


# ---------------------------------------------------------------------------
# JSON exchange format


def model_to_dict(model: VarModel) -> Dict[str, Any]:
    return {
        "k": model.k,
        "order": model.order,
        "coeffs": [[float(x) for x in a.reshape(-1)] for a in model.coeffs],
        "noise_cov": [float(x) for x in model.noise_cov.reshape(-1)],
        "channel_names": list(model.channel_names),
        "sampling_interval": model.sampling_interval,
        "n_obs": model.n_obs,
    }


def model_from_dict(payload: Dict[str, Any]) -> VarModel:
    """Rebuild a model from its JSON document, validating shapes."""
    try:
        k = int(payload["k"])
        order = int(payload["order"])
        coeffs = np.asarray(payload["coeffs"], dtype=float)
        noise_cov = np.asarray(payload["noise_cov"], dtype=float).reshape(k, k)
        coeffs = coeffs.reshape(order, k, k) if order else np.zeros((0, k, k))
        names = tuple(payload.get("channel_names") or default_names(k))
        n_obs = payload.get("n_obs")
        return VarModel(
            coeffs,
            noise_cov,
            names,
            float(payload.get("sampling_interval", 1.0)),
            int(n_obs) if n_obs is not None else None,
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, ValidationError):
            raise
        raise ValidationError(f"invalid model document: {e}")


def model_to_json(model: VarModel) -> str:
    return to_json_text(model_to_dict(model))


def save_model(model: VarModel, path: Union[str, Path]) -> Path:
    """Write the model JSON document atomically."""
    return write_text_atomic(Path(path), model_to_json(model))


def load_model(path: Union[str, Path]) -> VarModel:
    """Read a model JSON document.

    Raises:
        ValidationError: Missing file, malformed JSON or inconsistent shapes.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except FileNotFoundError:
        raise ValidationError(f"model file not found: {path}")
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"cannot read model file {path}: {e}")
    return model_from_dict(payload)
