"""
Simulation tools for interpreting power contributions.

Three views on the same model:

* counterfactual replay: rerun the fitted recursion on the observed
  residuals with all but selected noise channels switched off, to see
  how much of each series a single noise source explains;
* Monte Carlo ensembles: simulate the model under noise scenarios in
  which selected noise pairs are correlated and compare the average
  sample variances with the uncorrelated baseline;
* the stationary covariance, solved from the discrete Lyapunov
  equation of the companion form, which the ensembles converge to.

Replicate r of every scenario draws its standard normals from a
generator seeded with (seed, r).  The draws are therefore shared by all
scenarios (common random numbers), and results never depend on how the
replicates are split over worker threads.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg

from utils.errors import ScenarioError, UnstableModelError, ValidationError  # type: ignore
from utils.series import MultivariateSeries  # type: ignore
from utils.var_model import (  # type: ignore
    ResidualSeries,
    VarModel,
    check_stability,
    companion_matrix,
    spectral_radius,
)


logger = logging.getLogger(__name__)

BURN_IN_BASE = 100
BURN_IN_PER_LAG = 10
DEFAULT_CHUNK_SIZE = 64
PSD_TOLERANCE = 1e-10


def burn_in(order: int) -> int:
    """Samples discarded before the retained part of a simulation: 10 m + 100."""
    return BURN_IN_PER_LAG * order + BURN_IN_BASE


# ---------------------------------------------------------------------------
# Noise scenarios


@dataclass(frozen=True)
class NoiseScenario:
    """Independent noise variances plus a set of activated covariances.

    Attributes:
        base_variances: tau_11..tau_kk, all >= 0.
        active_pairs: ``(l, m, tau_lm)`` with 1-based ``m < l``.
        label: Display label, e.g. ``"(1+2)"``.
    """

    base_variances: tuple
    active_pairs: tuple = ()
    label: str = ""

    def __post_init__(self) -> None:
        variances = tuple(float(v) for v in self.base_variances)
        k = len(variances)
        if k == 0:
            raise ScenarioError("scenario needs at least one base variance")
        if any(not np.isfinite(v) or v < 0 for v in variances):
            raise ScenarioError(f"base variances must be finite and >= 0, got {list(variances)}")
        pairs = []
        seen = set()
        for entry in self.active_pairs:
            l, m, cov = int(entry[0]), int(entry[1]), float(entry[2])
            if l < m:
                l, m = m, l
            if not (1 <= m < l <= k):
                raise ScenarioError(f"pair ({l}, {m}) is not a valid pair of distinct channels 1..{k}", (l, m))
            if (l, m) in seen:
                raise ScenarioError(f"pair ({l}, {m}) listed twice", (l, m))
            seen.add((l, m))
            bound = np.sqrt(variances[l - 1] * variances[m - 1])
            if not np.isfinite(cov) or abs(cov) > bound * (1.0 + 1e-12):
                raise ScenarioError(
                    f"covariance {cov:.6g} of pair ({l}, {m}) exceeds sqrt(tau_ll tau_mm) = {bound:.6g}",
                    (l, m),
                )
            pairs.append((l, m, cov))
        object.__setattr__(self, "base_variances", variances)
        object.__setattr__(self, "active_pairs", tuple(sorted(pairs)))
        if not self.label:
            object.__setattr__(self, "label", default_label(k, self.active_pairs))
        cov = self.covariance
        eig_min = float(np.linalg.eigvalsh(cov).min())
        if eig_min < -PSD_TOLERANCE * float(np.trace(cov)):
            described = ", ".join(f"({l}, {m})" for l, m, _ in self.active_pairs)
            first = self.active_pairs[0][:2] if self.active_pairs else None
            raise ScenarioError(
                f"scenario '{self.label}' covariance is not positive semi-definite "
                f"(min eigenvalue {eig_min:.3g}); offending pairs: {described}",
                first,
            )

    @property
    def k(self) -> int:
        return len(self.base_variances)

    @property
    def is_baseline(self) -> bool:
        return not self.active_pairs

    @property
    def covariance(self) -> np.ndarray:
        cov = np.diag(np.asarray(self.base_variances, dtype=float))
        for l, m, c in self.active_pairs:
            cov[l - 1, m - 1] = cov[m - 1, l - 1] = c
        return cov


def default_label(k: int, pairs: Sequence[Tuple[int, int, float]]) -> str:
    """``(1,2,...,k)`` for the baseline, ``(m+l)`` joined by commas otherwise."""
    if not pairs:
        return "(" + ",".join(str(i) for i in range(1, k + 1)) + ")"
    return ",".join(f"({m}+{l})" for l, m, _ in pairs)


def baseline_scenario(model: VarModel) -> NoiseScenario:
    return NoiseScenario(tuple(np.diag(model.noise_cov)))


def pairwise_scenarios(model: VarModel) -> List[NoiseScenario]:
    """Baseline plus one scenario per noise pair with its fitted covariance activated."""
    base = tuple(np.diag(model.noise_cov))
    scenarios = [NoiseScenario(base)]
    for a in range(1, model.k + 1):
        for b in range(a + 1, model.k + 1):
            scenarios.append(NoiseScenario(base, ((b, a, float(model.noise_cov[b - 1, a - 1])),)))
    return scenarios


def load_scenarios(path: Union[str, Path], k: int) -> List[NoiseScenario]:
    """Read a JSON list of ``{label, base_variances, pairs: [{l, m, cov}]}``.

    Raises:
        ScenarioError: Malformed entries, wrong channel count or a
            non-PSD covariance (the message names the pair).
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except FileNotFoundError:
        raise ValidationError(f"scenario file not found: {path}")
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"cannot read scenario file {path}: {e}")
    if not isinstance(payload, list) or not payload:
        raise ScenarioError(f"{path}: expected a non-empty JSON list of scenarios")
    scenarios = []
    for position, entry in enumerate(payload, start=1):
        try:
            variances = tuple(float(v) for v in entry["base_variances"])
            pairs = tuple((int(p["l"]), int(p["m"]), float(p["cov"])) for p in entry.get("pairs", []))
            label = str(entry.get("label", ""))
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioError(f"{path}: scenario {position} is malformed ({e})")
        if len(variances) != k:
            raise ScenarioError(f"{path}: scenario {position} has {len(variances)} base variances, model has k={k}")
        scenarios.append(NoiseScenario(variances, pairs, label))
    return scenarios


def noise_transform(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root S of a PSD covariance (S S = cov), via eigendecomposition."""
    cov = np.asarray(cov, dtype=float)
    if not np.any(cov - np.diag(np.diagonal(cov))):
        # diagonal: exact per-channel scaling
        return np.diag(np.sqrt(np.clip(np.diagonal(cov), 0.0, None)))
    eigvals, eigvecs = np.linalg.eigh(cov)
    root = np.sqrt(np.clip(eigvals, 0.0, None))
    s = (eigvecs * root[np.newaxis, :]) @ eigvecs.T
    return 0.5 * (s + s.T)


# ---------------------------------------------------------------------------
# Recursions


def _run_recursion(coeffs: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """y_n = sum_j A_j y_{n-j} + e_n from a zero state, batched over the first axis.

    Args:
        coeffs: (m, k, k) coefficient array.
        noise: (R, T, k) noise array.

    Returns:
        (R, T, k) simulated values.
    """
    y = np.zeros_like(noise)
    order = coeffs.shape[0]
    transposed = [a.T for a in coeffs]
    for n in range(noise.shape[1]):
        acc = noise[:, n, :].copy()
        for j in range(1, min(order, n) + 1):
            acc += y[:, n - j, :] @ transposed[j - 1]
        y[:, n, :] = acc
    return y


def _check_scenario(model: VarModel, scenario: NoiseScenario) -> None:
    if scenario.k != model.k:
        raise ScenarioError(f"scenario '{scenario.label}' has k={scenario.k}, model has k={model.k}")


def simulate(model: VarModel, scenario: NoiseScenario, length: int, seed: int) -> MultivariateSeries:
    """Simulate ``length`` samples of the model driven by the scenario's noise.

    Gaussian noise with the scenario covariance is produced by applying
    its symmetric square root to independent standard normals.  The
    recursion starts from zero and the first ``burn_in(m)`` samples are
    discarded.  Identical inputs give bit-identical output.
    """
    _check_scenario(model, scenario)
    if int(length) != length or length < 2:
        raise ValidationError(f"length must be an integer >= 2, got {length}")
    check_stability(model)
    burn = burn_in(model.order)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((burn + int(length), model.k))
    noise = (z @ noise_transform(scenario.covariance))[np.newaxis]
    y = _run_recursion(model.coeffs, noise)[0, burn:]
    return MultivariateSeries(model.channel_names, y, model.sampling_interval)


# ---------------------------------------------------------------------------
# Monte Carlo ensembles


@dataclass(frozen=True)
class SimulationSummary:
    """Mean and standard deviation of per-replicate sample variances.

    ``sd_defined`` is False for single-replicate ensembles, whose
    standard deviations are reported as 0.
    """

    label: str
    mean_var: np.ndarray
    sd_var: np.ndarray
    replicates: int
    length: int
    seed: int
    is_baseline: bool = False
    sd_defined: bool = True


def _replicate_variances(
    coeffs: np.ndarray,
    transform: np.ndarray,
    replicate_ids: Sequence[int],
    length: int,
    burn: int,
    seed: int,
) -> np.ndarray:
    k = transform.shape[0]
    noise = np.stack(
        [np.random.default_rng([seed, r]).standard_normal((burn + length, k)) @ transform for r in replicate_ids]
    )
    y = _run_recursion(coeffs, noise)[:, burn:, :]
    # second moment about the (known) zero process mean
    return np.mean(y * y, axis=1)


def monte_carlo(
    model: VarModel,
    scenarios: Sequence[NoiseScenario],
    replicates: int,
    length: int,
    seed: int,
    workers: int = 1,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    include_baseline: bool = True,
) -> List[SimulationSummary]:
    """Average sample variances over simulated replicates for each scenario.

    Args:
        model: The VAR model to simulate.
        scenarios: Noise scenarios; all are validated before sampling.
        replicates: Replicates per scenario (>= 1).
        length: Retained samples per replicate.
        seed: Base seed; replicate r uses the generator seeded by (seed, r).
        workers: Threads over fixed-size replicate chunks; results do not
            depend on it.
        chunk_size: Replicates simulated together in one work unit.
        include_baseline: Prepend the uncorrelated baseline (the first
            scenario's base variances) unless a baseline is already listed.

    Returns:
        One summary per scenario, baseline first when it was added.
    """
    scenarios = list(scenarios)
    if not scenarios:
        raise ValidationError("monte_carlo needs at least one scenario")
    for scenario in scenarios:
        _check_scenario(model, scenario)
    if int(replicates) != replicates or replicates < 1:
        raise ValidationError(f"replicates must be a positive integer, got {replicates}")
    if int(length) != length or length < 2:
        raise ValidationError(f"length must be an integer >= 2, got {length}")
    if int(seed) != seed or seed < 0:
        raise ValidationError(f"seed must be a non-negative integer, got {seed}")
    replicates, length, seed = int(replicates), int(length), int(seed)
    if include_baseline and not any(s.is_baseline for s in scenarios):
        scenarios.insert(0, NoiseScenario(scenarios[0].base_variances))
    check_stability(model)

    burn = burn_in(model.order)
    chunks = [list(range(lo, min(lo + chunk_size, replicates))) for lo in range(0, replicates, chunk_size)]
    if replicates == 1:
        logger.warning("single replicate: standard deviations are reported as 0")
    logger.debug("monte carlo: %d scenarios x %d replicates in %d chunks", len(scenarios), replicates, len(chunks))

    summaries = []
    for scenario in scenarios:
        transform = noise_transform(scenario.covariance)

        def run(ids: List[int]) -> np.ndarray:
            return _replicate_variances(model.coeffs, transform, ids, length, burn, seed)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(run, chunks))
        else:
            parts = [run(ids) for ids in chunks]
        variances = np.concatenate(parts, axis=0)
        sd = variances.std(axis=0, ddof=1) if replicates > 1 else np.zeros(model.k)
        summaries.append(
            SimulationSummary(
                label=scenario.label,
                mean_var=variances.mean(axis=0),
                sd_var=sd,
                replicates=replicates,
                length=length,
                seed=seed,
                is_baseline=scenario.is_baseline,
                sd_defined=replicates > 1,
            )
        )
        logger.info("scenario %s: mean variances %s", scenario.label, np.array2string(summaries[-1].mean_var, precision=6))
    return summaries


def summary_frame(summaries: Sequence[SimulationSummary], channel_names: Sequence[str]) -> pd.DataFrame:
    """Long table, one row per scenario and channel, with ratios to the baseline.

    ``ratio_to_baseline`` divides the mean variance by the first
    baseline summary's; ``pct_change`` is the same ratio as a percentage
    change.  Both columns are left out when no summary is a baseline
    and are NaN for channels whose baseline variance is zero.
    """
    baseline = next((s for s in summaries if s.is_baseline), None)
    rows = []
    for s in summaries:
        for i, name in enumerate(channel_names):
            row = {
                "scenario": s.label,
                "channel": name,
                "mean_var": float(s.mean_var[i]),
                "sd_var": float(s.sd_var[i]),
                "replicates": s.replicates,
                "length": s.length,
                "seed": s.seed,
                "sd_defined": s.sd_defined,
            }
            if baseline is not None:
                ratio = float(s.mean_var[i] / baseline.mean_var[i]) if baseline.mean_var[i] > 0 else float("nan")
                row["ratio_to_baseline"] = ratio
                row["pct_change"] = 100.0 * (ratio - 1.0)
            rows.append(row)
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Stationary covariance


def stationary_covariance(model: VarModel, noise_cov: Optional[np.ndarray] = None) -> np.ndarray:
    """Stationary covariance of y_n from the companion-form Lyapunov equation.

    Solves X = F X F^T + Q with Q carrying ``noise_cov`` (default: the
    model's) in its top-left block and returns the top-left k x k block.

    Raises:
        UnstableModelError: The companion spectral radius is >= 1.
    """
    k, m = model.k, model.order
    v = np.asarray(model.noise_cov if noise_cov is None else noise_cov, dtype=float)
    if v.shape != (k, k):
        raise ValidationError(f"noise_cov must have shape ({k}, {k}), got {v.shape}")
    if m == 0:
        return v.copy()
    radius = spectral_radius(model)
    if radius >= 1.0:
        raise UnstableModelError(f"model is not stable (companion spectral radius {radius:.6g} >= 1)")
    q = np.zeros((k * m, k * m))
    q[:k, :k] = v
    x = scipy.linalg.solve_discrete_lyapunov(companion_matrix(model), q)
    top = x[:k, :k]
    return 0.5 * (top + top.T)


# ---------------------------------------------------------------------------
# Counterfactual replay


def replay_channels(
    model: VarModel,
    resid: ResidualSeries,
    series: MultivariateSeries,
    channels: Iterable[int],
    start: Optional[int] = None,
) -> MultivariateSeries:
    """Rerun the recursion on the residuals of the selected noise channels only.

    Rows before ``start`` are copied from the observed series (they are
    the initial values); from ``start`` on,
    y_n = sum_j A_j y_{n-j} + e_n with every residual component outside
    ``channels`` set to zero.

    Args:
        model: Fitted model.
        resid: Residuals of ``model`` on ``series``.
        series: The observed series.
        channels: 0-based noise channels kept active (may be empty).
        start: First recomputed row (0-based, >= m); defaults to m.

    Returns:
        A series of the same shape as ``series``.
    """
    y = np.asarray(series.values)
    n_obs, k = y.shape
    m = model.order
    if k != model.k or resid.values.shape != (n_obs - m, k) or resid.start_index != m:
        raise ValidationError(
            f"residuals of shape {resid.values.shape} (start {resid.start_index}) do not match "
            f"a series of shape {y.shape} and a model of order {m}"
        )
    active = sorted(set(int(c) for c in channels))
    if any(c < 0 or c >= k for c in active):
        raise ValidationError(f"noise channel index out of range for k={k}: {active}")
    start = m if start is None else int(start)
    if not m <= start <= n_obs:
        raise ValidationError(f"replay start must lie in [{m}, {n_obs}], got {start}")

    noise = np.zeros((n_obs, k))
    noise[m:, active] = resid.values[:, active]
    out = y.copy()
    transposed = [a.T for a in model.coeffs]
    for n in range(start, n_obs):
        acc = noise[n].copy()
        for j in range(1, m + 1):
            acc += out[n - j] @ transposed[j - 1]
        out[n] = acc
    return series.with_values(out)


def replay_channel(
    model: VarModel,
    resid: ResidualSeries,
    series: MultivariateSeries,
    channel: int,
    start: Optional[int] = None,
) -> MultivariateSeries:
    """Replay driven by the noise of a single (0-based) channel."""
    if not 0 <= channel < model.k:
        raise ValidationError(f"channel index {channel} out of range for k={model.k}")
    return replay_channels(model, resid, series, [channel], start)


@dataclass(frozen=True)
class ReplaySet:
    """Single-channel replays and the pieces needed to read them.

    ``channels[i]`` is driven by the noise of channel i only,
    ``initial`` by no noise (the propagated initial values), ``full`` by
    all noise, and ``total`` is the initial response plus each channel's
    response net of it, which equals ``full`` by linearity.
    """

    channels: Tuple[MultivariateSeries, ...]
    initial: MultivariateSeries
    full: MultivariateSeries
    total: MultivariateSeries


def replay_contributions(
    model: VarModel,
    resid: ResidualSeries,
    series: MultivariateSeries,
    start: Optional[int] = None,
) -> ReplaySet:
    """Replays for every noise channel, indexed by 0-based channel position."""
    zero = replay_channels(model, resid, series, [], start)
    full = replay_channels(model, resid, series, range(model.k), start)
    singles = []
    total = np.array(zero.values)
    for i in range(model.k):
        single = replay_channel(model, resid, series, i, start)
        singles.append(single)
        total += np.asarray(single.values) - np.asarray(zero.values)
    return ReplaySet(tuple(singles), zero, full, series.with_values(total))
