#!/usr/bin/env python3
"""
Command line front end for power contribution analysis.

Subcommands::

    fit       fit a VAR model to a CSV series and write model.json
    contrib   decompose the spectra of a fitted model into contributions
    simulate  Monte Carlo variances under correlated-noise scenarios
    replay    rerun the fitted recursion on single noise channels

Models are exchanged between subcommands as JSON files, so every
analysis runs on exactly the fitted model.  All files of a run are
written only after the whole run succeeded.  Exit codes: 0 success,
2 invalid input or configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils import contribution, simulation, spectral, var_model  # type: ignore
from utils.errors import PowerContributionError, SingularFrequencyError, ValidationError  # type: ignore
from utils.output import frame_to_csv, frame_to_records, to_json_text, write_outputs  # type: ignore
from utils.series import (  # type: ignore
    DEFAULT_F_MAX,
    DEFAULT_GRID_POINTS,
    FrequencyGrid,
    MultivariateSeries,
    demean,
    load_csv,
    make_grid,
    series_to_csv,
)


logger = logging.getLogger("power_contrib")

COMMANDS = ("fit", "contrib", "simulate", "replay")
FORMATS = ("csv", "json")
LOG_LEVEL_ENV = "POWER_CONTRIB_LOG_LEVEL"
REPLAY_CHECK_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RunConfig:
    """Everything one invocation needs, taken from the parsed flags."""

    command: str
    input: Optional[Path] = None
    model: Optional[Path] = None
    order: Optional[int] = None
    max_order: Optional[int] = None
    estimator: str = "ls"
    grid_points: int = DEFAULT_GRID_POINTS
    f_max: float = DEFAULT_F_MAX
    mode: str = contribution.EXTENDED
    scenarios: Optional[Path] = None
    replicates: int = 200
    length: int = 1000
    seed: int = 0
    out_dir: Path = Path("out")
    formats: Tuple[str, ...] = ("csv",)
    channel: Optional[int] = None
    replay_start: Optional[int] = None
    workers: int = 1
    demean: bool = True
    has_header: bool = True
    sampling_interval: float = 1.0

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        def path(value: Optional[str]) -> Optional[Path]:
            return Path(value) if value else None

        return cls(
            command=args.command,
            input=path(getattr(args, "input", None)),
            model=path(getattr(args, "model", None)),
            order=getattr(args, "order", None),
            max_order=getattr(args, "max_order", None),
            estimator=getattr(args, "estimator", "ls"),
            grid_points=getattr(args, "grid_points", DEFAULT_GRID_POINTS),
            f_max=getattr(args, "f_max", DEFAULT_F_MAX),
            mode=getattr(args, "mode", contribution.EXTENDED),
            scenarios=path(getattr(args, "scenarios", None)),
            replicates=getattr(args, "replicates", 200),
            length=getattr(args, "length", 1000),
            seed=getattr(args, "seed", 0),
            out_dir=Path(args.out_dir),
            formats=tuple(args.format),
            channel=getattr(args, "channel", None),
            replay_start=getattr(args, "replay_start", None),
            workers=args.workers,
            demean=not getattr(args, "no_demean", False),
            has_header=not getattr(args, "no_header", False),
            sampling_interval=getattr(args, "sampling_interval", 1.0),
        )

    def validate(self) -> None:
        """Check the flags each command requires before any computation.

        Raises:
            ValidationError: A required flag is missing or a value is out of range.
        """
        if self.command not in COMMANDS:
            raise ValidationError(f"unknown command '{self.command}'")
        unknown = [f for f in self.formats if f not in FORMATS]
        if unknown or not self.formats:
            raise ValidationError(f"--format takes a comma-separated subset of {FORMATS}, got {list(self.formats)}")
        if self.workers < 1:
            raise ValidationError(f"--workers must be >= 1, got {self.workers}")
        if self.command in ("fit", "replay") and self.input is None:
            raise ValidationError(f"{self.command} needs --input")
        if self.command in ("contrib", "simulate", "replay") and self.model is None:
            raise ValidationError(f"{self.command} needs --model")
        if self.command == "fit":
            if (self.order is None) == (self.max_order is None):
                raise ValidationError("fit needs exactly one of --order and --max-order")
            if self.order is not None and self.order < 0:
                raise ValidationError(f"--order must be >= 0, got {self.order}")
            if self.max_order is not None and self.max_order < 0:
                raise ValidationError(f"--max-order must be >= 0, got {self.max_order}")
            if self.estimator not in ("ls", "yw"):
                raise ValidationError(f"--estimator must be 'ls' or 'yw', got '{self.estimator}'")
            if not self.sampling_interval > 0:
                raise ValidationError(f"--sampling-interval must be positive, got {self.sampling_interval}")
        if self.command == "contrib":
            if self.mode not in contribution.MODES:
                raise ValidationError(f"--mode must be one of {contribution.MODES}, got '{self.mode}'")
            if self.grid_points < 2:
                raise ValidationError(f"--grid-points must be >= 2, got {self.grid_points}")
            if not 0.0 < self.f_max <= 0.5:
                raise ValidationError(f"--f-max must lie in (0, 0.5], got {self.f_max}")
        if self.command == "simulate":
            if self.replicates < 1:
                raise ValidationError(f"--replicates must be >= 1, got {self.replicates}")
            if self.length < 2:
                raise ValidationError(f"--length must be >= 2, got {self.length}")
            if self.seed < 0:
                raise ValidationError(f"--seed must be >= 0, got {self.seed}")
        if self.command == "replay" and self.channel is not None and self.channel < 1:
            raise ValidationError(f"--channel is 1-based, got {self.channel}")


def _load_series(config: RunConfig) -> MultivariateSeries:
    series = load_csv(config.input, has_header=config.has_header, sampling_interval=config.sampling_interval)
    return demean(series) if config.demean else series


def _correlation_frame(corr: var_model.NoiseCorrelation) -> pd.DataFrame:
    k = corr.matrix.shape[0]
    rows = []
    for l in range(1, k):
        for m in range(l):
            r = float(corr.matrix[l, m])
            rows.append(
                {
                    "l": l + 1,
                    "m": m + 1,
                    "pair": f"{corr.channel_names[m]}+{corr.channel_names[l]}",
                    "r": r,
                    "threshold": corr.threshold,
                    "significant": corr.threshold is not None and abs(r) > corr.threshold,
                }
            )
    return pd.DataFrame(rows, columns=["l", "m", "pair", "r", "threshold", "significant"])


def cmd_fit(config: RunConfig) -> Dict[str, str]:
    """Fit the model; render model.json plus the fit report files."""
    series = _load_series(config)
    aic_values: Optional[List[float]] = None
    order = config.order
    if config.max_order is not None:
        order, aic_values = var_model.select_order_aic(series, config.max_order, config.workers)
    model = var_model.fit(series, order, config.estimator)
    radius = var_model.check_stability(model)
    logger.info("fitted VAR(%d) with %s on N=%d, k=%d", model.order, config.estimator, series.n_obs, series.k)

    files = {"model.json": var_model.model_to_json(model)}
    report = {
        "estimator": config.estimator,
        "order": model.order,
        "k": model.k,
        "n_obs": series.n_obs,
        "spectral_radius": radius,
        "stable": radius < 1.0,
    }
    corr_frame = None
    if np.all(np.diag(model.noise_cov) > 0):
        corr = var_model.noise_correlation(model, series.n_obs)
        corr_frame = _correlation_frame(corr)
        flagged = corr.significant_pairs()
        for l, m, r in flagged:
            logger.warning(
                "noise correlation %s+%s = %.4f exceeds 1/sqrt(N+2) = %.4f",
                model.channel_names[m - 1], model.channel_names[l - 1], r, corr.threshold,
            )
        report["correlation_threshold"] = corr.threshold
        report["noise_correlation"] = corr.matrix.tolist()
        report["significant_pairs"] = [{"l": l, "m": m, "r": r} for l, m, r in flagged]
    else:
        logger.warning("a noise variance is zero; noise correlations are not reported")
    if aic_values is not None:
        report["aic"] = [{"order": m, "aic": a} for m, a in enumerate(aic_values)]

    if "csv" in config.formats:
        if aic_values is not None:
            files["aic.csv"] = frame_to_csv(pd.DataFrame({"order": range(len(aic_values)), "aic": aic_values}))
        if corr_frame is not None:
            files["noise_correlation.csv"] = frame_to_csv(corr_frame)
    if "json" in config.formats:
        files["fit_report.json"] = to_json_text(report)
    return files


def _with_hz(frame: pd.DataFrame, grid: FrequencyGrid, sampling_interval: float) -> pd.DataFrame:
    # f stays in cycles/sample; f_hz is added next to it for non-unit sampling
    if sampling_interval != 1.0:
        frame.insert(1, "f_hz", grid.to_hz(sampling_interval))
    return frame


def cmd_contrib(config: RunConfig) -> Dict[str, str]:
    """Absolute, relative and cumulative-stack tables for every target channel."""
    model = var_model.load_model(config.model)
    var_model.check_stability(model)
    grid = make_grid(config.grid_points, config.f_max)
    dec = contribution.decompose(model, grid, config.mode, relative=True, workers=config.workers)
    cs = spectral.cross_spectrum(model, grid, config.workers)

    files: Dict[str, str] = {}
    if "csv" in config.formats:
        dt = model.sampling_interval
        files["spectrum.csv"] = frame_to_csv(_with_hz(spectral.spectrum_frame(cs), grid, dt))
        for target in range(model.k):
            n = target + 1
            for kind in ("absolute", "relative"):
                files[f"contrib_{n}_{kind}.csv"] = frame_to_csv(
                    _with_hz(contribution.decomposition_frame(dec, target, kind), grid, dt)
                )
            files[f"stack_{n}_absolute.csv"] = frame_to_csv(
                _with_hz(contribution.stack_frame(dec, target, "absolute"), grid, dt)
            )
    if "json" in config.formats:
        files["contrib.json"] = to_json_text(contribution.decomposition_to_json(dec))
    negative = int(np.sum(dec.absolute < 0))
    if negative:
        logger.info("%d negative pair contributions (correlated noise reducing power)", negative)
    return files


def cmd_simulate(config: RunConfig) -> Dict[str, str]:
    """Scenario summary table with ratios to the uncorrelated baseline."""
    model = var_model.load_model(config.model)
    if config.scenarios is not None:
        scenarios = simulation.load_scenarios(config.scenarios, model.k)
    else:
        scenarios = simulation.pairwise_scenarios(model)
    summaries = simulation.monte_carlo(
        model, scenarios, config.replicates, config.length, config.seed, workers=config.workers
    )
    frame = simulation.summary_frame(summaries, model.channel_names)
    files: Dict[str, str] = {}
    if "csv" in config.formats:
        files["summary.csv"] = frame_to_csv(frame)
    if "json" in config.formats:
        files["summary.json"] = to_json_text(frame_to_records(frame))
    return files


def cmd_replay(config: RunConfig) -> Dict[str, str]:
    """Replayed series per noise channel plus their sum."""
    model = var_model.load_model(config.model)
    series = _load_series(config)
    if series.k != model.k:
        raise ValidationError(f"{config.input} has k={series.k} channels, model has k={model.k}")
    if config.channel is not None and config.channel > model.k:
        raise ValidationError(f"--channel {config.channel} out of range 1..{model.k}")
    resid = var_model.residuals(model, series)
    replays = simulation.replay_contributions(model, resid, series, config.replay_start)

    start = model.order if config.replay_start is None else config.replay_start
    y = np.asarray(series.values)
    error = np.abs(np.asarray(replays.full.values)[start:] - y[start:]).max(initial=0.0)
    scale = max(1.0, float(np.abs(y).max()))
    if error <= REPLAY_CHECK_TOLERANCE * scale:
        logger.info("replay check passed: full-noise replay matches the input (max error %.3g)", error)
    else:
        logger.warning("replay check failed: full-noise replay differs from the input by %.3g", error)

    if config.channel is not None:
        selected = [config.channel - 1]
    else:
        selected = list(range(model.k))
    files: Dict[str, str] = {}
    for i in selected:
        files[f"replay_{i + 1}.csv"] = series_to_csv(replays.channels[i])
    files["replay_initial.csv"] = series_to_csv(replays.initial)
    files["replay_sum.csv"] = series_to_csv(replays.total)
    if "json" in config.formats:
        variances = {
            name: np.mean(np.asarray(single.values)[start:] ** 2, axis=0).tolist()
            for name, single in zip(model.channel_names, replays.channels)
        }
        files["replay.json"] = to_json_text({"start": start, "check_error": float(error), "mean_square": variances})
    return files


HANDLERS = {
    "fit": cmd_fit,
    "contrib": cmd_contrib,
    "simulate": cmd_simulate,
    "replay": cmd_replay,
}


def _formats(value: str) -> List[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="power-contrib",
        description="Fit VAR models and decompose power spectra into noise contributions.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default="out", help="Directory for result files (default: %(default)s).")
    common.add_argument(
        "--format",
        type=_formats,
        default=["csv"],
        help="Comma-separated output formats from csv,json (default: csv).",
    )
    common.add_argument(
        "--workers",
        type=int,
        default=1,
        help="Parallel work units; outputs do not depend on it (default: 1).",
    )
    common.add_argument(
        "--log-level",
        default=os.environ.get(LOG_LEVEL_ENV, "INFO"),
        help=f"Logging level (default: ${LOG_LEVEL_ENV} or INFO).",
    )

    series_flags = argparse.ArgumentParser(add_help=False)
    series_flags.add_argument("--input", help="CSV file, one row per time step.")
    series_flags.add_argument("--no-header", action="store_true", help="The CSV has no header line.")
    series_flags.add_argument("--no-demean", action="store_true", help="Do not subtract column means.")
    series_flags.add_argument("--sampling-interval", type=float, default=1.0, help="Time units per sample.")

    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common, series_flags], help="Fit a VAR model.")
    p.add_argument("--order", type=int, help="Fixed model order.")
    p.add_argument("--max-order", type=int, help="Select the order by AIC over 0..MAX_ORDER.")
    p.add_argument("--estimator", choices=("ls", "yw"), default="ls", help="Estimator (default: %(default)s).")

    p = sub.add_parser("contrib", parents=[common], help="Power contribution decomposition.")
    p.add_argument("--model", help="Model JSON written by fit.")
    p.add_argument("--mode", choices=contribution.MODES, default=contribution.EXTENDED)
    p.add_argument("--grid-points", type=int, default=DEFAULT_GRID_POINTS)
    p.add_argument("--f-max", type=float, default=DEFAULT_F_MAX, help="Upper frequency in cycles/sample.")

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo noise scenarios.")
    p.add_argument("--model", help="Model JSON written by fit.")
    p.add_argument("--scenarios", help="Scenario JSON file (default: every noise pair in turn).")
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--length", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("replay", parents=[common, series_flags], help="Counterfactual noise replay.")
    p.add_argument("--model", help="Model JSON written by fit.")
    p.add_argument("--channel", type=int, help="Only write the replay of this 1-based noise channel.")
    p.add_argument("--replay-start", type=int, help="First recomputed row, 0-based (default: model order).")
    return ap


def _configure_logging(level: str) -> None:
    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        numeric = logging.INFO
    logging.basicConfig(
        level=numeric,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)
    try:
        config = RunConfig.from_args(args)
        config.validate()
        files = HANDLERS[config.command](config)
        write_outputs(config.out_dir, files)
    except PowerContributionError as e:
        print(f"error: {e}", file=sys.stderr)
        if isinstance(e, SingularFrequencyError):
            print("hint: try a smaller --f-max to avoid the singular frequency", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return ValidationError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
