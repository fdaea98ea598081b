"""
MCP tools for the simulation side of the analysis: Monte Carlo
noise scenarios and counterfactual replay of the observed series.
"""

from __future__ import annotations

from typing import Union

import numpy as np
import pandas as pd

from utils import simulation, var_model  # type: ignore
from utils.series import channel_index, demean, load_csv  # type: ignore
from server import mcp  # type: ignore


@mcp.tool()
def simulate_noise_scenarios(
    model_path: str,
    replicates: int = 200,
    length: int = 1000,
    seed: int = 0,
) -> str:
    """Estimate how each noise correlation changes the channel variances.

    Simulates the saved model once without noise correlations
    (baseline) and once per noise pair with only that pair's fitted
    covariance switched on.  All scenarios share their random draws, so
    differences reflect the covariance and not sampling luck.

    Args:
        model_path: Model JSON written by ``fit_var_model``.
        replicates: Simulated series per scenario.
        length: Samples per series.
        seed: Random seed; equal seeds give identical tables.

    Returns:
        A table of mean sample variances per scenario and channel with
        the percentage change relative to the baseline.
    """
    model = var_model.load_model(model_path)
    summaries = simulation.monte_carlo(model, simulation.pairwise_scenarios(model), replicates, length, seed)
    frame = simulation.summary_frame(summaries, model.channel_names)
    columns = ["scenario", "channel", "mean_var", "sd_var", "pct_change"]
    return frame[columns].round(4).to_string(index=False)


@mcp.tool()
def replay_noise_inputs(csv_path: str, model_path: str, target: Union[str, int]) -> str:
    """Attribute an observed series to the individual noise sources.

    Reruns the fitted recursion on the model residuals with all but one
    noise channel switched off, once per channel.

    Args:
        csv_path: The CSV the model was fitted on.
        model_path: Model JSON written by ``fit_var_model``.
        target: Channel to report, by name or 1-based number.

    Returns:
        A table with the mean square of the target channel under each
        single-noise replay, its share of the sum of those values, and
        the full replay for comparison.
    """
    model = var_model.load_model(model_path)
    series = demean(load_csv(csv_path))
    if series.k != model.k:
        raise ValueError(f"{csv_path} has {series.k} channels but the model has {model.k}")
    target_idx = channel_index(model.channel_names, target)
    resid = var_model.residuals(model, series)
    replays = simulation.replay_contributions(model, resid, series)

    m = model.order
    rows = []
    labelled = list(zip(model.channel_names, replays.channels)) + [("full", replays.full)]
    for name, replay in labelled:
        values = np.asarray(replay.values)[m:, target_idx]
        rows.append({"noise": name, "mean_square": float(np.mean(values ** 2))})
    df = pd.DataFrame(rows)
    singles = df.index < model.k
    df["share"] = df["mean_square"] / df.loc[singles, "mean_square"].sum()
    df.loc[~singles, "share"] = np.nan
    return f"Replay of {model.channel_names[target_idx]}:\n" + df.round(4).to_string(index=False)
