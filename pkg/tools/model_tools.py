"""
MCP tools for fitting VAR models and inspecting their spectra.

``fit_var_model`` turns a CSV file into a saved model JSON that the
other tools take as input, so a client can fit once and then run any
number of decompositions and simulations on exactly that model.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import pandas as pd

# Absolute imports: the repository root is the import root when the
# server is launched with ``python main.py``.
from utils import spectral, var_model  # type: ignore
from utils.series import demean, load_csv, make_grid  # type: ignore
from server import mcp  # type: ignore


@mcp.tool()
def fit_var_model(
    csv_path: str,
    order: Optional[int] = None,
    max_order: int = 8,
    estimator: str = "ls",
    model_path: Optional[str] = None,
) -> str:
    """Fit a multivariate autoregressive model to a CSV time series.

    Args:
        csv_path: CSV with a header line of channel names and one row
            per time step.  Column means are removed before fitting.
        order: Fixed model order.  If None the order is chosen by AIC
            over ``0..max_order``.
        max_order: Largest order considered by AIC selection.
        estimator: ``"ls"`` (least squares) or ``"yw"`` (Yule-Walker).
        model_path: Where to save the model JSON.  Defaults to
            ``<csv stem>.model.json`` next to the CSV.

    Returns:
        A text report: the saved model path, chosen order, AIC table
        (when selecting), stability and the noise correlations with the
        pairs flagged above 1/sqrt(N+2).
    """
    series = demean(load_csv(csv_path))
    lines = []
    if order is None:
        order, aic = var_model.select_order_aic(series, max_order)
        table = pd.DataFrame({"order": range(len(aic)), "aic": aic})
        lines += ["AIC by order:", table.to_string(index=False), ""]
    model = var_model.fit(series, order, estimator)
    target = Path(model_path) if model_path else Path(csv_path).with_suffix(".model.json")
    var_model.save_model(model, target)

    radius = var_model.spectral_radius(model)
    lines.insert(0, f"Saved VAR({model.order}) model ({estimator}) for {model.k} channels to {target}")
    lines.insert(1, f"N = {series.n_obs}, spectral radius = {radius:.4f} ({'stable' if radius < 1 else 'NOT stable'})")
    lines.insert(2, "")
    try:
        corr = var_model.noise_correlation(model, series.n_obs)
    except ValueError as e:
        lines.append(f"Noise correlations unavailable: {e}")
        return "\n".join(lines)
    lines += ["Noise correlation matrix:", corr.to_frame().round(4).to_string(), ""]
    flagged = corr.significant_pairs()
    if flagged:
        lines.append(f"Pairs with |r| > 1/sqrt(N+2) = {corr.threshold:.4f}:")
        for l, m, r in flagged:
            lines.append(f"  {model.channel_names[m - 1]}+{model.channel_names[l - 1]}: r = {r:.4f}")
        lines.append("Use the extended decomposition; the classical one ignores these covariances.")
    else:
        lines.append("No significant noise correlations; classical and extended decompositions agree closely.")
    return "\n".join(lines)


@mcp.tool()
def spectrum_peaks(model_path: str, grid_points: int = 201, f_max: float = 0.5) -> str:
    """List the dominant spectral peaks of every channel of a saved model.

    Args:
        model_path: Model JSON written by ``fit_var_model``.
        grid_points: Number of frequencies evaluated on ``[0, f_max]``.
        f_max: Upper frequency in cycles per sample (at most 0.5).

    Returns:
        A table with the first and second peak (shoulders count when a
        channel has a single maximum) of each channel, in cycles per
        sample and as periods in samples.
    """
    model = var_model.load_model(model_path)
    cs = spectral.cross_spectrum(model, make_grid(grid_points, f_max))
    rows = []
    for i, name in enumerate(model.channel_names):
        for rank, (f, power) in enumerate(spectral.spectral_peaks(cs, i), start=1):
            rows.append(
                {
                    "channel": name,
                    "peak": rank,
                    "frequency": round(f, 5),
                    "period": round(1.0 / f, 2) if f > 0 else float("inf"),
                    "power": power,
                }
            )
    if not rows:
        return "No peaks found."
    return pd.DataFrame(rows).to_string(index=False)
