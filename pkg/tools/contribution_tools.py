"""
MCP tool for power contribution tables.
"""

from __future__ import annotations

from typing import Union

from utils import contribution, var_model  # type: ignore
from utils.series import channel_index, make_grid  # type: ignore
from server import mcp  # type: ignore


@mcp.tool()
def power_contribution(
    model_path: str,
    target: Union[str, int],
    mode: str = "extended",
    kind: str = "relative",
    grid_points: int = 11,
    f_max: float = 0.5,
) -> str:
    """Decompose one channel's power spectrum into noise contributions.

    Args:
        model_path: Model JSON written by ``fit_var_model``.
        target: Channel name (case-insensitive) or 1-based number.
        mode: ``"extended"`` keeps the noise covariances and adds one
            signed term per noise pair; ``"classical"`` ignores them.
        kind: ``"relative"`` (shares of the channel's power, summing
            to one) or ``"absolute"`` (power units).
        grid_points: Number of frequencies on ``[0, f_max]``.
        f_max: Upper frequency in cycles per sample.

    Returns:
        A table with one row per frequency: ``f``, ``total`` and one
        column per term.  Pair columns are labelled ``a+b``; negative
        values there mean the correlated noise reduces the power.
        Below the table, the band-integrated absolute contributions
        over the whole grid.
    """
    model = var_model.load_model(model_path)
    target_idx = channel_index(model.channel_names, target)
    dec = contribution.decompose(model, make_grid(grid_points, f_max), mode, relative=(kind == "relative"))
    table = contribution.decomposition_frame(dec, target_idx, kind)
    band = contribution.band_contributions(dec, target_idx)
    lines = [
        f"{mode.capitalize()} {kind} power contributions to {model.channel_names[target_idx]}:",
        table.round(4).to_string(index=False),
        "",
        "Integrated over the grid (variance units):",
        band.round(4).to_string(),
    ]
    return "\n".join(lines)
