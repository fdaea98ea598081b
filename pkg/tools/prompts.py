"""
Reusable prompt explaining how to read the power contribution tools'
output.  Registered with FastMCP via ``@mcp.prompt()`` so the client
model can consult it before interpreting a decomposition.
"""

from __future__ import annotations

from server import mcp  # type: ignore


@mcp.prompt()
def power_contribution_guidance() -> str:
    """
    Guidance on using and interpreting the power contribution tools.

    Workflow:

    1. ``fit_var_model`` on the CSV.  Read the noise correlation
       section: pairs flagged above ``1/sqrt(N+2)`` mean the classical
       decomposition is not trustworthy for those channels.
    2. ``spectrum_peaks`` to find the frequencies worth discussing
       (cycles per sample; the period in samples is ``1/f``).
    3. ``power_contribution`` for each channel of interest, normally
       with ``mode="extended"``.
    4. ``simulate_noise_scenarios`` and ``replay_noise_inputs`` to
       check the frequency-domain story in the time domain.

    Reading extended contributions:

    - The first columns (one per channel name) are the powers driven
      by each independent noise source.  They are never negative.
    - Columns labelled ``a+b`` are pair terms from the covariance
      between the noises of ``a`` and ``b``.  They can be negative:
      a negative pair term means the correlated noise *reduces* the
      power at that frequency, a positive one amplifies it.
    - Relative values always sum to one per frequency, but with
      negative pair terms the single-noise shares can exceed one.
      This is expected; do not report it as an error.
    - With no significant noise correlations the pair columns are near
      zero and the result matches the classical decomposition.

    Reading simulations:

    - ``pct_change`` compares each scenario with the uncorrelated
      baseline.  A negative value is a variance reduction caused by the
      activated correlation.
    - Replay mean squares are attributions of the observed series; the
      full replay reproduces the data exactly.
    """
    return (
        "Fit once with fit_var_model, then pass the saved model_path to the other tools. "
        "Flagged noise correlations call for mode='extended'. In extended tables, columns "
        "labelled 'a+b' are signed pair terms: negative values mean correlated noise reduces "
        "the power, and single-noise relative shares may then exceed 1 while each row still "
        "sums to 1. In simulation tables a negative pct_change is a variance reduction "
        "relative to the uncorrelated baseline."
    )
