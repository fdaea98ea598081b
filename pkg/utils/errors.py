"""
Exception types raised by the power contribution library.

Every error carries an ``exit_code`` so that the command line front
end can map failures onto its scripting contract without inspecting
messages: 2 for bad input or configuration, 3 for numerical failures.
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple


class PowerContributionError(Exception):
    """Base class for all library errors."""

    exit_code: int = 1


class ValidationError(PowerContributionError, ValueError):
    """Input data, model files or configuration failed validation."""

    exit_code = 2


class DataFormatError(ValidationError):
    """A CSV file could not be turned into a series.

    Attributes:
        row: 1-based data row of the offending cell, if known.
        column: 1-based column of the offending cell, if known.
    """

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        super().__init__(message)
        self.row = row
        self.column = column


class ScenarioError(ValidationError):
    """A noise scenario is malformed or its covariance is not PSD."""

    def __init__(self, message: str, pair: Optional[Tuple[int, int]] = None):
        super().__init__(message)
        self.pair = pair


class NumericalError(PowerContributionError, ArithmeticError):
    """A computation could not be carried out reliably."""

    exit_code = 3


class SingularFrequencyError(NumericalError):
    """A(f) is singular (or nearly so) at ``frequency``."""

    def __init__(self, frequency: float, detail: str = ""):
        message = f"spectrum singular at f={frequency:.6g} (cycles/sample)"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
        self.frequency = frequency


class ZeroPowerError(NumericalError):
    """A channel has zero total power at ``frequency``, so shares are undefined."""

    def __init__(self, frequency: float, channel: str):
        super().__init__(
            f"total power of channel '{channel}' is zero at f={frequency:.6g}; "
            "relative contributions are undefined"
        )
        self.frequency = frequency
        self.channel = channel


class RankDeficiencyError(NumericalError):
    """The least-squares regressor matrix is rank deficient.

    Attributes:
        collinear: ``(lag, channel_name)`` regressors found to be linearly
            dependent on the others.
    """

    def __init__(self, collinear: Sequence[Tuple[int, str]]):
        described = ", ".join(f"{name} at lag {lag}" for lag, name in collinear)
        super().__init__(f"regressor matrix is rank deficient; collinear regressors: {described}")
        self.collinear = list(collinear)


class UnstableModelError(NumericalError):
    """The model has no stationary distribution (companion spectral radius >= 1)."""
