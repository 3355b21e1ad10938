"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: input problems give 1, a violated
well-conditioning assumption gives 2 and numerical breakdowns give 3.
"""

from __future__ import annotations


class SubspaceBoundsError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(SubspaceBoundsError, ValueError):
    """A matrix or vector argument is malformed (shape, dtype, NaN, asymmetry)."""


class InvalidParameterError(SubspaceBoundsError, ValueError):
    """A scalar parameter is outside its admissible range."""


class DegenerateInputError(InvalidInputError):
    """The input is well formed but degenerate (zero vector, zero signal)."""


class RankDeficiencyError(SubspaceBoundsError, ValueError):
    """A basis matrix does not have full column rank at the rank tolerance."""


class AssumptionViolatedError(SubspaceBoundsError):
    """The well-conditioning assumption required by a plain bound fails."""


class NumericalFailure(SubspaceBoundsError, ArithmeticError):
    """A numerical procedure broke down (e.g. a vanishing PLS weight)."""


class ConfigError(InvalidInputError):
    """An experiment configuration document is invalid."""
