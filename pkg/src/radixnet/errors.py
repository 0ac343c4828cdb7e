"""Exception types shared across the package.

The CLI maps these onto exit codes: validation and usage problems exit
with 1, numeric failures (rank deficiency, degenerate variance) with 2.
"""


class RadixnetError(Exception):
    """Base class for all package errors."""


class DimensionError(RadixnetError, ValueError):
    """Array shapes are incompatible for the requested operation."""


class ConfigurationError(RadixnetError, ValueError):
    """A configuration violates a structural constraint (divisibility, widths)."""


class UsageError(RadixnetError, ValueError):
    """An API or file was used incorrectly (bad call, malformed input)."""


class DegenerateInputError(RadixnetError, ValueError):
    """Numerically degenerate input: coincident points, zero variance."""


class InsufficientDataError(UsageError):
    """Too few samples for the requested model order."""


class FittingError(RadixnetError, RuntimeError):
    """The least-squares system could not be solved (rank deficiency)."""
