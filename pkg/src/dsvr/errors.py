"""Exception hierarchy shared across the toolkit.

Grouped by how the CLI maps them to exit codes: validation problems
(bad arguments or inputs that parse but make no sense), I/O problems
(unreadable or corrupt files), and numeric problems (metrics that are
undefined on the given data).
"""


class DsvrError(Exception):
    """Base class for all toolkit errors."""


# --- validation family (CLI exit code 2) ---

class ValidationError(DsvrError):
    """Input parsed but violates a documented precondition."""


class InsufficientDataError(ValidationError):
    """Fewer data points than the operation needs (e.g. n < k)."""


class EmptySelectionError(ValidationError):
    """A selection step produced nothing to work with."""


class EmptyTrainingError(ValidationError):
    """Every training sample was filtered out before the first step."""


class EncodingError(ValidationError):
    """Text/id conversion hit a symbol outside the vocabulary."""

    def __init__(self, message, position=None, symbol=None):
        super().__init__(message)
        self.position = position
        self.symbol = symbol


class UnmappedCharacterError(ValidationError):
    """Raw transcript contains characters the normalizer cannot map.

    ``positions`` is a list of (index, char) pairs into the original
    string, so callers can point at the offending bytes.
    """

    def __init__(self, positions):
        listing = ", ".join(f"{i}:{c!r}" for i, c in positions)
        super().__init__(f"unmapped characters in transcript: {listing}")
        self.positions = list(positions)


# --- I/O family (CLI exit code 3) ---

class FormatError(DsvrError):
    """File does not match the expected container format."""


class CorruptionError(FormatError):
    """File matched the format but its payload is inconsistent."""


# --- numeric family (CLI exit code 4) ---

class NumericError(DsvrError):
    """Computation is undefined or degenerate on the given data."""


class UndefinedMetricError(NumericError):
    """Metric has no defined value for this input."""


class DegenerateDataError(NumericError):
    """Data collapses the computation (e.g. < k distinct points)."""
