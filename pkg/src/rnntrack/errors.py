"""Exception types raised across the package."""


class TrackingError(Exception):
    """Base class for package errors."""


class InvalidArgument(TrackingError, ValueError):
    """Inputs have the wrong shape, range or normalisation."""


class NumericError(TrackingError, ArithmeticError):
    """A computation produced non-finite values or lost definiteness.

    ``step`` is the sequence index at which the failure was detected, when
    the failure happened inside an unrolled recurrence.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SizeLimitError(TrackingError, ValueError):
    """Problem too large for an exhaustive method."""


class InsufficientDataError(TrackingError, ValueError):
    """Not enough samples to estimate a statistic."""


class ParseError(TrackingError, ValueError):
    """Malformed input file. ``line`` is 1-based."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
