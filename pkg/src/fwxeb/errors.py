class FwxebError(Exception):
    """Base class for package errors."""


class ValidationError(FwxebError, ValueError):
    """Input violates a precondition (shape, range, normalization)."""


class DegenerateEstimate(FwxebError):
    """An estimator is undefined for this input.

    ``reason`` is a short machine-readable tag such as ``"uniform-table"``.
    """

    def __init__(self, reason: str, message: str | None = None):
        self.reason = reason
        super().__init__(message or reason)


class FormatError(FwxebError, ValueError):
    """A file does not follow the expected layout."""


class InvariantViolation(FwxebError, AssertionError):
    """An internal consistency check failed."""
