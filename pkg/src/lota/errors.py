"""Exception hierarchy shared across the toolkit."""


class LotaError(Exception):
    """Base class for all toolkit errors."""


class AlignmentError(LotaError):
    """Two named-tensor collections do not share names and shapes."""


class DigestMismatchError(LotaError):
    """An artifact was produced against a different base model."""


class FormatError(LotaError):
    """A file does not conform to its container format."""


class NonFiniteError(LotaError):
    """A NaN or Inf appeared where only finite values are allowed."""


class CapacityError(LotaError):
    """Not enough free positions to build the requested mask."""


class ConfigError(LotaError):
    """Invalid configuration value."""


class DivergenceError(LotaError):
    """Training produced a non-finite loss.

    Carries the partial run record accumulated up to the failing step.
    """

    def __init__(self, message, partial_record=None):
        super().__init__(message)
        self.partial_record = partial_record


class HarnessError(LotaError):
    """An experiment precondition or sanity assertion failed."""
