"""Exception types raised across the package."""


class QKDError(Exception):
    """Base class for all library errors."""


class TruncationError(QKDError):
    """Probability mass beyond the truncation order exceeds the tolerance."""


class SingularMatrixError(QKDError):
    """A detector response matrix cannot be inverted exactly."""


class NegativityError(QKDError):
    """An inverted distribution carries more negative mass than tolerated."""


class NoSignalError(QKDError):
    """A quantity is undefined because no signal (click or detection) occurs."""


class PlanError(QKDError):
    """A decoy plan cannot be realised on a session record."""


class ConditioningError(QKDError):
    """The decoy moment matrix is too ill-conditioned to solve."""


class InfeasibleObservations(QKDError):
    """No yield vector reproduces the observations.

    This doubles as the eavesdropping alarm: an honest channel always admits
    a feasible yield assignment.
    """


class DegenerateConfiguration(QKDError):
    """The configuration yields no key even at zero distance."""


class UnboundedLimit(QKDError):
    """A distance limit does not exist within the search range."""


class ConfigError(QKDError):
    """Malformed or out-of-range run configuration."""

    def __init__(self, message, line=None, key=None):
        self.message, self.line, self.key = message, line, key
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
