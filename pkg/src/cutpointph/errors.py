"""Exception hierarchy shared by every module."""


class CutpointError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(CutpointError, ValueError):
    """An argument lies outside the domain of the operation."""


class StructureError(CutpointError, ValueError):
    """A model or matrix violates a structural invariant."""


class NumericError(CutpointError, ArithmeticError):
    """A numerical procedure failed (singular solve, underflow, ...)."""


class TailUnderflowError(NumericError):
    """The survival function underflowed to zero."""


class FitError(NumericError):
    """EM fitting aborted. ``trace`` holds the log-likelihoods seen so far."""

    def __init__(self, message, trace=None, observation=None):
        super().__init__(message)
        self.trace = list(trace or [])
        self.observation = observation
