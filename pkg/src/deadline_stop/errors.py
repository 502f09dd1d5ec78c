from __future__ import annotations


class DeadlineStopError(Exception):
    """Base class for all package errors."""


class DomainError(DeadlineStopError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ParameterError(DeadlineStopError, ValueError):
    pass


class DegenerateError(DeadlineStopError, ValueError):
    """The problem instance is trivial (immediate stopping is optimal)."""


class ModelError(DeadlineStopError, ValueError):
    pass


class ConfigurationError(DeadlineStopError, ValueError):
    pass


class AssumptionError(DeadlineStopError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class ConvergenceError(DeadlineStopError):
    def __init__(self, message: str, t: float | None = None, residual: float | None = None):
        super().__init__(message)
        self.t = t
        self.residual = residual
