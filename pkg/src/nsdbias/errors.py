"""Exception types raised across the package."""


class NsdError(Exception):
    """Base class for all package errors."""


class SvdConvergenceError(NsdError):
    pass


class DegenerateDirectionError(NsdError):
    """Power step collapsed: ``m m^T p`` is numerically zero."""


class DoubleDegeneracyError(NsdError):
    """Power step stayed degenerate after a random restart (momentum ~ 0)."""


class ZeroMatrixError(NsdError):
    """An oracle or metric received the zero matrix where a direction is needed."""


class ZeroNormError(NsdError):
    pass


class SolverBudgetError(NsdError):
    """Max-margin solver could not reach a conclusive margin in its budget."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = tuple(trace)


class NotImprovedError(SolverBudgetError):
    """Incumbent margin never became positive on data assumed separable."""


class SeparabilityError(NsdError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class StepError(NsdError):
    """Wraps an optimizer failure with the step index at which it happened."""

    def __init__(self, step, cause):
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause


class DegenerateTraceError(NsdError):
    pass
