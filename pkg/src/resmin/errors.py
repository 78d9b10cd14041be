"""Exception types raised across the package."""


class ResminError(Exception):
    """Base class for all package errors."""


class ParseError(ResminError, ValueError):
    pass


class ValidationError(ResminError, ValueError):
    """Invalid skeleton data; ``index`` names the offending node when known."""

    def __init__(self, message, index=None):
        if index is not None:
            message = f"{message} (index {index})"
        super().__init__(message)
        self.index = index


class InvalidFactor(ResminError, ValueError):
    pass


class ZeroParameter(ResminError, ValueError):
    pass


class DomainError(ResminError, ArithmeticError):
    pass


class OutOfRange(ResminError, ValueError):
    pass


class OutOfBranch(ResminError, ValueError):
    pass


class BracketFailure(ResminError, RuntimeError):
    pass


class StepsizeUnderflow(ResminError, RuntimeError):
    pass


class MaxStepsExceeded(ResminError, RuntimeError):
    pass


class NonConvergence(ResminError, RuntimeError):
    """Optimizer stopped before meeting its tolerances.

    The partial result, if any, is kept on ``solution`` so callers can still
    inspect or report it.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class DomainWarning(UserWarning):
    """An interpolant leaves the problem's domain somewhere on a stage."""


class DegenerateStage(UserWarning):
    """A stage whose minimal residual is zero to working precision."""
