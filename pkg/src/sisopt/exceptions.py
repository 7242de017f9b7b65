"""Exception types raised by the solvers."""


class SisOptError(Exception):
    """Base class for all package errors."""


class NotConverged(SisOptError):
    """An iterative method hit its iteration cap.

    ``last`` carries the final iterate (whatever the raising routine was
    iterating on) so callers can inspect or reuse it.
    """

    def __init__(self, message, last=None, iters=None):
        super().__init__(message)
        self.last = last
        self.iters = iters


class ParseError(SisOptError):
    def __init__(self, reason, line=None):
        self.reason = reason
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{reason}")


class GenerationFailed(SisOptError):
    pass


class StepTooLarge(SisOptError):
    pass


class InfeasibleStart(SisOptError):
    pass


class SubproblemFailed(SisOptError):
    def __init__(self, message, outer_index=None):
        super().__init__(message)
        self.outer_index = outer_index


class MaxIters(SisOptError):
    """Local search stopped at its iteration cap; ``best`` holds the best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class DegenerateBudget(SisOptError):
    pass
