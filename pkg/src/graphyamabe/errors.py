"""Exception hierarchy shared by every module of the package."""


class YamabeError(Exception):
    """Base class for all package errors."""


class DomainError(YamabeError, ValueError):
    """An input is outside the domain of an operation (wrong vertex set, negative field...)."""


class ParameterError(YamabeError, ValueError):
    """A numeric parameter (p, alpha, tolerances) violates its precondition."""


class GraphLoadError(YamabeError, ValueError):
    """A graph description could not be turned into a valid WeightedGraph."""


class DegenerateInputError(DomainError):
    """The input is degenerate for the operation, e.g. projecting the zero field."""


class ConvergenceError(YamabeError, RuntimeError):
    """An iterative solve stopped before reaching its tolerance.

    ``best`` carries the best iterate found (a ``PSolution``) so callers can
    inspect or dump it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ContinuationError(YamabeError, RuntimeError):
    """A p-solve inside the continuation failed; ``series`` holds the solved prefix."""

    def __init__(self, message, series=None, cause=None):
        super().__init__(message)
        self.series = list(series or [])
        self.cause = cause


class BoundViolation(YamabeError, AssertionError):
    """An a-priori bound check failed. Signals a solver bug, not user error."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
