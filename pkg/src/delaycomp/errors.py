"""Exception hierarchy of the delaycomp toolkit."""


class DelayCompError(Exception):
    """Base class of every error raised by delaycomp."""

    exit_code = 2


class DimensionError(DelayCompError):
    """Operands with incompatible or invalid shapes."""


class DomainError(DelayCompError):
    """Argument outside the domain of the operation."""


class SingularMatrixError(DelayCompError):
    """
    A linear solve met a pivot below the singularity threshold.

    Parameters
    ----------
    message : str
        Human readable description.
    pivot : int
        Index of the failing pivot.
    """

    exit_code = 4

    def __init__(self, message: str, pivot: int):
        super().__init__(message)
        self.pivot = pivot


class NotHurwitzError(DelayCompError):
    """A matrix required to be Hurwitz has an eigenvalue with Re >= 0."""

    exit_code = 4


class ControllabilityError(DelayCompError):
    """The pair (A, B) is not controllable."""


class ConvergenceError(DelayCompError):
    """An iterative method did not converge within its budget."""

    exit_code = 4


class DesignError(DelayCompError):
    """The nominal gain does not satisfy the design assumptions."""


class FeedforwardError(DelayCompError):
    """The reference feedforward gain does not exist for this output."""


class HistoryError(DelayCompError):
    """The input history does not cover the requested window."""


class AssemblyError(DelayCompError):
    """Plant, controller and LMI blocks are dimensionally inconsistent."""


class LmiSolverError(DelayCompError):
    """The semidefinite solver failed (distinct from a NotFound verdict)."""

    exit_code = 4


class ComparisonError(DelayCompError):
    """Trajectories cannot be compared (different time grids)."""


class SpecError(DelayCompError):
    """Invalid run-spec document."""
