"""Exception types shared across the package."""


class RedCollocError(Exception):
    """Base class for all package errors."""


class SingularMatrixError(RedCollocError, ArithmeticError):
    """Raised when a matrix is singular to working precision."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class RankDeficiencyError(RedCollocError, ArithmeticError):
    """Raised by least-squares solves on rank-deficient matrices."""

    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class LinearDependenceError(RedCollocError, ArithmeticError):
    """Raised by Gram-Schmidt when an input vector lies in the span of its predecessors.

    ``index`` is the zero-based position of the offending vector.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConvergenceError(RedCollocError, ArithmeticError):
    """Raised when an iterative solver fails to converge."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class DomainError(RedCollocError, ValueError):
    """Raised for parameter points outside their parameter domain."""


class GreedyAbort(RedCollocError):
    """Raised when offline training cannot continue."""


class ArchiveError(RedCollocError):
    """Base class for model archive failures."""


class ArchiveIntegrityError(ArchiveError):
    """Checksum mismatch or structurally corrupt archive."""


class ArchiveVersionError(ArchiveError):
    """Archive written by an incompatible format version."""
