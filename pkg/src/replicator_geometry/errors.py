"""Exception hierarchy shared by every module."""


class ReplicatorError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(ReplicatorError, ValueError):
    """Array shapes do not agree."""


class BoundaryError(ReplicatorError, ValueError):
    """A simplex point lies on (or too close to) the boundary."""


class NotPositiveDefiniteError(ReplicatorError, ValueError):
    """A matrix that must be symmetric positive definite failed factorization."""


class NumericalError(ReplicatorError, ArithmeticError):
    """Non-finite values or a degenerate quantity appeared during a computation."""
