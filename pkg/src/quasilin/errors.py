"""Exception types shared across the package."""


class QuasilinError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(QuasilinError, ValueError):
    """An argument is malformed (non-finite, empty, wrong shape)."""


class RangeError(QuasilinError, ValueError):
    """A value lies outside the admissible interval of an operation."""


class PreconditionError(QuasilinError, ValueError):
    """A documented precondition of an operation is violated."""


class DataError(QuasilinError, ValueError):
    """Input data (mesh, coefficient field) fails a structural invariant."""


class ConvergenceError(QuasilinError, RuntimeError):
    """An iterative solver failed to reach its tolerance.

    Carries the residual history so callers can inspect stagnation.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []
