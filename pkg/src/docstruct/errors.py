class DocstructError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DocstructError, ValueError):
    """Bad input: malformed files, shape mismatches, out-of-range indices."""


class NumericalError(DocstructError, ArithmeticError):
    """A computation could not produce a finite, well-defined result."""


class SingularMatrixError(NumericalError):
    def __init__(self, message, pivot=None, column=None):
        super().__init__(message)
        self.pivot = pivot
        self.column = column


class InferenceError(NumericalError):
    """Matrix-tree inference failed (singular or non-finite Laplacian)."""


class DivergenceError(NumericalError):
    """Training produced a non-finite loss."""
