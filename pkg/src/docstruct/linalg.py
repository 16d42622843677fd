"""Dense LU factorization, log-determinant and inverse on float64 arrays.

Documents are short (tens of sentences), so everything here is plain dense
numpy with partial pivoting. A pivot smaller than ``PIVOT_TOL`` marks the
matrix singular; callers that need an inverse get a ``SingularMatrixError``
rather than NaNs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrixError, ValidationError

PIVOT_TOL = 1e-12


def as_matrix(m, name="matrix"):
    a = np.array(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValidationError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} has non-finite entries")
    return a


def _square(m):
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    return a


@dataclass(frozen=True)
class LuFactors:
    """Packed LU factors with ``P @ m == L @ U``.

    ``lu`` holds U on and above the diagonal and the unit-lower L below it.
    ``perm[k]`` is the original row that ended up in row ``k``.
    """

    lu: np.ndarray
    perm: np.ndarray
    parity: int
    singular: bool = False
    min_pivot: float = np.inf

    @property
    def n(self):
        return self.lu.shape[0]

    @property
    def lower(self):
        return np.tril(self.lu, -1) + np.eye(self.n)

    @property
    def upper(self):
        return np.triu(self.lu)

    def permutation_matrix(self):
        p = np.zeros((self.n, self.n))
        p[np.arange(self.n), self.perm] = 1.0
        return p

    def reconstruct(self):
        """Return ``P^-1 L U``, which should equal the factored matrix."""
        out = np.empty_like(self.lu)
        out[self.perm] = self.lower @ self.upper
        return out


def lu_factor(m):
    a = _square(m).copy()
    n = a.shape[0]
    perm = np.arange(n)
    parity = 1
    singular = False
    min_pivot = np.inf
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if p != k:
            a[[k, p]] = a[[p, k]]
            perm[[k, p]] = perm[[p, k]]
            parity = -parity
        pivot = a[k, k]
        min_pivot = min(min_pivot, abs(pivot))
        if abs(pivot) < PIVOT_TOL:
            singular = True
            # column below is even smaller; drop it rather than divide by ~0
            a[k + 1:, k] = 0.0
            continue
        if k + 1 < n:
            a[k + 1:, k] /= pivot
            a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return LuFactors(a, perm, parity, singular, float(min_pivot))


def log_abs_det(m):
    """Return ``(sign, log|det m|)``; sign is 0 (and log -inf) when singular."""
    f = lu_factor(m)
    if f.singular:
        return 0, -np.inf
    diag = np.diag(f.lu)
    sign = f.parity * int(np.prod(np.sign(diag)))
    return sign, float(np.sum(np.log(np.abs(diag))))


def lu_solve(factors, b):
    if factors.singular:
        raise SingularMatrixError(
            f"matrix is singular (smallest pivot {factors.min_pivot:.3e} < {PIVOT_TOL:g})",
            pivot=factors.min_pivot,
        )
    lu = factors.lu
    n = factors.n
    x = np.array(b, dtype=np.float64)[factors.perm]
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def invert(m):
    f = lu_factor(m)
    return lu_solve(f, np.eye(f.n))


def logdet_and_inverse(m):
    """Log-determinant sign/magnitude and inverse from a single factorization."""
    f = lu_factor(m)
    inv = lu_solve(f, np.eye(f.n))
    diag = np.diag(f.lu)
    sign = f.parity * int(np.prod(np.sign(diag)))
    return sign, float(np.sum(np.log(np.abs(diag)))), inv
