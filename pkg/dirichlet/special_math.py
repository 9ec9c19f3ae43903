"""
Special functions and Cholesky-factored SPD matrices.

Every density and divergence in the package works on `SpdMatrix` objects,
which only ever hold the lower Cholesky factor; solves go through the factor
and nothing inverts a dense matrix.
"""
import numpy as np
from scipy import linalg, special
from scipy.linalg import lapack

from dirichlet.errors import DecompositionError, DomainError, ShapeError

SYMMETRY_TOLERANCE = 1e-10


class SpdMatrix:
    """
    A symmetric positive definite matrix stored as its lower Cholesky factor.

    >>> m = cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
    >>> float(m.chol[1, 0])
    1.0
    """

    __slots__ = ('chol',)

    def __init__(self, chol):
        chol = np.array(chol, dtype=float, copy=True)
        if chol.ndim != 2 or chol.shape[0] != chol.shape[1]:
            raise ShapeError("Cholesky factor must be square, got shape %s" % (chol.shape,))
        if not np.all(np.diag(chol) > 0):
            raise DomainError("Cholesky factor must have a strictly positive diagonal")
        self.chol = np.tril(chol)

    def __repr__(self):
        return '<SpdMatrix dim=%d logdet=%.6g>' % (self.dim, self.log_det)

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim))

    @classmethod
    def from_matrix(cls, matrix):
        return cholesky(matrix)

    @property
    def dim(self):
        return self.chol.shape[0]

    @property
    def matrix(self):
        return self.chol @ self.chol.T

    @property
    def log_det(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def solve(self, b):
        return spd_solve(self, b)

    def inverse(self):
        """
        The inverse as another `SpdMatrix` (refactored, so its factor is lower triangular again).
        """
        chol_inv = linalg.solve_triangular(self.chol, np.eye(self.dim), lower=True)
        inv = chol_inv.T @ chol_inv
        return cholesky((inv + inv.T) / 2.0)

    def scaled(self, factor):
        """
        `factor * self` for a positive scalar factor.
        """
        if factor <= 0:
            raise DomainError("Scale factor must be positive, got %r" % factor)
        return SpdMatrix(self.chol * np.sqrt(factor))


def digamma(x):
    """
    The digamma function Ψ(x) for x > 0.

    Accepts scalars or arrays; scalars come back as floats.

    >>> round(digamma(1.0), 10)
    -0.5772156649
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(arr > 0):
        raise DomainError("digamma is only defined here for x > 0, got %r" % (x,))
    value = special.digamma(arr)
    if np.ndim(value) == 0:
        return float(value)
    return value


def multivariate_digamma(p, a):
    """
    Σ_{j=1..p} Ψ(a + (1 − j) / 2), the derivative of the log multivariate gamma function.
    """
    if a <= (p - 1) / 2.0:
        raise DomainError("multivariate digamma needs a > (p - 1) / 2, got a=%r, p=%d" % (a, p))
    return float(np.sum(digamma(a + (1.0 - np.arange(1, p + 1)) / 2.0)))


def log_multivariate_gamma(p, a):
    """
    ln Γ_p(a) = p(p − 1)/4 · ln π + Σ_{j=1..p} ln Γ(a + (1 − j)/2).

    :type p: int
    :type a: float
    :rtype: float
    """
    if int(p) != p or p < 1:
        raise DomainError("Dimension must be a positive integer, got %r" % (p,))
    if not a > (p - 1) / 2.0:
        raise DomainError("log multivariate gamma needs a > (p - 1) / 2, got a=%r, p=%d" % (a, p))
    return float(special.multigammaln(a, int(p)))


def cholesky(matrix):
    """
    Factor a dense symmetric matrix.

    The input is symmetrized as (A + Aᵀ)/2 after checking it is symmetric
    within `SYMMETRY_TOLERANCE` relative to its largest entry.

    :raises DecompositionError: if the matrix is not positive definite
    :rtype: SpdMatrix
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError("Expected a square matrix, got shape %s" % (a.shape,))
    if not np.all(np.isfinite(a)):
        raise DomainError("Matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOLERANCE * scale:
        raise DomainError("Matrix is not symmetric within %g" % SYMMETRY_TOLERANCE)
    a = (a + a.T) / 2.0
    factor, info = lapack.dpotrf(a, lower=1, clean=1)
    if info > 0:
        raise DecompositionError("Matrix is not positive definite", pivot=info - 1)
    if info < 0:  # pragma: no cover
        raise DomainError("Illegal argument %d to potrf" % -info)
    return SpdMatrix(factor)


def log_det(spd):
    return spd.log_det


def spd_solve(spd, b):
    """
    Solve (L Lᵀ) x = b for a vector or a matrix of right-hand sides.
    """
    b = np.asarray(b, dtype=float)
    if b.shape[0] != spd.dim:
        raise ShapeError("Right-hand side has leading dimension %d, matrix is %d x %d" % (
            b.shape[0], spd.dim, spd.dim))
    return linalg.cho_solve((spd.chol, True), b)


def triangular_solve(spd, b):
    """
    Solve L y = b; ‖y‖² is the Mahalanobis form of b.
    """
    b = np.asarray(b, dtype=float)
    if b.shape[0] != spd.dim:
        raise ShapeError("Right-hand side has leading dimension %d, matrix is %d x %d" % (
            b.shape[0], spd.dim, spd.dim))
    return linalg.solve_triangular(spd.chol, b, lower=True)
