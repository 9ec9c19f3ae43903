"""
Log-densities, entropies and closed-form KL divergences for the
distributions of the model: multivariate Gaussian, Wishart,
Normal-Inverse-Wishart, Beta and Categorical.
"""
import numpy as np
from scipy import linalg, special

from dirichlet.errors import DomainError, NormalizationError, ShapeError
from dirichlet.special_math import (
    SpdMatrix, digamma, log_multivariate_gamma, multivariate_digamma, triangular_solve
)

LOG_2PI = float(np.log(2.0 * np.pi))
LABEL_SMOOTHING = 1e-6
PROBABILITY_TOLERANCE = 1e-8


class GaussianParams:
    __slots__ = ('mean', 'cov')

    def __init__(self, mean, cov):
        mean = np.asarray(mean, dtype=float).reshape(-1)
        if not isinstance(cov, SpdMatrix):
            raise TypeError("cov must be an SpdMatrix, not %s" % type(cov).__name__)
        if mean.shape[0] != cov.dim:
            raise ShapeError("Mean has dimension %d but covariance is %d x %d" % (mean.shape[0], cov.dim, cov.dim))
        if not np.all(np.isfinite(mean)):
            raise DomainError("Gaussian mean must be finite")
        self.mean = mean
        self.cov = cov

    def __repr__(self):
        return '<GaussianParams dim=%d>' % self.dim

    @property
    def dim(self):
        return self.cov.dim


class NIWParams:
    """
    Normal-Inverse-Wishart hyperparameters (m, κ, V).

    The same κ is used as the concentration of the mean and as the degrees of
    freedom of the Wishart on the precision, so κ must exceed p − 1.
    """

    __slots__ = ('m', 'kappa', 'V')

    def __init__(self, m, kappa, V):
        m = np.asarray(m, dtype=float).reshape(-1)
        if not isinstance(V, SpdMatrix):
            raise TypeError("V must be an SpdMatrix, not %s" % type(V).__name__)
        if m.shape[0] != V.dim:
            raise ShapeError("Prior mean has dimension %d but scale matrix is %d x %d" % (m.shape[0], V.dim, V.dim))
        if not kappa > V.dim - 1:
            raise DomainError("kappa must exceed p - 1 = %d, got %r" % (V.dim - 1, kappa))
        self.m = m
        self.kappa = float(kappa)
        self.V = V

    def __repr__(self):
        return '<NIWParams dim=%d kappa=%g>' % (self.dim, self.kappa)

    @classmethod
    def default(cls, dim, kappa=None):
        """
        m₀ = 0, κ = p + 2, V₀ = I.
        """
        return cls(np.zeros(dim), dim + 2.0 if kappa is None else kappa, SpdMatrix.identity(dim))

    @property
    def dim(self):
        return self.V.dim

    def mean_covariance(self):
        """
        E[Σ] = V⁻¹ / (κ − p − 1) under the prior; the divisor is floored at 1
        where the expectation does not exist.

        :rtype: SpdMatrix
        """
        return self.V.inverse().scaled(1.0 / max(self.kappa - self.dim - 1.0, 1.0))

    @property
    def row_dof(self):
        """
        Degrees of freedom of the per-row Wishart term on encoded precisions:
        κ, but at least p + 2.
        """
        return max(self.kappa, self.dim + 2.0)


class BetaParams:
    __slots__ = ('a', 'b')

    def __init__(self, a, b):
        if not (a > 0 and b > 0):
            raise DomainError("Beta parameters must be positive, got (%r, %r)" % (a, b))
        self.a = float(a)
        self.b = float(b)

    def __repr__(self):
        return '<BetaParams a=%g b=%g>' % (self.a, self.b)


def mvn_logpdf(x, params):
    """
    Multivariate normal log-density of a vector, or of every row of a matrix.

    :type params: GaussianParams
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.dim:
        raise ShapeError("Point has dimension %d, distribution has %d" % (x.shape[-1], params.dim))
    diff = (x - params.mean).T
    y = triangular_solve(params.cov, diff)
    maha = np.sum(y * y, axis=0)
    value = -0.5 * (params.dim * LOG_2PI + params.cov.log_det + maha)
    if np.ndim(value) == 0:
        return float(value)
    return value


def batched_mvn_logpdf(X, means, chols):
    """
    Log-density of each row of X under its own Gaussian.

    `means` has shape (..., n, p) and `chols` (..., n, p, p) holding lower
    Cholesky factors; the result has shape (..., n).
    """
    X = np.asarray(X, dtype=float)
    if means.shape[-2:] != X.shape or chols.shape[-3:-2] != X.shape[:1]:
        raise ShapeError("Encodings of shape %s do not match data of shape %s" % (means.shape, X.shape))
    p = X.shape[1]
    y = np.linalg.solve(chols, (X - means)[..., None])[..., 0]
    half_logdet = np.sum(np.log(np.diagonal(chols, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (p * LOG_2PI + np.sum(y * y, axis=-1)) - half_logdet


def wishart_logpdf(Lambda, kappa, V):
    """
    Wishart log-density of the precision `Lambda` with κ degrees of freedom and scale V.

    :type Lambda: SpdMatrix
    :type V: SpdMatrix
    """
    p = V.dim
    if Lambda.dim != p:
        raise ShapeError("Precision is %d x %d but scale matrix is %d x %d" % (Lambda.dim, Lambda.dim, p, p))
    if not kappa > p - 1:
        raise DomainError("Wishart degrees of freedom must exceed p - 1 = %d, got %r" % (p - 1, kappa))
    trace = float(np.trace(linalg.cho_solve((V.chol, True), Lambda.matrix)))
    return (-0.5 * kappa * p * np.log(2.0)
            - 0.5 * kappa * V.log_det
            - log_multivariate_gamma(p, kappa / 2.0)
            + 0.5 * (kappa - p - 1.0) * Lambda.log_det
            - 0.5 * trace)


def batched_wishart_logpdf(chols, kappa, V):
    """
    Wishart log-density of the precision (LLᵀ)⁻¹ for every lower Cholesky
    factor L in `chols`, shape (..., p, p); the result has shape (...).

    :type V: SpdMatrix
    """
    p = V.dim
    if chols.shape[-2:] != (p, p):
        raise ShapeError("Cholesky factors of shape %s for a %d x %d scale matrix" % (chols.shape[-2:], p, p))
    if not kappa > p - 1:
        raise DomainError("Wishart degrees of freedom must exceed p - 1 = %d, got %r" % (p - 1, kappa))
    inv = np.linalg.solve(chols, np.broadcast_to(np.eye(p), chols.shape))
    precision = np.swapaxes(inv, -1, -2) @ inv
    trace = np.einsum('ij,...ji->...', V.inverse().matrix, precision)
    log_det = -2.0 * np.sum(np.log(np.diagonal(chols, axis1=-2, axis2=-1)), axis=-1)
    return (-0.5 * kappa * p * np.log(2.0)
            - 0.5 * kappa * V.log_det
            - log_multivariate_gamma(p, kappa / 2.0)
            + 0.5 * (kappa - p - 1.0) * log_det
            - 0.5 * trace)


def niw_logpdf(mu, Sigma, prior):
    """
    Joint log-density of (μ, Σ) under the NIW prior: N(μ; m, Σ/κ) · W(Σ⁻¹; κ, V).

    :type Sigma: SpdMatrix
    :type prior: NIWParams
    """
    if Sigma.dim != prior.dim:
        raise ShapeError("Covariance is %d x %d, prior is %d-dimensional" % (Sigma.dim, Sigma.dim, prior.dim))
    normal = mvn_logpdf(mu, GaussianParams(prior.m, Sigma.scaled(1.0 / prior.kappa)))
    return normal + wishart_logpdf(Sigma.inverse(), prior.kappa, prior.V)


def gaussian_entropy(cov):
    """
    (p/2)(1 + ln 2π) + ½ ln|Σ|
    """
    return 0.5 * cov.dim * (1.0 + LOG_2PI) + 0.5 * cov.log_det


def batched_gaussian_entropy(chols):
    p = chols.shape[-1]
    return 0.5 * p * (1.0 + LOG_2PI) + np.sum(np.log(np.diagonal(chols, axis1=-2, axis2=-1)), axis=-1)


def kl_beta(q, p):
    """
    KL(Beta(q.a, q.b) ‖ Beta(p.a, p.b)).
    """
    return float(special.betaln(p.a, p.b) - special.betaln(q.a, q.b)
                 + (q.a - p.a) * digamma(q.a)
                 + (q.b - p.b) * digamma(q.b)
                 + (p.a - q.a + p.b - q.b) * digamma(q.a + q.b))


def kl_gaussian(q, p):
    """
    KL(N(μq, Σq) ‖ N(μp, Σp)).
    """
    if q.dim != p.dim:
        raise ShapeError("Cannot compare a %d-dimensional Gaussian with a %d-dimensional one" % (q.dim, p.dim))
    whitened = triangular_solve(p.cov, q.cov.chol)
    shift = triangular_solve(p.cov, p.mean - q.mean)
    return 0.5 * (float(np.sum(whitened * whitened)) + float(shift @ shift) - q.dim
                  + p.cov.log_det - q.cov.log_det)


def kl_wishart(q, p):
    """
    KL(W(κq, Vq) ‖ W(κp, Vp)), each side given as a (kappa, V) pair.
    """
    kappa_q, V_q = q
    kappa_p, V_p = p
    dim = V_q.dim
    if V_p.dim != dim:
        raise ShapeError("Cannot compare a %d-dimensional Wishart with a %d-dimensional one" % (dim, V_p.dim))
    for kappa in (kappa_q, kappa_p):
        if not kappa > dim - 1:
            raise DomainError("Wishart degrees of freedom must exceed p - 1 = %d, got %r" % (dim - 1, kappa))
    whitened = triangular_solve(V_p, V_q.chol)
    trace = float(np.sum(whitened * whitened))
    return (-0.5 * kappa_p * (V_q.log_det - V_p.log_det)
            + 0.5 * kappa_q * (trace - dim)
            + log_multivariate_gamma(dim, kappa_p / 2.0)
            - log_multivariate_gamma(dim, kappa_q / 2.0)
            + 0.5 * (kappa_q - kappa_p) * multivariate_digamma(dim, kappa_q / 2.0))


def check_probability_vector(v, name='probability vector'):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError("%s must be a non-empty vector, got shape %s" % (name, v.shape))
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise NormalizationError("%s has negative or non-finite entries" % name)
    if abs(v.sum() - 1.0) > PROBABILITY_TOLERANCE:
        raise NormalizationError("%s sums to %.12g, not 1" % (name, v.sum()))
    return v


def smooth_one_hot(label, K, eps=LABEL_SMOOTHING):
    """
    (1 − ε)·onehot(label) + ε/K
    """
    if not 0 <= label < K:
        raise DomainError("Label %r is outside 0..%d" % (label, K - 1))
    target = np.full(K, eps / K)
    target[label] += 1.0 - eps
    return target


def kl_categorical(q, p, eps=LABEL_SMOOTHING):
    """
    Σ q_i ln(q_i / p_i) with 0 · ln 0 = 0.

    A one-hot `p` is a label; it is smoothed by `eps` first, which turns the
    divergence into a (shifted) cross-entropy against that label.
    """
    q = check_probability_vector(q, 'q')
    p = check_probability_vector(p, 'p')
    if q.shape != p.shape:
        raise ShapeError("Categoricals over %d and %d outcomes" % (q.size, p.size))
    if np.count_nonzero(p) == 1 and p.max() == 1.0:
        p = smooth_one_hot(int(np.argmax(p)), p.size, eps)
    if np.any((q > 0) & (p == 0)):
        raise DomainError("q puts mass where p has none")
    return float(np.sum(special.rel_entr(q, p)))
