"""
Per-component encoder networks.

Each mixture component t owns a small network ψₜ mapping an input embedding
x to a Gaussian N(μₜ(x), Lₜ(x)Lₜ(x)ᵀ): one tanh hidden layer of width h
(2p by default) feeding a mean head of p outputs and a Cholesky head of
p(p + 1)/2 outputs. The Cholesky diagonal goes through softplus plus a
floor, so every encoded covariance is positive definite.

Gradients are analytic; the fitting loop takes plain clipped gradient
ascent steps on the ELBO.
"""
import logging
from collections import namedtuple

import numpy as np

from dirichlet.distributions import (
    GaussianParams, batched_gaussian_entropy, batched_mvn_logpdf, batched_wishart_logpdf, niw_logpdf
)
from dirichlet.errors import NumericError, ShapeError
from dirichlet.special_math import SpdMatrix, cholesky

log = logging.getLogger(__name__)

CHOLESKY_FLOOR = 1e-4
GRADIENT_CLIP = 10.0

Encoding = namedtuple('Encoding', ('means', 'chols', 'hidden', 'raw'))


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inverse(y):
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def cholesky_layout(dim):
    """
    Row and column indices of the Cholesky head outputs, and which of them are diagonal.
    """
    rows, cols = np.tril_indices(dim)
    return rows, cols, rows == cols


class EncoderParams:
    """
    Weights of one component network.

    W1: (h, p), b1: (h,), W2: (p + p(p + 1)/2, h), b2: (p + p(p + 1)/2,)
    """

    __slots__ = ('W1', 'b1', 'W2', 'b2')

    def __init__(self, W1, b1, W2, b2):
        W1, b1, W2, b2 = (np.array(a, dtype=float) for a in (W1, b1, W2, b2))
        hidden, dim = W1.shape
        n_out = dim + dim * (dim + 1) // 2
        if b1.shape != (hidden,) or W2.shape != (n_out, hidden) or b2.shape != (n_out,):
            raise ShapeError("Inconsistent encoder shapes W1=%s b1=%s W2=%s b2=%s" % (
                W1.shape, b1.shape, W2.shape, b2.shape))
        self.W1 = W1
        self.b1 = b1
        self.W2 = W2
        self.b2 = b2

    def __repr__(self):
        return '<EncoderParams dim=%d hidden=%d>' % (self.dim, self.hidden)

    @property
    def dim(self):
        return self.W1.shape[1]

    @property
    def hidden(self):
        return self.W1.shape[0]

    @property
    def arrays(self):
        return self.W1, self.b1, self.W2, self.b2

    @classmethod
    def zeros(cls, dim, hidden=None):
        hidden = 2 * dim if hidden is None else hidden
        n_out = dim + dim * (dim + 1) // 2
        return cls(np.zeros((hidden, dim)), np.zeros(hidden), np.zeros((n_out, hidden)), np.zeros(n_out))

    @classmethod
    def initialize(cls, dim, hidden=None, rng=None, zero_output=True):
        """
        Uniform(−1/√fan_in, 1/√fan_in) weights and biases.

        With `zero_output` the output layer starts at zero, so the network
        encodes the same Gaussian for every input until trained; `anchor`
        then places that Gaussian.
        """
        rng = np.random.default_rng(rng)
        params = cls.zeros(dim, hidden)
        bound = 1.0 / np.sqrt(dim)
        params.W1 = rng.uniform(-bound, bound, params.W1.shape)
        params.b1 = rng.uniform(-bound, bound, params.b1.shape)
        if not zero_output:
            bound = 1.0 / np.sqrt(params.hidden)
            params.W2 = rng.uniform(-bound, bound, params.W2.shape)
            params.b2 = rng.uniform(-bound, bound, params.b2.shape)
        return params

    def copy(self):
        return EncoderParams(*self.arrays)

    def anchor(self, mean, cov):
        """
        Copy with the output biases set so that a zero output layer encodes N(mean, cov).

        :type cov: SpdMatrix
        """
        dim = self.dim
        mean = np.asarray(mean, dtype=float).reshape(-1)
        if mean.shape[0] != dim or cov.dim != dim:
            raise ShapeError("Anchor of dimension %d for a %d-dimensional encoder" % (mean.shape[0], dim))
        rows, cols, diagonal = cholesky_layout(dim)
        raw = cov.chol[rows, cols].copy()
        raw[diagonal] = softplus_inverse(np.maximum(raw[diagonal] - CHOLESKY_FLOOR, 1e-12))
        anchored = self.copy()
        anchored.b2 = np.concatenate((mean, raw))
        return anchored

    def ravel(self):
        return np.concatenate([a.ravel() for a in self.arrays])

    @classmethod
    def unravel(cls, vector, dim, hidden):
        template = cls.zeros(dim, hidden)
        parts, offset = [], 0
        for a in template.arrays:
            parts.append(np.asarray(vector[offset:offset + a.size], dtype=float).reshape(a.shape))
            offset += a.size
        return cls(*parts)


def stack(encoders):
    dims = {(e.dim, e.hidden) for e in encoders}
    if len(dims) != 1:
        raise ShapeError("Encoders of one mixture must share their shapes, got %s" % sorted(dims))
    return tuple(np.stack(parts) for parts in zip(*(e.arrays for e in encoders)))


def forward(X, encoders):
    """
    Encode every row of X with every component network.

    :return: Encoding with means (T, n, p), chols (T, n, p, p) and the
             intermediate activations needed by `backward`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    W1, b1, W2, b2 = stack(encoders)
    dim = W1.shape[2]
    if X.shape[1] != dim:
        raise ShapeError("Input has dimension %d, encoders expect %d" % (X.shape[1], dim))
    with np.errstate(over='ignore', invalid='ignore'):
        hidden = np.tanh(np.einsum('thp,np->tnh', W1, X) + b1[:, None, :])
        if not np.all(np.isfinite(hidden)):
            raise NumericError("Non-finite encoder activations", layer=1)
        out = np.einsum('toh,tnh->tno', W2, hidden) + b2[:, None, :]
        if not np.all(np.isfinite(out)):
            raise NumericError("Non-finite encoder activations", layer=2)
    means = out[..., :dim]
    raw = out[..., dim:]
    rows, cols, diagonal = cholesky_layout(dim)
    chols = np.zeros(out.shape[:2] + (dim, dim))
    chols[..., rows, cols] = raw
    diag = np.arange(dim)
    chols[..., diag, diag] = softplus(raw[..., diagonal]) + CHOLESKY_FLOOR
    return Encoding(means, chols, hidden, raw)


def encode(x, params):
    """
    The Gaussian that network `params` assigns to the input vector x.

    :rtype: GaussianParams
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    encoding = forward(x[None, :], [params])
    return GaussianParams(encoding.means[0, 0], SpdMatrix(encoding.chols[0, 0]))


def backward(X, encoders, encoding, grad_means, grad_chols):
    """
    Backpropagate gradients with respect to the encoded means and Cholesky
    factors into per-network parameter gradients.

    :rtype: list[EncoderParams]
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    W1, b1, W2, b2 = stack(encoders)
    dim = X.shape[1]
    rows, cols, diagonal = cholesky_layout(dim)
    grad_raw = grad_chols[..., rows, cols]
    grad_raw[..., diagonal] *= sigmoid(encoding.raw[..., diagonal])
    grad_out = np.concatenate((grad_means, grad_raw), axis=-1)
    grad_W2 = np.einsum('tno,tnh->toh', grad_out, encoding.hidden)
    grad_b2 = grad_out.sum(axis=1)
    grad_pre = np.einsum('toh,tno->tnh', W2, grad_out) * (1.0 - encoding.hidden ** 2)
    grad_W1 = np.einsum('tnh,np->thp', grad_pre, X)
    grad_b1 = grad_pre.sum(axis=1)
    return [EncoderParams(*parts) for parts in zip(grad_W1, grad_b1, grad_W2, grad_b2)]


def batch_average(encoding, t):
    mean = encoding.means[t].mean(axis=0)
    cov = np.einsum('nij,nkj->ik', encoding.chols[t], encoding.chols[t]) / encoding.chols.shape[1]
    return mean, cholesky((cov + cov.T) / 2.0)


def _active_components(phi):
    return np.asarray(phi).any(axis=0)


def encoder_objective(X, phi, encoders, prior=None):
    """
    The encoder-dependent part of the ELBO:

    Σⱼₜ φⱼₜ [ln N(xⱼ; μₜ(xⱼ), Σₜ(xⱼ)) + ℍ(Σₜ(xⱼ)) + ln W(Σₜ(xⱼ)⁻¹; κ', V)] + Σₜ ln NIW(μ̄ₜ, Σ̄ₜ)

    where κ' is `prior.row_dof`, (μ̄ₜ, Σ̄ₜ) is the batch average of component
    t's encodings and the NIW term skips components without any
    responsibility mass. Without a prior only the first two terms remain.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    phi = _check_phi(phi, X.shape[0], len(encoders))
    encoding = forward(X, encoders)
    loglik = batched_mvn_logpdf(X, encoding.means, encoding.chols)
    entropy = batched_gaussian_entropy(encoding.chols)
    value = float(np.sum(phi.T * (loglik + entropy)))
    if prior is not None:
        value += float(np.sum(phi.T * row_covariance_logpdf(encoding, prior)))
        for t in np.flatnonzero(_active_components(phi)):
            mean, cov = batch_average(encoding, t)
            value += niw_logpdf(mean, cov, prior)
    return value


def row_covariance_logpdf(encoding, prior):
    """
    ln W(Σₜ(xⱼ)⁻¹; κ', V) of every encoded covariance, shape (T, n).
    """
    return batched_wishart_logpdf(encoding.chols, prior.row_dof, prior.V)


def _grad_row_covariance(encoding, prior):
    # d/dL [½(κ' − p − 1) ln|Λ| − ½ tr(V⁻¹Λ)] with Λ = L⁻ᵀL⁻¹
    dim = encoding.chols.shape[-1]
    inv_t = np.swapaxes(np.linalg.solve(encoding.chols, np.broadcast_to(np.eye(dim), encoding.chols.shape)), -1, -2)
    precision = inv_t @ np.swapaxes(inv_t, -1, -2)
    grad = precision @ prior.V.inverse().matrix @ inv_t
    diag = np.arange(dim)
    grad[..., diag, diag] -= (prior.row_dof - dim - 1.0) / encoding.chols[..., diag, diag]
    return np.tril(grad)


def grad_elbo_wrt_params(X, phi, encoders, prior=None):
    """
    Analytic gradient of `encoder_objective` with respect to every network parameter.

    :param X: data, shape (n, p)
    :param phi: responsibilities, shape (n, T)
    :type encoders: list[EncoderParams]
    :type prior: dirichlet.distributions.NIWParams | None
    :rtype: list[EncoderParams]
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    phi = _check_phi(phi, X.shape[0], len(encoders))
    encoding = forward(X, encoders)
    n, dim = X.shape
    weights = phi.T[..., None]

    residual = (X - encoding.means)[..., None]
    z = np.linalg.solve(encoding.chols, residual)
    w = np.linalg.solve(np.swapaxes(encoding.chols, -1, -2), z)

    grad_means = weights * w[..., 0]
    # the log-determinant of the density cancels against the entropy
    grad_chols = weights[..., None] * np.tril(w @ np.swapaxes(z, -1, -2))

    if prior is not None:
        grad_chols += weights[..., None] * _grad_row_covariance(encoding, prior)
        precision_prior = prior.V.inverse().matrix
        for t in np.flatnonzero(_active_components(phi)):
            mean, cov = batch_average(encoding, t)
            cov_inv = cov.inverse().matrix
            delta = mean - prior.m
            grad_means[t] += -prior.kappa * (cov_inv @ delta) / n
            grad_cov = (-0.5 * (prior.kappa - dim) * cov_inv
                        + 0.5 * cov_inv @ (precision_prior + prior.kappa * np.outer(delta, delta)) @ cov_inv)
            grad_chols[t] += np.tril(2.0 / n * np.einsum('ij,njk->nik', grad_cov, encoding.chols[t]))

    return backward(X, encoders, encoding, grad_means, grad_chols)


def gradient_norm(grad):
    return float(np.sqrt(sum(np.sum(a * a) for a in grad.arrays)))


def apply_gradient(encoders, grads, lr, clip=GRADIENT_CLIP):
    """
    One ascent step per network, with the step direction clipped to norm `clip`.

    :rtype: list[EncoderParams]
    """
    updated = []
    for params, grad in zip(encoders, grads):
        norm = gradient_norm(grad)
        scale = lr * (clip / norm if norm > clip else 1.0)
        updated.append(EncoderParams(*(a + scale * g for a, g in zip(params.arrays, grad.arrays))))
    return updated


def _check_phi(phi, n, T):
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (n, T):
        raise ShapeError("Responsibilities of shape %s for %d rows and %d components" % (phi.shape, n, T))
    return phi
