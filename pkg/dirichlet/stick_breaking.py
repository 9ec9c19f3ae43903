"""
Truncated stick-breaking weights and their variational Beta posterior.

The last stick always takes the remainder (β_T ≡ 1), so weights over the T
components sum to one exactly and only the first T − 1 sticks are random.
"""
import numpy as np

from dirichlet.distributions import BetaParams, kl_beta
from dirichlet.errors import DomainError, NormalizationError, ShapeError
from dirichlet.special_math import digamma

ROW_TOLERANCE = 1e-8


class StickPosterior:
    """
    Variational Beta(γ₁ₜ, γ₂ₜ) posteriors of the sticks, with the concentration η of the prior Beta(1, η).
    """

    __slots__ = ('gamma1', 'gamma2', 'eta')

    def __init__(self, gamma1, gamma2, eta):
        gamma1 = np.asarray(gamma1, dtype=float).reshape(-1)
        gamma2 = np.asarray(gamma2, dtype=float).reshape(-1)
        if gamma1.shape != gamma2.shape or gamma1.size == 0:
            raise ShapeError("gamma1 and gamma2 must be non-empty and of equal length, got %d and %d" % (
                gamma1.size, gamma2.size))
        if not (np.all(gamma1 > 0) and np.all(gamma2 > 0) and eta > 0):
            raise DomainError("Stick posterior parameters must be positive")
        self.gamma1 = gamma1
        self.gamma2 = gamma2
        self.eta = float(eta)

    def __repr__(self):
        return '<StickPosterior T=%d eta=%g>' % (self.T, self.eta)

    @property
    def T(self):
        return self.gamma1.size


def prior_sticks(T, eta):
    """
    The posterior that equals the prior: γ₁ = 1, γ₂ = η.
    """
    return StickPosterior(np.ones(T), np.full(T, float(eta)), eta)


def stick_weights(beta):
    """
    Mixture weights from T − 1 stick proportions.

    >>> stick_weights([0.5, 0.5]).tolist()
    [0.5, 0.25, 0.25]
    """
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if np.any(beta <= 0) or np.any(beta >= 1):
        raise DomainError("Stick proportions must lie strictly inside (0, 1)")
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - beta)))
    return np.concatenate((beta, [1.0])) * remaining


def update_gamma(phi, eta):
    """
    Coordinate update of the stick posteriors from responsibilities.

    γ₁ₜ = 1 + Σⱼ φⱼₜ and γ₂ₜ = η + Σⱼ Σ_{r>t} φⱼᵣ.

    :param phi: responsibilities, one row per item, shape (n, T)
    :rtype: StickPosterior
    """
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 2 or phi.shape[1] == 0:
        raise ShapeError("Responsibilities must be an (n, T) matrix, got shape %s" % (phi.shape,))
    if np.any(phi < 0) or np.any(phi > 1):
        raise NormalizationError("Responsibilities must lie in [0, 1]")
    if phi.shape[0] and np.max(np.abs(phi.sum(axis=1) - 1.0)) > ROW_TOLERANCE:
        raise NormalizationError("Responsibility rows must sum to 1")
    mass = phi.sum(axis=0)
    tail = np.concatenate((np.cumsum(mass[::-1])[-2::-1], [0.0]))
    return StickPosterior(1.0 + mass, eta + tail, eta)


def expected_log_beta(sp):
    """
    E[ln βₜ] and E[ln(1 − βₜ)] under the Beta posteriors.
    """
    total = digamma(sp.gamma1 + sp.gamma2)
    return digamma(sp.gamma1) - total, digamma(sp.gamma2) - total


def expected_log_pi(sp):
    """
    E[ln πₜ] = E[ln βₜ] + Σ_{l<t} E[ln(1 − β_l)], with E[ln β_T] = 0.
    """
    log_beta, log_rest = expected_log_beta(sp)
    log_beta = np.asarray(log_beta, dtype=float).reshape(-1).copy()
    log_rest = np.asarray(log_rest, dtype=float).reshape(-1)
    log_beta[-1] = 0.0
    return log_beta + np.concatenate(([0.0], np.cumsum(log_rest[:-1])))


def expected_weights(sp):
    """
    E[πₜ] = E[βₜ] Π_{l<t} E[1 − β_l] with E[β_T] = 1.
    """
    mean_beta = sp.gamma1 / (sp.gamma1 + sp.gamma2)
    mean_beta[-1] = 1.0
    return mean_beta * np.concatenate(([1.0], np.cumprod(1.0 - mean_beta[:-1])))


def kl_sticks(sp):
    """
    Σ_{t<T} KL(Beta(γ₁ₜ, γ₂ₜ) ‖ Beta(1, η)).
    """
    prior = BetaParams(1.0, sp.eta)
    return float(sum(kl_beta(BetaParams(a, b), prior) for a, b in zip(sp.gamma1[:-1], sp.gamma2[:-1])))
