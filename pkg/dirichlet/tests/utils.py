import numpy as np

from dirichlet.special_math import cholesky


def random_spd(dim, rng, jitter=0.5):
    """
    A well-conditioned random SPD matrix.

    :type rng: numpy.random.Generator
    :rtype: dirichlet.special_math.SpdMatrix
    """
    a = rng.standard_normal((dim, dim))
    return cholesky(a @ a.T / dim + jitter * np.eye(dim))


def monte_carlo_kl(log_q, log_p, samples):
    """
    Monte Carlo estimate of KL(q ‖ p) from samples of q, and its standard error.

    :param log_q: log-density of q over an array of samples
    :param log_p: log-density of p over an array of samples
    """
    diff = np.asarray(log_q(samples), dtype=float) - np.asarray(log_p(samples), dtype=float)
    return float(diff.mean()), float(diff.std(ddof=1) / np.sqrt(len(diff)))


def finite_difference(func, x, index, step=1e-5):
    """
    Central difference of a scalar function of a flat vector along one coordinate.
    """
    plus = x.copy()
    minus = x.copy()
    plus[index] += step
    minus[index] -= step
    return (func(plus) - func(minus)) / (2.0 * step)
