"""
Truncated variational Dirichlet process Gaussian mixture whose components
are encoded by per-component networks.

`fit_dp` alternates the closed-form coordinate updates of the stick
posteriors and the responsibilities with gradient ascent steps on the
encoder networks, and stops on a small relative change of the ELBO.
"""
import csv
import logging

import numpy as np
from scipy import special, stats

from dirichlet.distributions import (
    LABEL_SMOOTHING, NIWParams, batched_gaussian_entropy, batched_mvn_logpdf, niw_logpdf
)
from dirichlet.encoder import (
    EncoderParams, apply_gradient, batch_average, forward, grad_elbo_wrt_params, row_covariance_logpdf
)
from dirichlet.errors import DomainError, NumericError, ShapeError
from dirichlet.special_math import cholesky, triangular_solve
from dirichlet.stick_breaking import (
    expected_log_pi, expected_weights, kl_sticks, prior_sticks, update_gamma
)

log = logging.getLogger(__name__)

INIT_NOISE = 1e-3
OCCUPANCY_TOLERANCE = 1e-6


class FitConfig:
    """
    Stopping and optimisation settings of one `fit_dp` run.

    `seed_tail` is the upper-tail probability of the χ² threshold that opens a
    new seed cluster during initialisation.
    """

    __slots__ = ('max_iters', 'rel_tol', 'lr', 'seed', 'inner_grad_steps', 'seed_tail', 'hidden')

    def __init__(self, max_iters=200, rel_tol=1e-6, lr=1e-3, seed=0, inner_grad_steps=1, seed_tail=1e-6,
                 hidden=None):
        if max_iters < 1 or inner_grad_steps < 0:
            raise DomainError("max_iters must be positive and inner_grad_steps nonnegative")
        if not (rel_tol > 0 and lr >= 0 and 0 < seed_tail < 1):
            raise DomainError("rel_tol and seed_tail must be positive, lr nonnegative")
        self.max_iters = int(max_iters)
        self.rel_tol = float(rel_tol)
        self.lr = float(lr)
        self.seed = int(seed)
        self.inner_grad_steps = int(inner_grad_steps)
        self.seed_tail = float(seed_tail)
        self.hidden = hidden

    def __repr__(self):
        return '<FitConfig max_iters=%d rel_tol=%g lr=%g seed=%d>' % (
            self.max_iters, self.rel_tol, self.lr, self.seed)

    def replace(self, **kwargs):
        values = {name: getattr(self, name) for name in self.__slots__}
        values.update(kwargs)
        return FitConfig(**values)


class DPMixtureState:
    """
    Variational state of a fitted mixture.

    Responsibilities are stored in the log domain; `phi` exponentiates them.
    `labels` holds one class index per row (negative for unlabelled rows) or
    is None for an unsupervised fit.
    """

    def __init__(self, log_phi, sticks, encoders, prior, eta, labels=None):
        log_phi = np.asarray(log_phi, dtype=float)
        if log_phi.ndim != 2 or log_phi.shape[1] != sticks.T or len(encoders) != sticks.T:
            raise ShapeError("State with %s responsibilities, %d sticks and %d encoders" % (
                log_phi.shape, sticks.T, len(encoders)))
        if labels is not None:
            labels = np.asarray(labels, dtype=int).reshape(-1)
            if labels.shape[0] != log_phi.shape[0]:
                raise ShapeError("%d labels for %d rows" % (labels.shape[0], log_phi.shape[0]))
        self.log_phi = log_phi
        self.sticks = sticks
        self.encoders = list(encoders)
        self.prior = prior
        self.eta = float(eta)
        self.labels = labels
        self.converged = False
        self.n_iter = 0
        self.elbo_trace = []

    def __repr__(self):
        return '<DPMixtureState n=%d T=%d converged=%s>' % (self.n, self.T, self.converged)

    @property
    def T(self):
        return self.sticks.T

    @property
    def n(self):
        return self.log_phi.shape[0]

    @property
    def dim(self):
        return self.prior.dim

    @property
    def phi(self):
        return np.exp(self.log_phi)

    def copy(self):
        state = DPMixtureState(self.log_phi.copy(), self.sticks, self.encoders, self.prior, self.eta, self.labels)
        state.converged = self.converged
        state.n_iter = self.n_iter
        state.elbo_trace = list(self.elbo_trace)
        return state


def initial_responsibilities(n, T, rng=None):
    """
    Uniform 1/T responsibilities with symmetry-breaking noise, as log-probabilities.
    """
    rng = np.random.default_rng(rng)
    phi = 1.0 / T + INIT_NOISE * rng.uniform(size=(n, T))
    return np.log(phi / phi.sum(axis=1, keepdims=True))


def seed_clusters(X, T, prior, tail=1e-6):
    """
    Single pass small-variance DP seeding.

    Rows join the nearest running seed mean when their squared Mahalanobis
    distance under the prior's mean covariance stays below the χ²ₚ quantile
    with upper tail `tail`; otherwise they open a new seed while fewer than T
    exist. Returns (mean, covariance) pairs, largest seed first.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    metric = prior.mean_covariance()
    threshold = stats.chi2.isf(tail, X.shape[1])
    means, counts = [], []
    for x in X:
        if means:
            dist = _mahalanobis(metric, x[None, :], np.array(means))[0]
            nearest = int(np.argmin(dist))
            if dist[nearest] <= threshold or len(means) >= T:
                counts[nearest] += 1
                means[nearest] = means[nearest] + (x - means[nearest]) / counts[nearest]
                continue
        means.append(x.copy())
        counts.append(1)
    assignment = np.argmin(_mahalanobis(metric, X, np.array(means)), axis=1)
    groups = [X[assignment == k] for k in range(len(means))]
    groups = sorted((g for g in groups if len(g)), key=len, reverse=True)
    return [_group_gaussian(g, prior) for g in groups]


def _mahalanobis(metric, X, centers):
    diff = X[:, None, :] - centers[None, :, :]
    y = triangular_solve(metric, diff.reshape(-1, X.shape[1]).T)
    return np.sum(y * y, axis=0).reshape(X.shape[0], centers.shape[0])


def _group_gaussian(group, prior):
    """
    Group mean, and its scatter shrunk towards the prior's mean covariance with weight κ.
    """
    mean = group.mean(axis=0)
    scatter = (group - mean).T @ (group - mean)
    cov = (scatter + prior.kappa * prior.mean_covariance().matrix) / (len(group) + prior.kappa)
    return mean, cholesky((cov + cov.T) / 2.0)


def initial_encoders(X, T, prior, rng=None, labels=None, hidden=None, tail=1e-6):
    """
    T freshly initialised networks with their output biases anchored on data seeds.

    Labelled rows give one seed per class (component k for class k);
    otherwise `seed_clusters` picks them. Components without a seed are
    anchored at the prior mean and mean covariance.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    rng = np.random.default_rng(rng)
    anchors = [None] * T
    if labels is not None and np.any(np.asarray(labels) >= 0):
        labels = np.asarray(labels, dtype=int)
        for k in range(T):
            group = X[labels == k]
            if len(group):
                anchors[k] = _group_gaussian(group, prior)
    else:
        for k, seed in enumerate(seed_clusters(X, T, prior, tail)):
            anchors[k] = seed
    fallback = (prior.m, prior.mean_covariance())
    encoders = []
    for anchor in anchors:
        mean, cov = anchor or fallback
        encoders.append(EncoderParams.initialize(X.shape[1], hidden, rng).anchor(mean, cov))
    return encoders


def supervision_log_target(labels, T, eps=LABEL_SMOOTHING):
    """
    ln p̃ⱼₜ of the smoothed one-hot label of every labelled row; zero rows for unlabelled ones.
    """
    labels = np.asarray(labels, dtype=int).reshape(-1)
    if np.any(labels >= T):
        raise DomainError("Label %d is outside 0..%d" % (labels.max(), T - 1))
    target = np.zeros((labels.shape[0], T))
    labelled = labels >= 0
    target[labelled] = np.log(eps / T)
    target[np.flatnonzero(labelled), labels[labelled]] = np.log(1.0 - eps + eps / T)
    return target


def _component_terms(X, state, encoding=None):
    if encoding is None:
        encoding = forward(X, state.encoders)
    loglik = batched_mvn_logpdf(X, encoding.means, encoding.chols).T
    entropy = batched_gaussian_entropy(encoding.chols).T
    if state.prior is not None:
        covariance = row_covariance_logpdf(encoding, state.prior).T
    else:
        covariance = np.zeros_like(loglik)
    return encoding, loglik, entropy, covariance


def update_responsibilities(X, state, encoding=None, labels=None):
    """
    ln φⱼₜ = E[ln πₜ] + ln N(xⱼ; μₜ(xⱼ), Σₜ(xⱼ)) + ℍ(Σₜ(xⱼ)) + ln W(Σₜ(xⱼ)⁻¹; κ', V)
    [+ ln p̃ⱼₜ for labelled rows], normalised per row with log-sum-exp.

    :return: new log-responsibilities, shape (n, T)
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = state.labels if labels is None else labels
    encoding, loglik, entropy, covariance = _component_terms(X, state, encoding)
    logits = expected_log_pi(state.sticks)[None, :] + loglik + entropy + covariance
    if labels is not None:
        logits = logits + supervision_log_target(labels, state.T)
    bad = np.argwhere(~np.isfinite(logits))
    if len(bad):
        raise NumericError("Non-finite log-density", index=tuple(int(i) for i in bad[0]))
    return logits - special.logsumexp(logits, axis=1, keepdims=True)


def elbo_terms(X, state, labels=None, encoding=None):
    """
    The ELBO broken into its parts:

    - likelihood: Σ φ (ln N + ℍ) of the encoded components
    - assignment: Σ φ E[ln π] plus the entropy of φ
    - supervision: Σ φ ln p̃ over labelled rows (zero without labels)
    - sticks: −KL of the stick posteriors
    - covariance: Σ φ ln W of every row's encoded precision under the prior's
      scale V with `row_dof` degrees of freedom
    - prior: NIW log-density of each component's batch-averaged encoding
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = state.labels if labels is None else labels
    encoding, loglik, entropy, covariance = _component_terms(X, state, encoding)
    phi = state.phi
    terms = {
        'likelihood': float(np.sum(phi * (loglik + entropy))),
        'assignment': float(np.sum(phi * (expected_log_pi(state.sticks)[None, :] - state.log_phi))),
        'supervision': 0.0,
        'sticks': -kl_sticks(state.sticks),
        'covariance': float(np.sum(phi * covariance)),
        'prior': 0.0,
    }
    if labels is not None:
        terms['supervision'] = float(np.sum(phi * supervision_log_target(labels, state.T)))
    if state.prior is not None:
        for t in np.flatnonzero(phi.any(axis=0)):
            mean, cov = batch_average(encoding, t)
            terms['prior'] += niw_logpdf(mean, cov, state.prior)
    return terms


def compute_elbo(X, state, labels=None, encoding=None):
    return float(sum(elbo_terms(X, state, labels, encoding).values()))


def _check_rows(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 1:
        raise ShapeError("Cannot fit a mixture to zero rows")
    if not np.all(np.isfinite(X)):
        raise DomainError("Input rows must be finite")
    return X


def fit_dp(X, log_phi, encoders, T, eta, config=None, labels=None, prior=None):
    """
    Fit the mixture to the rows of X.

    :param log_phi: initial log-responsibilities, shape (n, T)
    :param encoders: initial component networks
    :param labels: optional class index per row, negative for unlabelled rows
    :param prior: NIW prior; defaults to `NIWParams.default`
    :type config: FitConfig
    :rtype: DPMixtureState
    """
    X = _check_rows(X)
    config = config or FitConfig()
    prior = prior or NIWParams.default(X.shape[1])
    state = DPMixtureState(log_phi, prior_sticks(T, eta), encoders, prior, eta, labels)

    previous = None
    for iteration in range(1, config.max_iters + 1):
        encoding = forward(X, state.encoders)
        state.sticks = update_gamma(state.phi, eta)
        state.log_phi = update_responsibilities(X, state, encoding)
        elbo = compute_elbo(X, state, encoding=encoding)
        state.elbo_trace.append(elbo)
        state.n_iter = iteration
        log.debug("iteration %d: ELBO %.8g", iteration, elbo)
        if previous is not None and abs(elbo - previous) <= config.rel_tol * max(abs(previous), 1.0):
            state.converged = True
            break
        previous = elbo
        for _ in range(config.inner_grad_steps):
            grads = grad_elbo_wrt_params(X, state.phi, state.encoders, prior)
            state.encoders = apply_gradient(state.encoders, grads, config.lr)

    if not state.converged:
        log.info("DP fit on %d rows did not converge in %d iterations", state.n, config.max_iters)
    return state


def fit(X, T, eta, config=None, labels=None, prior=None):
    """
    `fit_dp` from the standard initialisation, seeded by `config.seed`.
    """
    X = _check_rows(X)
    config = config or FitConfig()
    prior = prior or NIWParams.default(X.shape[1])
    rng = np.random.default_rng(config.seed)
    log_phi = initial_responsibilities(X.shape[0], T, rng)
    encoders = initial_encoders(X, T, prior, rng, labels=labels, hidden=config.hidden, tail=config.seed_tail)
    return fit_dp(X, log_phi, encoders, T, eta, config, labels=labels, prior=prior)


def predictive_log_proba(X, state):
    """
    ln p(z = t | x) for every row: E[πₜ] times the encoded likelihood, normalised over t.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != state.dim:
        raise ShapeError("Point has dimension %d, mixture has %d" % (X.shape[1], state.dim))
    encoding = forward(X, state.encoders)
    log_weights = np.log(expected_weights(state.sticks))
    logits = log_weights[None, :] + batched_mvn_logpdf(X, encoding.means, encoding.chols).T
    return logits - special.logsumexp(logits, axis=1, keepdims=True)


def posterior_predictive(x, state):
    """
    :return: probability vector over the T components
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    return np.exp(predictive_log_proba(x[None, :], state)[0])


def hard_assignments(state):
    return np.argmax(state.log_phi, axis=1)


def occupied_clusters(state, min_mass=1.0):
    """
    Indices of components whose responsibility column mass reaches `min_mass`.
    """
    return np.flatnonzero(state.phi.sum(axis=0) >= min_mass - OCCUPANCY_TOLERANCE)


def write_elbo_trace(state, fp):
    writer = csv.writer(fp, lineterminator='\n')
    writer.writerow(['iteration', 'elbo'])
    for iteration, elbo in enumerate(state.elbo_trace, start=1):
        writer.writerow([iteration, '%.10g' % elbo])
