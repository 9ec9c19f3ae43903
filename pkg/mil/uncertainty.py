"""
Likelihood based scores: per-instance patch scores, the slide-level
log-likelihood of a bag, and the baseline uncertainty measures it is
compared with for out-of-distribution detection.
"""
import csv
import logging
from collections import namedtuple

import numpy as np
from scipy import special

from dirichlet.distributions import batched_mvn_logpdf, check_probability_vector, gaussian_entropy
from dirichlet.encoder import encode, forward
from dirichlet.mixture import predictive_log_proba
from mil.errors import ConfigurationError, ModelStateError
from mil.pipeline import TrainedModel, aggregate_bag, bag_probabilities, centroid_class_log_proba

log = logging.getLogger(__name__)

OodScore = namedtuple('OodScore', ('measure', 'value', 'larger_is_in_distribution'))

# Whether a larger value of the measure means "more in-distribution".
ORIENTATION = {
    'log_responsibility': True,
    'max_confidence': True,
    'entropy': False,
    'differential_entropy': False,
}
MEASURES = tuple(ORIENTATION)


class PatchScoreReport:
    """
    One score per instance of a bag.

    `degenerate` is set when no patch cluster maps to the tumor class, so
    every tumor weight is small and the scores carry little localization.
    """

    __slots__ = ('bag_id', 'scores', 'coords', 'degenerate')

    def __init__(self, bag_id, scores, coords=None, degenerate=False):
        self.bag_id = bag_id
        self.scores = scores
        self.coords = coords
        self.degenerate = degenerate

    def __repr__(self):
        return '<PatchScoreReport %s n=%d>' % (self.bag_id, len(self.scores))

    @property
    def normalized(self):
        """
        Scores min-max scaled into [0, 1] within the bag.
        """
        low, high = self.scores.min(), self.scores.max()
        if high == low:
            return np.zeros_like(self.scores)
        return (self.scores - low) / (high - low)


def _require_trained(model):
    if not isinstance(model, TrainedModel):
        raise ModelStateError("Expected a trained model, got %r" % (model,))


def tumor_log_weights(centroid_set, model, tumor_class):
    """
    ln p(tumor | centroid) under the slide-level mixture for the centroid of
    every patch component, and whether any centroid's most probable class is
    the tumor class. Components without a centroid get -inf, as do all
    components when the model has no tumor class.
    """
    log_weights = np.full(centroid_set.state.T, -np.inf)
    if not 0 <= tumor_class < model.n_classes:
        return log_weights, False
    class_log = centroid_class_log_proba(centroid_set.centroids, model)
    log_weights[centroid_set.components] = class_log[:, tumor_class]
    return log_weights, bool(np.any(np.argmax(class_log, axis=1) == tumor_class))


def patch_scores(bag, model, raw_likelihood=None, tumor_class=None):
    """
    log Σₜ φ̄ₜ wₜ p(xⱼ | encode(xⱼ, ψₜ)) for every instance j.

    φ̄ is the bag's mean patch-level responsibility and wₜ ∈ [0, 1] the
    tumor-class probability of component t's centroid; with
    `raw_likelihood` every wₜ is 1.

    :rtype: PatchScoreReport
    """
    _require_trained(model)
    if model.patch_config.pooling != 'dp':
        raise ConfigurationError("Patch scores need dp pooling, the model uses %s" % model.patch_config.pooling)
    hp = model.hyperparams
    raw_likelihood = hp.get('raw_likelihood', False) if raw_likelihood is None else raw_likelihood
    tumor_class = hp.get('tumor_class', 1) if tumor_class is None else tumor_class

    prepared = model.prepare(bag)
    centroid_set = aggregate_bag(prepared, model.patch_config)
    state = centroid_set.state
    with np.errstate(divide='ignore'):
        log_weights = np.log(state.phi.mean(axis=0))
    degenerate = False
    if not raw_likelihood:
        tumor, has_tumor_cluster = tumor_log_weights(centroid_set, model, tumor_class)
        degenerate = not has_tumor_cluster
        if np.any(np.isfinite(tumor)):
            log_weights = log_weights + tumor
        else:
            log.warning("Model has no class %d, scoring bag %s with the raw likelihood", tumor_class, bag.bag_id)
        if degenerate:
            log.info("No patch cluster of bag %s maps to the tumor class", bag.bag_id)

    encoding = forward(prepared.features, state.encoders)
    loglik = batched_mvn_logpdf(prepared.features, encoding.means, encoding.chols)
    scores = special.logsumexp(log_weights[:, None] + loglik, axis=0)
    return PatchScoreReport(bag.bag_id, scores, bag.coords, degenerate)


def _slide_loglik(centroids, model):
    state = model.state
    encoding = forward(centroids, state.encoders)
    loglik = batched_mvn_logpdf(centroids, encoding.means, encoding.chols)
    with np.errstate(divide='ignore'):
        log_weights = np.log(state.phi.mean(axis=0))
    return float(np.mean(special.logsumexp(log_weights[:, None] + loglik, axis=0)))


def slide_loglik(bag, model):
    """
    Mean over the bag's centroids of log Σₖ φ̄ₖ p(c | encode(c, υₖ)), with φ̄
    the mean slide-level responsibility of the training centroids.
    """
    _require_trained(model)
    prepared = model.prepare(bag)
    return _slide_loglik(aggregate_bag(prepared, model.patch_config).centroids, model)


def baseline_measures(probs, component):
    """
    :param probs: class probability vector
    :param component: GaussianParams of the most responsible slide-level component
    :rtype: list[OodScore]
    """
    probs = check_probability_vector(probs, 'class probabilities')
    return [
        OodScore('max_confidence', float(probs.max()), ORIENTATION['max_confidence']),
        OodScore('entropy', float(np.sum(special.entr(probs))), ORIENTATION['entropy']),
        OodScore('differential_entropy', gaussian_entropy(component.cov), ORIENTATION['differential_entropy']),
    ]


def bag_measures(bag, model):
    """
    Every OOD measure of one bag, the bag pooled once.

    :rtype: list[OodScore]
    """
    _require_trained(model)
    centroids = aggregate_bag(model.prepare(bag), model.patch_config).centroids
    probs = bag_probabilities(centroids, model)
    component = int(np.argmax(np.exp(predictive_log_proba(centroids, model.state)).mean(axis=0)))
    gaussian = encode(centroids.mean(axis=0), model.state.encoders[component])
    scores = [OodScore('log_responsibility', _slide_loglik(centroids, model), ORIENTATION['log_responsibility'])]
    return scores + baseline_measures(probs, gaussian)


def write_patch_scores(reports, fp):
    writer = csv.writer(fp, lineterminator='\n')
    writer.writerow(['bag_id', 'instance_index', 'row', 'col', 'score', 'score_normalized'])
    for report in reports:
        normalized = report.normalized
        for index, score in enumerate(report.scores):
            row, col = ('', '') if report.coords is None else report.coords[index]
            writer.writerow([report.bag_id, index, row, col, '%.6f' % score, '%.6f' % normalized[index]])
