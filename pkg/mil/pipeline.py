"""
Cascaded DP multiple instance learning.

Each bag is pooled into centroids by a patch-level DP; the centroids of all
bags, each labelled with its bag's class, are fitted by a supervised
slide-level DP whose component k stands for class k. Bags are classified by
averaging the class evidence of their centroids under the slide-level DP.
"""
import hashlib
import logging

import numpy as np
from scipy import special
from sklearn.random_projection import GaussianRandomProjection

from dirichlet.distributions import NIWParams
from dirichlet.errors import ShapeError
from dirichlet.mixture import FitConfig, fit_dp, initial_encoders, initial_responsibilities, predictive_log_proba
from mil.conf import resolve_hyperparams
from mil.errors import ConfigurationError, DatasetError, ModelStateError
from mil.heads import MlpHead
from mil.pooling import POOLINGS
from mil.workers import map_bags

log = logging.getLogger(__name__)


class Bag:
    """
    The feature rows of one slide, its optional class label and optional
    per-instance (row, col) coordinates.
    """

    __slots__ = ('bag_id', 'features', 'label', 'coords')

    def __init__(self, bag_id, features, label=None, coords=None):
        features = np.asarray(features, dtype=float)
        if features.ndim != 2 or features.shape[0] < 1:
            raise DatasetError("A bag needs at least one instance row, got shape %s" % (features.shape,), [bag_id])
        if not np.all(np.isfinite(features)):
            raise DatasetError("Bag features must be finite", [bag_id])
        if label is not None and int(label) < 0:
            raise DatasetError("Negative class label %r" % label, [bag_id])
        if coords is not None:
            coords = np.asarray(coords, dtype=np.int64)
            if coords.shape != (features.shape[0], 2):
                raise DatasetError("Expected %d coordinate pairs, got shape %s" % (
                    features.shape[0], coords.shape), [bag_id])
        self.bag_id = str(bag_id)
        self.features = features
        self.label = None if label is None else int(label)
        self.coords = coords

    def __repr__(self):
        return '<Bag %s n=%d label=%s>' % (self.bag_id, self.n, self.label)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def with_features(self, features):
        return Bag(self.bag_id, features, self.label, self.coords)


class CentroidSet:
    """
    Output of `aggregate_bag`.

    `assignments[j]` is the row of `centroids` that instance j was pooled
    into, `components[m]` the patch-level component behind centroid m.
    """

    __slots__ = ('centroids', 'assignments', 'components', 'state', 'converged')

    def __init__(self, centroids, assignments, components, state=None, converged=True):
        self.centroids = centroids
        self.assignments = assignments
        self.components = components
        self.state = state
        self.converged = converged

    def __repr__(self):
        return '<CentroidSet M=%d converged=%s>' % (len(self.centroids), self.converged)

    @property
    def M(self):
        return self.centroids.shape[0]


class PatchConfig:
    __slots__ = ('T', 'eta', 'pooling', 'fit', 'seed')

    def __init__(self, T=10, eta=1.0, pooling='dp', fit=None, seed=0):
        if pooling not in POOLINGS:
            raise ConfigurationError("Unknown pooling %r" % pooling)
        self.T = int(T)
        self.eta = float(eta)
        self.pooling = pooling
        self.fit = fit or FitConfig()
        self.seed = int(seed)

    def __repr__(self):
        return '<PatchConfig T=%d eta=%g pooling=%s>' % (self.T, self.eta, self.pooling)

    @classmethod
    def from_hyperparams(cls, hp):
        return cls(T=hp['T'], eta=hp['eta1'], pooling=hp['pooling'], fit=fit_config(hp), seed=hp['seed'])


class TrainedModel:
    """
    Slide-level mixture state plus everything needed to pool and classify a new bag.

    `class_map[k]` is the class that slide-level component k votes for.
    `projection` is the (d, p) random projection matrix or None. `head` is
    an `MlpHead` that classifies the centroids instead of the slide-level
    mixture, or None.
    """

    FORMAT_VERSION = 1

    def __init__(self, state, patch_config, class_map, n_classes, hyperparams, projection=None, history=None,
                 head=None):
        if state is None:
            raise ModelStateError("A trained model needs a fitted slide-level state")
        class_map = np.asarray(class_map, dtype=int)
        if class_map.shape != (state.T,):
            raise ModelStateError("Class map of length %d for %d components" % (class_map.size, state.T))
        if set(class_map.tolist()) != set(range(n_classes)):
            raise ModelStateError("Class map %s does not cover classes 0..%d" % (class_map.tolist(), n_classes - 1))
        self.state = state
        self.patch_config = patch_config
        self.class_map = class_map
        self.n_classes = int(n_classes)
        self.hyperparams = dict(hyperparams)
        self.projection = projection
        self.history = list(history or [])
        self.head = head

    def __repr__(self):
        return '<TrainedModel K=%d classes=%d dim=%d>' % (self.state.T, self.n_classes, self.input_dim)

    @property
    def K(self):
        return self.state.T

    @property
    def input_dim(self):
        if self.projection is not None:
            return self.projection.shape[1]
        return self.state.dim

    def prepare(self, bag):
        """
        Check the bag's dimension and project it into the model's feature space.
        """
        if bag.dim != self.input_dim:
            raise ShapeError("Bag %s has %d features, the model expects %d" % (bag.bag_id, bag.dim, self.input_dim))
        return project_bag(bag, self.projection)


def fit_config(hp):
    return FitConfig(max_iters=hp['max_iters'], rel_tol=hp['rel_tol'], lr=hp['lr'], seed=hp['seed'],
                     inner_grad_steps=hp['inner_grad_steps'], hidden=hp['hidden'])


def fit_projection(features, hp):
    """
    Seeded Gaussian random projection matrix when the features are wider than `project_above`, else None.
    """
    if features.shape[1] <= hp['project_above']:
        return None
    projector = GaussianRandomProjection(n_components=hp['project_dim'], random_state=hp['seed'])
    projector.fit(features)
    log.info("Projecting %d features down to %d", features.shape[1], hp['project_dim'])
    return np.asarray(projector.components_, dtype=float)


def project_bag(bag, projection):
    if projection is None:
        return bag
    return bag.with_features(bag.features @ projection.T)


def canonical_order(features):
    """
    Row permutation that sorts the rows lexicographically.
    """
    return np.lexsort(features.T[::-1])


def content_seed(sorted_features, seed, epoch=0):
    """
    32-bit seed derived from the bag's (sorted) content, the run seed and the epoch.
    """
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(sorted_features, dtype='<f8').tobytes())
    digest.update(b'%d:%d' % (seed, epoch))
    return int.from_bytes(digest.digest()[:4], 'little')


def aggregate_bag(bag, patch_config, epoch=0):
    """
    Pool a bag into centroids.

    The rows are pooled in canonical order with a content-derived seed, so
    the result does not depend on the order of the instances.

    :rtype: CentroidSet
    """
    order = canonical_order(bag.features)
    X = bag.features[order]
    pooled = POOLINGS[patch_config.pooling](X, patch_config, content_seed(X, patch_config.seed, epoch))
    assignments = np.empty_like(pooled.assignments)
    assignments[order] = pooled.assignments
    if not pooled.converged:
        log.info("Patch-level fit of bag %s stopped before converging", bag.bag_id)
    state = pooled.state
    if state is not None:
        state = state.copy()
        log_phi = np.empty_like(state.log_phi)
        log_phi[order] = state.log_phi
        state.log_phi = log_phi
    return CentroidSet(pooled.centroids, assignments, pooled.components, state, pooled.converged)


def aggregate_bags(bags, patch_config, epoch=0, threads=None):
    centroid_sets = map_bags(lambda bag: aggregate_bag(bag, patch_config, epoch), bags, threads)
    stalled = sum(1 for centroid_set in centroid_sets.values() if not centroid_set.converged)
    if stalled:
        log.warning("%d of %d patch-level fits stopped before converging", stalled, len(centroid_sets))
    return centroid_sets


def centroid_class_log_proba(centroids, model):
    """
    ln p(class | centroid) for every centroid, shape (M, n_classes), from the
    model's MLP head when it has one.
    """
    if model.head is not None:
        return model.head.class_log_proba(centroids)
    log_resp = predictive_log_proba(centroids, model.state)
    columns = []
    for c in range(model.n_classes):
        columns.append(special.logsumexp(log_resp[:, model.class_map == c], axis=1))
    return np.column_stack(columns)


def bag_probabilities(centroids, model):
    """
    The bag's class probabilities: the mean of the per-centroid class
    probability vectors, or with `bag_rule = log` the normalised mean of
    their logarithms.
    """
    class_log = centroid_class_log_proba(centroids, model)
    if model.hyperparams.get('bag_rule', 'probability') == 'probability':
        probs = np.exp(class_log).mean(axis=0)
    else:
        mean_log = class_log.mean(axis=0)
        probs = np.exp(mean_log - special.logsumexp(mean_log))
    return probs / probs.sum()


def predict_bag(bag, model):
    """
    :return: (class index, class probability vector)
    """
    bag = model.prepare(bag)
    centroid_set = aggregate_bag(bag, model.patch_config)
    probs = bag_probabilities(centroid_set.centroids, model)
    return int(np.argmax(probs)), probs


def predict_bags(bags, model, threads=None):
    """
    :return: OrderedDict of bag_id -> (class index, probabilities)
    """
    return map_bags(lambda bag: predict_bag(bag, model), bags, threads)


def _check_training_bags(bags):
    bags = sorted(bags, key=lambda bag: bag.bag_id)
    if not bags:
        raise DatasetError("No bags to train on")
    unlabelled = [bag.bag_id for bag in bags if bag.label is None]
    if unlabelled:
        raise DatasetError("Training bags must be labelled", unlabelled)
    dims = {bag.dim for bag in bags}
    if len(dims) != 1:
        raise DatasetError("Bags disagree on the feature dimension %s" % sorted(dims),
                           [bag.bag_id for bag in bags if bag.dim != bags[0].dim])
    classes = {bag.label for bag in bags}
    if len(classes) < 2:
        raise ConfigurationError("Training needs at least two classes, found %s" % sorted(classes))
    return bags


def _concatenate(bags, centroid_sets):
    centroids = np.vstack([centroid_sets[bag.bag_id].centroids for bag in bags])
    labels = np.concatenate([np.full(centroid_sets[bag.bag_id].M, bag.label) for bag in bags])
    return centroids, labels


def class_map_for(state, labels, n_classes):
    """
    Component k < n_classes votes for class k; any further component votes
    for the class holding most of its responsibility mass.
    """
    class_map = np.arange(state.T) % n_classes
    phi = state.phi
    for k in range(n_classes, state.T):
        mass = np.bincount(labels, weights=phi[:, k], minlength=n_classes)
        class_map[k] = int(np.argmax(mass))
    return class_map


def _accuracy(bags, centroid_sets, model):
    hits = 0
    for bag in bags:
        probs = bag_probabilities(centroid_sets[bag.bag_id].centroids, model)
        hits += int(np.argmax(probs)) == bag.label
    return hits / len(bags)


def train(bags, hyperparams=None, validation=None, threads=None):
    """
    Train the cascaded model.

    Every epoch re-pools the bags (unless `cache_aggregation` is set), then
    continues the supervised slide-level fit from the previous epoch's
    state. Training stops after `epochs` epochs or once the monitored
    accuracy (validation bags when given, else the training bags) has not
    improved for `patience` epochs; the best epoch's model is returned.

    :rtype: TrainedModel
    """
    hp = resolve_hyperparams(hyperparams)
    bags = _check_training_bags(bags)
    n_classes = max(bag.label for bag in bags) + 1
    K = hp['K'] or n_classes
    if K < n_classes:
        raise ConfigurationError("K = %d is smaller than the number of classes %d" % (K, n_classes))

    projection = fit_projection(np.vstack([bag.features for bag in bags]), hp)
    bags = [project_bag(bag, projection) for bag in bags]
    if validation:
        validation = sorted((project_bag(bag, projection) for bag in validation), key=lambda bag: bag.bag_id)
    patch_config = PatchConfig.from_hyperparams(hp)
    slide_config = fit_config(hp)
    prior = NIWParams.default(bags[0].dim)
    rng = np.random.default_rng(hp['seed'])

    state = None
    centroid_sets = None
    validation_sets = None
    best, best_accuracy, stale = None, -1.0, 0
    history = []
    for epoch in range(hp['epochs']):
        if centroid_sets is None or not hp['cache_aggregation']:
            centroid_sets = aggregate_bags(bags, patch_config, epoch, threads)
        centroids, labels = _concatenate(bags, centroid_sets)
        if state is None:
            log_phi = initial_responsibilities(len(centroids), K, rng)
            encoders = initial_encoders(centroids, K, prior, rng, labels=labels, hidden=hp['hidden'])
        else:
            encoders = state.encoders
            log_phi = state.log_phi if state.n == len(centroids) else initial_responsibilities(len(centroids), K, rng)
        state = fit_dp(centroids, log_phi, encoders, K, hp['eta2'], slide_config, labels=labels, prior=prior)

        head = MlpHead(centroids, labels, n_classes, hp['seed']) if hp['classifier'] == 'mlp' else None
        model = TrainedModel(state.copy(), patch_config, class_map_for(state, labels, n_classes), n_classes, hp,
                             projection=projection, history=history, head=head)
        if validation:
            if validation_sets is None:
                validation_sets = aggregate_bags(validation, patch_config, threads=threads)
            accuracy = _accuracy(validation, validation_sets, model)
        else:
            accuracy = _accuracy(bags, centroid_sets, model)
        history.append({'epoch': epoch + 1, 'centroids': len(centroids), 'elbo': state.elbo_trace[-1],
                        'accuracy': accuracy})
        log.info("Epoch %d: %d centroids, ELBO %.6g, %s accuracy %.4f", epoch + 1, len(centroids),
                 state.elbo_trace[-1], 'validation' if validation else 'training', accuracy)

        if accuracy > best_accuracy:
            best, best_accuracy, stale = model, accuracy, 0
        else:
            stale += 1
            if stale >= hp['patience']:
                log.info("Accuracy has not improved for %d epochs, stopping", stale)
                break

    best.history = list(history)
    return best
