"""
Ways of pooling one bag's instances into centroids.

Every pooling function takes the bag's feature rows (already in canonical
order) and returns a `Pooled` tuple: the centroid rows, the centroid index
of every instance, the patch-level mixture state when one was fitted, and
whether that fit converged.
"""
import logging
from collections import namedtuple

import numpy as np
from sklearn.cluster import KMeans

from dirichlet.mixture import fit, hard_assignments

log = logging.getLogger(__name__)

Pooled = namedtuple('Pooled', ('centroids', 'assignments', 'components', 'state', 'converged'))


def _group_means(X, labels):
    components = np.unique(labels)
    centroids = np.vstack([X[labels == k].mean(axis=0) for k in components])
    return centroids, np.searchsorted(components, labels), components


def dp_pool(X, patch_config, seed):
    """
    Fit the patch-level DP and take the feature mean of every nonempty argmax group.
    """
    state = fit(X, patch_config.T, patch_config.eta, patch_config.fit.replace(seed=seed))
    centroids, assignments, components = _group_means(X, hard_assignments(state))
    return Pooled(centroids, assignments, components, state, state.converged)


def mean_pool(X, patch_config, seed):
    return Pooled(X.mean(axis=0, keepdims=True), np.zeros(len(X), dtype=int), np.zeros(1, dtype=int), None, True)


def max_pool(X, patch_config, seed):
    return Pooled(X.max(axis=0, keepdims=True), np.zeros(len(X), dtype=int), np.zeros(1, dtype=int), None, True)


def kmeans_pool(X, patch_config, seed):
    n_clusters = min(patch_config.T, len(X))
    kmeans = KMeans(n_clusters=n_clusters, n_init=10, random_state=seed).fit(X)
    centroids, assignments, components = _group_means(X, kmeans.labels_)
    return Pooled(centroids, assignments, components, None, True)


POOLINGS = {
    'dp': dp_pool,
    'mean': mean_pool,
    'max': max_pool,
    'kmeans': kmeans_pool,
}
