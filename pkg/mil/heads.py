"""
Centroid classifiers that can stand in for the slide-level DP.
"""
import logging
import warnings

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.neural_network import MLPClassifier

log = logging.getLogger(__name__)

MLP_HIDDEN = (64,)
MLP_MAX_ITER = 500


class MlpHead:
    """
    A multilayer perceptron fitted on the pooled centroids, each labelled
    with its bag's class.

    The training centroids are kept, so a saved model refits the same
    network from them and the seed.
    """

    __slots__ = ('centroids', 'labels', 'n_classes', 'seed', 'network')

    def __init__(self, centroids, labels, n_classes, seed=0):
        self.centroids = np.asarray(centroids, dtype=float)
        self.labels = np.asarray(labels, dtype=int)
        self.n_classes = int(n_classes)
        self.seed = int(seed)
        self.network = MLPClassifier(hidden_layer_sizes=MLP_HIDDEN, max_iter=MLP_MAX_ITER, random_state=self.seed)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always', ConvergenceWarning)
            self.network.fit(self.centroids, self.labels)
        if any(issubclass(w.category, ConvergenceWarning) for w in caught):
            log.info("MLP head on %d centroids stopped after %d iterations", len(self.labels), MLP_MAX_ITER)

    def __repr__(self):
        return '<MlpHead n=%d classes=%d>' % (len(self.labels), self.n_classes)

    def class_log_proba(self, centroids):
        """
        ln p(class | centroid) for every centroid, shape (M, n_classes);
        classes absent from the training labels get a vanishing probability.
        """
        proba = np.zeros((len(centroids), self.n_classes))
        proba[:, self.network.classes_] = self.network.predict_proba(np.asarray(centroids, dtype=float))
        return np.log(np.maximum(proba, np.finfo(float).tiny))
