import itertools

import numpy as np

from dirichlet.distributions import NIWParams
from dirichlet.encoder import EncoderParams
from dirichlet.mixture import DPMixtureState
from dirichlet.special_math import SpdMatrix
from dirichlet.stick_breaking import StickPosterior
from mil.conf import resolve_hyperparams
from mil.pipeline import PatchConfig, TrainedModel

QUICK_HYPERPARAMS = {
    'T': 6,
    'epochs': 2,
    'patience': 1,
    'max_iters': 25,
    'cache_aggregation': True,
    'seed': 1,
}


def symmetric_model(bag_rule='probability', offset=5.0, dim=2):
    """
    Two-class model whose components are unit Gaussians at ±offset along
    the first axis with equal weights; every point on the mirror plane is
    equidistant from both.
    """
    mean = np.zeros(dim)
    mean[0] = offset
    encoders = [EncoderParams.initialize(dim, rng=seed).anchor(sign * mean, SpdMatrix.identity(dim))
                for seed, sign in ((0, -1.0), (1, 1.0))]
    state = DPMixtureState(np.log(np.full((2, 2), 0.5)), StickPosterior([1.0, 1.0], [1.0, 1.0], 1.0), encoders,
                           prior=NIWParams.default(dim), eta=1.0, labels=[0, 1])
    hp = resolve_hyperparams({'bag_rule': bag_rule, 'max_iters': 20})
    return TrainedModel(state, PatchConfig(T=3, fit=None), [0, 1], 2, hp)


def brute_force_auroc(scores, labels):
    positives = [s for s, y in zip(scores, labels) if y == 1]
    negatives = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(positives, negatives))
    return wins / (len(positives) * len(negatives))


def brute_force_average_precision(scores, labels):
    """
    Σ over distinct thresholds (high to low) of (recall gain) × precision.
    """
    total = sum(labels)
    ap, previous_recall = 0.0, 0.0
    for threshold in sorted(set(scores), reverse=True):
        selected = [y for s, y in zip(scores, labels) if s >= threshold]
        recall = sum(selected) / total
        ap += (recall - previous_recall) * sum(selected) / len(selected)
        previous_recall = recall
    return ap


def brute_force_macro_f1(preds, labels):
    f1s = []
    for c in sorted(set(preds) | set(labels)):
        tp = sum(p == c and y == c for p, y in zip(preds, labels))
        fp = sum(p == c and y != c for p, y in zip(preds, labels))
        fn = sum(p != c and y == c for p, y in zip(preds, labels))
        f1s.append(2.0 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0)
    return sum(f1s) / len(f1s)
