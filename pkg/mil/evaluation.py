"""
Metrics, cross-validation and the experiment drivers built on them.
"""
import csv
import logging

import numpy as np
from sklearn.metrics import adjusted_rand_score, average_precision_score, f1_score, roc_auc_score
from sklearn.model_selection import KFold, StratifiedKFold

from mil.errors import ConfigurationError, DatasetError, UndefinedMetricError
from mil.pipeline import predict_bags, train
from mil.uncertainty import MEASURES, ORIENTATION, bag_measures
from mil.workers import map_bags

log = logging.getLogger(__name__)


def _binary(scores, labels):
    scores = np.asarray(scores, dtype=float).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.size == 0 or scores.shape != labels.shape:
        raise UndefinedMetricError("Need equally many scores and labels, got %d and %d" % (scores.size, labels.size))
    if not np.all(np.isin(labels, (0, 1))):
        raise UndefinedMetricError("Labels must be binary")
    if labels.min() == labels.max():
        raise UndefinedMetricError("Both classes must be present, got only %d" % labels[0])
    return scores, labels.astype(int)


def auroc(scores, labels):
    """
    Probability that a random positive scores above a random negative, ties counting one half.
    """
    scores, labels = _binary(scores, labels)
    return float(roc_auc_score(labels, scores))


def aupr(scores, labels):
    """
    Average precision: precision at every distinct score threshold, weighted by the recall gained there.
    """
    scores, labels = _binary(scores, labels)
    return float(average_precision_score(labels, scores))


def _predictions(preds, labels):
    preds = np.asarray(preds, dtype=int).reshape(-1)
    labels = np.asarray(labels, dtype=int).reshape(-1)
    if preds.size == 0 or preds.shape != labels.shape:
        raise UndefinedMetricError("Need equally many predictions and labels, got %d and %d" % (
            preds.size, labels.size))
    return preds, labels


def accuracy(preds, labels):
    preds, labels = _predictions(preds, labels)
    return float(np.mean(preds == labels))


def macro_f1(preds, labels, K=None):
    """
    Unweighted mean of the per-class F1 over the classes seen in either
    `preds` or `labels` (restricted to 0..K-1 when K is given).
    """
    preds, labels = _predictions(preds, labels)
    classes = np.union1d(preds, labels)
    if K is not None:
        classes = classes[classes < K]
    return float(f1_score(labels, preds, labels=classes, average='macro', zero_division=0))


def adjusted_rand(labels_true, labels_pred):
    return float(adjusted_rand_score(labels_true, labels_pred))


class FoldSplit:
    """
    `assignments` maps every bag_id to its test fold in 0..F-1.
    """

    def __init__(self, assignments, F, seed):
        self.assignments = assignments
        self.F = F
        self.seed = seed

    def __repr__(self):
        return '<FoldSplit F=%d bags=%d seed=%d>' % (self.F, len(self.assignments), self.seed)

    def split(self, bags):
        """
        Yield (fold, training bags, test bags) for every fold.
        """
        for fold in range(self.F):
            test = [bag for bag in bags if self.assignments[bag.bag_id] == fold]
            rest = [bag for bag in bags if self.assignments[bag.bag_id] != fold]
            yield fold, rest, test


def kfold_split(bags, F, seed=0):
    """
    Seeded stratified K-fold assignment of bags to test folds.

    Stratification is best effort when some class has fewer than F bags.

    :rtype: FoldSplit
    """
    if F < 2:
        raise ConfigurationError("Need at least 2 folds, got %d" % F)
    bags = sorted(bags, key=lambda bag: bag.bag_id)
    if F > len(bags):
        raise DatasetError("Cannot split %d bags into %d folds" % (len(bags), F))
    labels = np.array([-1 if bag.label is None else bag.label for bag in bags])
    _, counts = np.unique(labels, return_counts=True)
    if np.all(counts < F):
        splitter = KFold(n_splits=F, shuffle=True, random_state=seed)
    else:
        splitter = StratifiedKFold(n_splits=F, shuffle=True, random_state=seed)
    assignments = {}
    for fold, (_, test_index) in enumerate(splitter.split(np.zeros((len(bags), 1)), labels)):
        for index in test_index:
            assignments[bags[index].bag_id] = fold
    return FoldSplit(assignments, F, seed)


def _safe(metric, *args):
    try:
        return metric(*args)
    except UndefinedMetricError:
        return float('nan')


def evaluate_predictions(bags, predictions, n_classes):
    """
    accuracy, macro-F1, and AUROC and AUPR of the class probabilities
    (positive class for two classes, one-vs-rest mean otherwise).
    """
    labels = np.array([bag.label for bag in bags])
    preds = np.array([predictions[bag.bag_id][0] for bag in bags])
    probs = np.vstack([predictions[bag.bag_id][1] for bag in bags])
    if n_classes == 2:
        area = _safe(auroc, probs[:, 1], labels == 1)
        precision = _safe(aupr, probs[:, 1], labels == 1)
    else:
        areas = [_safe(auroc, probs[:, c], labels == c) for c in range(n_classes)]
        precisions = [_safe(aupr, probs[:, c], labels == c) for c in range(n_classes)]
        area = float(np.nanmean(areas)) if not np.all(np.isnan(areas)) else float('nan')
        precision = float(np.nanmean(precisions)) if not np.all(np.isnan(precisions)) else float('nan')
    return {
        'accuracy': accuracy(preds, labels),
        'macro_f1': macro_f1(preds, labels, n_classes),
        'auroc': area,
        'aupr': precision,
    }


def evaluate_model(model, bags, threads=None):
    unlabelled = [bag.bag_id for bag in bags if bag.label is None]
    if unlabelled:
        raise DatasetError("Evaluation needs labelled bags", unlabelled)
    bags = sorted(bags, key=lambda bag: bag.bag_id)
    return evaluate_predictions(bags, predict_bags(bags, model, threads), model.n_classes)


def cross_validate(bags, F, hyperparams=None, seed=0, threads=None):
    """
    Train and evaluate on every fold of a `kfold_split`.

    :return: list of per-fold metric dicts with a `fold` key
    """
    rows = []
    for fold, train_bags, test_bags in kfold_split(bags, F, seed).split(sorted(bags, key=lambda bag: bag.bag_id)):
        model = train(train_bags, hyperparams, threads=threads)
        metrics = evaluate_model(model, test_bags, threads)
        log.info("Fold %d: accuracy %.4f", fold, metrics['accuracy'])
        rows.append(dict(metrics, fold=fold))
    return rows


def summarize(rows, keys=('accuracy', 'macro_f1', 'auroc', 'aupr')):
    return {key: float(np.nanmean([row[key] for row in rows])) for key in keys}


def sweep(train_bags, test_bags, name, values, hyperparams=None, threads=None):
    """
    Retrain for every value of one hyperparameter. `eta` sets eta1 and eta2 together.
    """
    rows = []
    for value in values:
        overrides = dict(hyperparams or {})
        if name == 'eta':
            overrides.update(eta1=value, eta2=value)
        else:
            overrides[name] = value
        model = train(train_bags, overrides, threads=threads)
        rows.append(dict(evaluate_model(model, test_bags, threads), **{name: value}))
    return rows


def run_ood_experiment(in_bags, ood_bags, model, measures=MEASURES, threads=None):
    """
    AUROC and AUPR of every measure at telling in-distribution bags
    (positives) from OOD bags, each measure oriented so larger means
    in-distribution.

    :return: list of dicts with keys measure, auroc, aupr
    """
    unknown = set(measures) - set(MEASURES)
    if unknown:
        raise ConfigurationError("Unknown OOD measures %s" % sorted(unknown))
    scored = [map_bags(lambda bag: bag_measures(bag, model), bags, threads) for bags in (in_bags, ood_bags)]
    labels = np.concatenate((np.ones(len(scored[0])), np.zeros(len(scored[1]))))
    rows = []
    for measure in measures:
        sign = 1.0 if ORIENTATION[measure] else -1.0
        values = [
            sign * score.value
            for results in scored for measure_scores in results.values()
            for score in measure_scores if score.measure == measure
        ]
        rows.append({'measure': measure, 'auroc': auroc(values, labels), 'aupr': aupr(values, labels)})
    return rows


def localization_auroc(reports, instance_labels):
    """
    Instance-level AUROC of patch scores against known instance labels.
    """
    scores = np.concatenate([report.scores for report in reports])
    labels = np.concatenate([instance_labels[report.bag_id] for report in reports])
    return auroc(scores, labels)


def write_table(rows, header, fp):
    writer = csv.writer(fp, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([('%.6f' % row[key]) if isinstance(row[key], float) else row[key] for key in header])
