"""
Synthetic multiple instance datasets.

Normal instances come from two unit-covariance modes at `separation * e1`
and `separation * e2`. The tumor instances of class c >= 1 come from one
unit-covariance Gaussian: class 1 sits at `separation * (e1 + e2)`, every
further class adds `separation` along its own axis. Every mean is at least
`separation` away from the others and from the origin. Bags of class 0
hold normal instances only; tumor bags replace a random fraction of their
instances with tumor instances of their class.
"""
import logging
import math
import os
from collections import namedtuple

import numpy as np

from mil.errors import ConfigurationError, FormatError
from mil.formats import write_dataset
from mil.pipeline import Bag

log = logging.getLogger(__name__)

SyntheticDataset = namedtuple('SyntheticDataset', ('train', 'test', 'instance_labels'))


class SynthConfig:
    __slots__ = (
        'n_bags', 'instances_per_bag', 'dim', 'n_classes', 'tumor_fraction', 'separation', 'test_fraction', 'seed',
    )

    def __init__(self, n_bags=200, instances_per_bag=(30, 60), dim=8, n_classes=2, tumor_fraction=(0.05, 0.30),
                 separation=8.0, test_fraction=0.2, seed=0):
        low, high = instances_per_bag
        frac_low, frac_high = tumor_fraction
        if n_bags < 1 or low < 1 or high < low:
            raise ConfigurationError("Bag and instance counts must be positive, got %r and %r" % (
                n_bags, instances_per_bag))
        if n_classes < 2:
            raise ConfigurationError("A dataset needs at least two classes")
        if dim < (n_classes + 1 if n_classes > 2 else 2):
            raise ConfigurationError("%d classes need more than %d feature dimensions" % (n_classes, dim))
        if not (0 <= frac_low <= frac_high <= 1):
            raise ConfigurationError("Tumor fraction range %r is not inside [0, 1]" % (tumor_fraction,))
        if not separation > 0:
            raise ConfigurationError("Separation must be positive, got %r" % separation)
        if not 0 <= test_fraction < 1:
            raise ConfigurationError("Test fraction must be in [0, 1), got %r" % test_fraction)
        self.n_bags = int(n_bags)
        self.instances_per_bag = (int(low), int(high))
        self.dim = int(dim)
        self.n_classes = int(n_classes)
        self.tumor_fraction = (float(frac_low), float(frac_high))
        self.separation = float(separation)
        self.test_fraction = float(test_fraction)
        self.seed = int(seed)

    def __repr__(self):
        return '<SynthConfig bags=%d dim=%d classes=%d separation=%g seed=%d>' % (
            self.n_bags, self.dim, self.n_classes, self.separation, self.seed)


def normal_means(config):
    eye = np.eye(config.dim) * config.separation
    return eye[[0, 1]]


def tumor_mean(config, label):
    eye = np.eye(config.dim) * config.separation
    mean = eye[0] + eye[1]
    if label > 1:
        mean = mean + eye[label]
    return mean


def tumor_count(n, fraction):
    if fraction <= 0:
        return 0
    return min(n, max(1, int(round(fraction * n))))


def _grid_coords(n):
    width = int(math.ceil(math.sqrt(n)))
    index = np.arange(n)
    return np.column_stack((index // width, index % width))


def generate_bag(config, bag_id, label, rng):
    """
    :return: (Bag, instance labels with 1 for tumor instances)
    """
    low, high = config.instances_per_bag
    n = int(rng.integers(low, high + 1))
    n_tumor = 0
    if label > 0:
        n_tumor = tumor_count(n, rng.uniform(*config.tumor_fraction))
    modes = normal_means(config)[rng.integers(0, 2, size=n - n_tumor)]
    means = np.vstack((modes, np.tile(tumor_mean(config, label), (n_tumor, 1)))) if n_tumor else modes
    features = means + rng.standard_normal((n, config.dim))
    instance_labels = np.concatenate((np.zeros(n - n_tumor, dtype=int), np.ones(n_tumor, dtype=int)))
    order = rng.permutation(n)
    return Bag(bag_id, features[order], label, _grid_coords(n)), instance_labels[order]


def generate_synthetic(config):
    """
    :rtype: SyntheticDataset
    """
    rng = np.random.default_rng(config.seed)
    width = len(str(config.n_bags))
    bags, instance_labels = [], {}
    for index in range(config.n_bags):
        bag_id = 'bag_%0*d' % (width, index)
        bag, labels = generate_bag(config, bag_id, index % config.n_classes, rng)
        bags.append(bag)
        instance_labels[bag_id] = labels

    order = rng.permutation(config.n_bags)
    n_test = int(round(config.test_fraction * config.n_bags))
    test = sorted((bags[i] for i in order[:n_test]), key=lambda bag: bag.bag_id)
    train = sorted((bags[i] for i in order[n_test:]), key=lambda bag: bag.bag_id)
    log.info("Generated %d training and %d test bags", len(train), len(test))
    return SyntheticDataset(train, test, instance_labels)


def shift_bags(bags, offset):
    """
    Copies of the bags with every feature moved by `offset` (in units of the instance std).
    """
    return [bag.with_features(bag.features + offset) for bag in bags]


def read_instance_labels(path):
    """
    :return: dict of bag_id -> instance labels in instance order
    :raises FormatError: unreadable file or malformed line
    """
    labels = {}
    try:
        with open(path, encoding='utf-8') as fp:
            lines = fp.read().splitlines()
    except OSError as exc:
        raise FormatError("Cannot read instance labels (%s)" % exc.strerror, path)
    for number, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith('#'):
            continue
        fields = line.rstrip('\r').split('\t')
        try:
            bag_id, index, label = fields
            index, label = int(index), int(label)
        except ValueError:
            raise FormatError("Line %d is not bag_id<TAB>instance_index<TAB>label" % number, path)
        if index < 0 or label < 0:
            raise FormatError("Line %d has a negative index or label" % number, path)
        labels.setdefault(bag_id, {})[index] = label
    return {bag_id: np.array([rows[i] for i in sorted(rows)], dtype=int) for bag_id, rows in labels.items()}


def write_instance_labels(path, bags, instance_labels):
    with open(path, 'w', encoding='utf-8', newline='\n') as fp:
        fp.write('# bag_id\tinstance_index\tlabel\n')
        for bag in bags:
            for index, label in enumerate(instance_labels[bag.bag_id]):
                fp.write('%s\t%d\t%d\n' % (bag.bag_id, index, label))


def write_synthetic(directory, dataset):
    """
    Write ``train/`` and ``test/`` dataset directories, each with feature
    files, ``labels.tsv`` and ``instances.tsv``.
    """
    for name, bags in (('train', dataset.train), ('test', dataset.test)):
        path = os.path.join(directory, name)
        write_dataset(path, bags)
        write_instance_labels(os.path.join(path, 'instances.tsv'), bags, dataset.instance_labels)
