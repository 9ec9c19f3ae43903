"""
On-disk formats.

Feature file (``.fbag``), all integers little-endian::

    magic      4 bytes  b'FBAG'
    version    u32      1
    n          u32      instance count
    dim        u32      feature dimension
    features   n * dim  f32, row-major
    [coords]   u8 flag (0 or 1), then n (row, col) pairs of u32 when the flag is 1

A file that ends right after the features carries no coordinates.

Label table: UTF-8 text, one ``bag_id<TAB>label_index`` record per line,
blank lines and lines starting with ``#`` ignored.

Model container (``.cdpm``)::

    magic      4 bytes  b'CDPM'
    version    u32      1
    count      u32      number of sections
    table      count *  (name: 16 bytes ASCII, NUL padded; offset: u64; length: u64)
    payloads   sections at their offsets, each a little-endian f64 array,
               except the ``config`` section which is UTF-8 JSON

Offsets are absolute. Sections written by this module:

    config          hyperparameters, class count, shapes of the arrays below
    class_map       K values
    sticks          (3, K): gamma1, gamma2, and eta repeated
    log_phi         (n, K) slide-level log-responsibilities
    labels          n centroid labels
    prior           m (p), kappa, V Cholesky factor (p * p)
    encoders        K raveled component networks, back to back
    projection      (d, p) projection matrix, present only when used
    head_centroids  (n, p) training centroids of the MLP head, present only with one
    head_labels     n class labels of those centroids
"""
import json
import logging
import os
import struct
from collections import namedtuple

import numpy as np

from dirichlet.distributions import NIWParams
from dirichlet.encoder import EncoderParams
from dirichlet.errors import DirichletError
from dirichlet.mixture import DPMixtureState
from dirichlet.special_math import SpdMatrix
from dirichlet.stick_breaking import StickPosterior
from mil.errors import DatasetError, FormatError, IncompatibleVersionError, MilError
from mil.heads import MlpHead
from mil.pipeline import Bag, PatchConfig, TrainedModel, fit_config

log = logging.getLogger(__name__)

FEATURE_MAGIC = b'FBAG'
FEATURE_VERSION = 1
FEATURE_HEADER = struct.Struct('<4sIII')

MODEL_MAGIC = b'CDPM'
MODEL_VERSION = TrainedModel.FORMAT_VERSION
MODEL_HEADER = struct.Struct('<4sII')
SECTION_ENTRY = struct.Struct('<16sQQ')

FEATURE_SUFFIX = '.fbag'


FeatureFile = namedtuple('FeatureFile', ('features', 'coords', 'coord_block'))


def write_features(path, features, coords=None, coord_block=True):
    """
    Without coordinates the file ends in a zero flag byte, or right after the
    features when `coord_block` is False.
    """
    features = np.asarray(features)
    n, dim = features.shape
    with open(path, 'wb') as fp:
        fp.write(FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, n, dim))
        fp.write(np.ascontiguousarray(features, dtype='<f4').tobytes())
        if coords is not None:
            fp.write(b'\x01')
            fp.write(np.ascontiguousarray(coords, dtype='<u4').tobytes())
        elif coord_block:
            fp.write(b'\x00')


def read_feature_file(path):
    """
    :return: FeatureFile with features as float64 (n, dim), coords as int64
             (n, 2) or None, and whether the file had a coordinate block
    :raises FormatError: bad magic, size mismatch or non-finite values
    """
    with open(path, 'rb') as fp:
        data = fp.read()
    if len(data) < FEATURE_HEADER.size:
        raise FormatError("Truncated feature header", path, FEATURE_HEADER.size)
    magic, version, n, dim = FEATURE_HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise FormatError("Not a feature file, magic %r" % magic, path)
    if version != FEATURE_VERSION:
        raise IncompatibleVersionError(path, version, FEATURE_VERSION)
    end = FEATURE_HEADER.size + 4 * n * dim
    if len(data) < end:
        raise FormatError("Truncated feature payload", path, end)
    features = np.frombuffer(data, dtype='<f4', count=n * dim, offset=FEATURE_HEADER.size)
    features = features.reshape(n, dim).astype(float)
    if not np.all(np.isfinite(features)):
        raise FormatError("Non-finite feature values", path)

    coords = None
    if len(data) > end:
        flag = data[end]
        expected = end + 1 + (8 * n if flag else 0)
        if flag not in (0, 1) or len(data) != expected:
            raise FormatError("Malformed coordinate block", path, expected)
        if flag:
            coords = np.frombuffer(data, dtype='<u4', count=2 * n, offset=end + 1).reshape(n, 2).astype(np.int64)
    return FeatureFile(features, coords, len(data) > end)


def read_features(path):
    """
    :return: (features as float64 (n, dim), coords as int64 (n, 2) or None)
    """
    feature_file = read_feature_file(path)
    return feature_file.features, feature_file.coords


def read_label_table(path):
    """
    :return: dict of bag_id -> label, in file order
    """
    labels = {}
    try:
        with open(path, encoding='utf-8') as fp:
            lines = fp.read().splitlines()
    except OSError as exc:
        raise FormatError("Cannot read label table (%s)" % exc.strerror, path)
    for number, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith('#'):
            continue
        fields = line.rstrip('\r').split('\t')
        if len(fields) != 2 or not fields[0]:
            raise FormatError("Line %d is not bag_id<TAB>label" % number, path)
        bag_id, label = fields
        try:
            label = int(label)
        except ValueError:
            label = -1
        if label < 0:
            raise FormatError("Line %d has label %r, expected a nonnegative integer" % (number, fields[1]), path)
        if bag_id in labels:
            raise FormatError("Duplicate bag_id %r on line %d" % (bag_id, number), path)
        labels[bag_id] = label
    return labels


def write_label_table(path, labels):
    with open(path, 'w', encoding='utf-8', newline='\n') as fp:
        fp.write('# bag_id\tlabel\n')
        for bag_id, label in labels.items():
            fp.write('%s\t%d\n' % (bag_id, label))


def load_dataset(directory, labels_path=None, require_labels=True):
    """
    Load the bags of a dataset directory.

    With a label table, exactly its bag_ids are loaded and labelled;
    otherwise every ``.fbag`` file in the directory is loaded unlabelled.
    `labels_path` defaults to ``labels.tsv`` in the directory; when that file
    does not exist and `require_labels` is False the bags come back unlabelled.

    :return: list of Bags sorted by bag_id
    :raises DatasetError: missing files or inconsistent dimensions
    """
    if labels_path is None:
        labels_path = os.path.join(directory, 'labels.tsv')
        if not require_labels and not os.path.exists(labels_path):
            labels_path = None
    if labels_path is not None:
        labels = read_label_table(labels_path)
    else:
        try:
            names = sorted(os.listdir(directory))
        except OSError as exc:
            raise DatasetError("Cannot list %s (%s)" % (directory, exc.strerror))
        labels = {name[:-len(FEATURE_SUFFIX)]: None for name in names if name.endswith(FEATURE_SUFFIX)}

    missing = [bag_id for bag_id in labels if not os.path.isfile(os.path.join(directory, bag_id + FEATURE_SUFFIX))]
    if missing:
        raise DatasetError("Feature files missing in %s" % directory, missing)
    if not labels:
        raise DatasetError("No bags found in %s" % directory)

    bags = []
    for bag_id in sorted(labels):
        features, coords = read_features(os.path.join(directory, bag_id + FEATURE_SUFFIX))
        if features.shape[0] == 0:
            raise DatasetError("Bag has no instances", [bag_id])
        bags.append(Bag(bag_id, features, labels[bag_id], coords))
    dims = {bag.dim for bag in bags}
    if len(dims) > 1:
        raise DatasetError("Bags disagree on the feature dimension %s" % sorted(dims),
                           [bag.bag_id for bag in bags if bag.dim != bags[0].dim])
    log.info("Loaded %d bags of dimension %d from %s", len(bags), bags[0].dim, directory)
    return bags


def write_dataset(directory, bags):
    os.makedirs(directory, exist_ok=True)
    for bag in bags:
        write_features(os.path.join(directory, bag.bag_id + FEATURE_SUFFIX), bag.features, bag.coords)
    write_label_table(os.path.join(directory, 'labels.tsv'), {
        bag.bag_id: bag.label for bag in sorted(bags, key=lambda bag: bag.bag_id) if bag.label is not None
    })


def _model_sections(model):
    state = model.state
    K, dim = state.T, state.dim
    hidden = state.encoders[0].hidden
    config = {
        'hyperparams': model.hyperparams,
        'n_classes': model.n_classes,
        'K': K,
        'n': state.n,
        'dim': dim,
        'hidden': hidden,
        'eta': state.eta,
        'converged': state.converged,
        'n_iter': state.n_iter,
        'patch': {'T': model.patch_config.T, 'eta': model.patch_config.eta,
                  'pooling': model.patch_config.pooling, 'seed': model.patch_config.seed},
        'projection': None if model.projection is None else list(model.projection.shape),
        'head': None if model.head is None else list(model.head.centroids.shape),
        'history': model.history,
    }
    sections = [
        ('config', json.dumps(config, sort_keys=True).encode('utf-8')),
        ('class_map', model.class_map),
        ('sticks', np.vstack((state.sticks.gamma1, state.sticks.gamma2, np.full(K, state.sticks.eta)))),
        ('log_phi', state.log_phi),
        ('labels', state.labels if state.labels is not None else np.zeros(0)),
        ('prior', np.concatenate((state.prior.m, [state.prior.kappa], state.prior.V.chol.ravel()))),
        ('encoders', np.concatenate([e.ravel() for e in state.encoders])),
    ]
    if model.projection is not None:
        sections.append(('projection', model.projection))
    if model.head is not None:
        sections.append(('head_centroids', model.head.centroids))
        sections.append(('head_labels', model.head.labels))
    return sections


def save_model(model, path):
    sections = [
        (name, payload if isinstance(payload, bytes) else np.ascontiguousarray(payload, dtype='<f8').tobytes())
        for name, payload in _model_sections(model)
    ]
    offset = MODEL_HEADER.size + SECTION_ENTRY.size * len(sections)
    table = []
    for name, payload in sections:
        table.append(SECTION_ENTRY.pack(name.encode('ascii'), offset, len(payload)))
        offset += len(payload)
    with open(path, 'wb') as fp:
        fp.write(MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, len(sections)))
        fp.writelines(table)
        for _, payload in sections:
            fp.write(payload)
    log.info("Saved model with %d sections to %s", len(sections), path)


def _read_sections(path):
    with open(path, 'rb') as fp:
        data = fp.read()
    if len(data) < MODEL_HEADER.size:
        raise FormatError("Truncated model header", path, MODEL_HEADER.size)
    magic, version, count = MODEL_HEADER.unpack_from(data)
    if magic != MODEL_MAGIC:
        raise FormatError("Not a model file, magic %r" % magic, path)
    if version != MODEL_VERSION:
        raise IncompatibleVersionError(path, version, MODEL_VERSION)
    table_end = MODEL_HEADER.size + SECTION_ENTRY.size * count
    if len(data) < table_end:
        raise FormatError("Truncated section table", path, table_end)
    sections = {}
    for index in range(count):
        name, offset, length = SECTION_ENTRY.unpack_from(data, MODEL_HEADER.size + index * SECTION_ENTRY.size)
        name = name.rstrip(b'\x00').decode('ascii')
        if offset + length > len(data):
            raise FormatError("Section %s runs past the end of the file" % name, path, offset + length)
        sections[name] = data[offset:offset + length]
    return sections


def _array(sections, name, path, shape=None):
    if name not in sections:
        raise FormatError("Missing section %s" % name, path)
    payload = sections[name]
    if len(payload) % 8:
        raise FormatError("Section %s is not a whole number of f64 values" % name, path)
    values = np.frombuffer(payload, dtype='<f8').astype(float)
    if shape is not None:
        if values.size != int(np.prod(shape)):
            raise FormatError("Section %s holds %d values, expected shape %s" % (name, values.size, shape), path)
        values = values.reshape(shape)
    return values


CONFIG_KEYS = ('K', 'n', 'dim', 'hidden', 'eta', 'converged', 'n_iter', 'n_classes', 'hyperparams', 'patch')
PATCH_KEYS = ('T', 'eta', 'pooling', 'seed')


def _read_config(sections, path):
    if 'config' not in sections:
        raise FormatError("Missing section config", path)
    try:
        config = json.loads(sections['config'].decode('utf-8'))
        missing = [key for key in CONFIG_KEYS if key not in config]
        missing += ['patch.%s' % key for key in PATCH_KEYS if key not in config.get('patch', {})]
    except (UnicodeDecodeError, ValueError, TypeError, AttributeError) as exc:
        raise FormatError("Unreadable config section (%s)" % exc, path)
    if missing:
        raise FormatError("Config section lacks %s" % ', '.join(missing), path)
    return config


def _read_state(sections, config, path):
    K, n, dim, hidden = config['K'], config['n'], config['dim'], config['hidden']
    size = EncoderParams.zeros(dim, hidden).ravel().size
    sticks = _array(sections, 'sticks', path, (3, K))
    prior = _array(sections, 'prior', path, (dim + 1 + dim * dim,))
    flat = _array(sections, 'encoders', path, (K * size,))
    log_phi = _array(sections, 'log_phi', path, (n, K))
    labels = _array(sections, 'labels', path)
    if labels.size not in (0, n):
        raise FormatError("Section labels holds %d values for %d rows" % (labels.size, n), path)
    state = DPMixtureState(
        log_phi,
        StickPosterior(sticks[0], sticks[1], sticks[2, 0]),
        [EncoderParams.unravel(flat[k * size:(k + 1) * size], dim, hidden) for k in range(K)],
        NIWParams(prior[:dim], prior[dim], SpdMatrix(prior[dim + 1:].reshape(dim, dim))),
        config['eta'],
        labels=labels.astype(int) if labels.size else None,
    )
    state.converged = bool(config['converged'])
    state.n_iter = int(config['n_iter'])
    return state


def _read_head(sections, config, path):
    if config.get('head') is None:
        return None
    n, dim = config['head']
    centroids = _array(sections, 'head_centroids', path, (n, dim))
    labels = _array(sections, 'head_labels', path, (n,)).astype(int)
    return MlpHead(centroids, labels, config['n_classes'], config['hyperparams'].get('seed', 0))


def load_model(path):
    """
    :rtype: TrainedModel
    :raises FormatError: bad magic, missing config keys or malformed sections
    :raises IncompatibleVersionError: container written by another format version
    """
    sections = _read_sections(path)
    config = _read_config(sections, path)
    try:
        state = _read_state(sections, config, path)
        hp = config['hyperparams']
        patch = config['patch']
        patch_config = PatchConfig(T=patch['T'], eta=patch['eta'], pooling=patch['pooling'], fit=fit_config(hp),
                                   seed=patch['seed'])
        projection = None
        if config.get('projection') is not None:
            projection = _array(sections, 'projection', path, tuple(config['projection']))
        class_map = _array(sections, 'class_map', path, (config['K'],)).astype(int)
        return TrainedModel(state, patch_config, class_map, config['n_classes'], hp, projection=projection,
                            history=config.get('history'), head=_read_head(sections, config, path))
    except FormatError:
        raise
    except (DirichletError, MilError, KeyError, TypeError, ValueError) as exc:
        raise FormatError("Inconsistent model (%s)" % exc, path)
