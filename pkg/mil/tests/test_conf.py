import os

import pytest

from mil.conf import read_config_file, resolve_hyperparams
from mil.errors import ConfigurationError


def _write(tmp_path, text):
    path = tmp_path / 'run.conf'
    path.write_text(text, encoding='utf-8')
    return str(path)


def test_config_file_values_are_typed(tmp_path):
    path = _write(tmp_path, '# run\nT = 12\neta1=0.5\ncache_aggregation = true\npooling = kmeans\nK = none\n\n')
    assert read_config_file(path) == {
        'T': 12, 'eta1': 0.5, 'cache_aggregation': True, 'pooling': 'kmeans', 'K': None,
    }


def test_reading_a_config_leaves_the_environment_alone(tmp_path):
    before = dict(os.environ)
    read_config_file(_write(tmp_path, 'epochs = 3\n'))
    assert dict(os.environ) == before


def test_precedence(tmp_path, settings):
    settings.CDPMIL_DEFAULTS = dict(settings.CDPMIL_DEFAULTS, T=10, eta1=1.0, epochs=10)
    path = _write(tmp_path, 'T = 12\neta1 = 0.5\n')
    hp = resolve_hyperparams({'T': 20, 'eta1': None}, config_path=path)
    assert hp['T'] == 20
    assert hp['eta1'] == 0.5
    assert hp['epochs'] == 10


@pytest.mark.parametrize('text', ['colour = blue\n', 'T 12\n', 'T = many\n'])
def test_bad_config_files(tmp_path, text):
    with pytest.raises(ConfigurationError):
        read_config_file(_write(tmp_path, text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        read_config_file(str(tmp_path / 'absent.conf'))


@pytest.mark.parametrize('overrides', [
    {'pooling': 'median'},
    {'bag_rule': 'vote'},
    {'classifier': 'svm'},
    {'T': 0},
    {'eta2': 0.0},
    {'folds': 1},
    {'unknown': 1},
])
def test_invalid_hyperparams(overrides):
    with pytest.raises(ConfigurationError):
        resolve_hyperparams(overrides)
