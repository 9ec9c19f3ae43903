import pytest

from mil.pipeline import train
from mil.synthetic import SynthConfig, generate_synthetic, write_synthetic

from .utils import QUICK_HYPERPARAMS


@pytest.fixture(scope='session')
def small_dataset():
    """
    40 bags of 12-20 four-dimensional instances, 30 for training and 10 for testing.
    """
    config = SynthConfig(n_bags=40, instances_per_bag=(12, 20), dim=4, test_fraction=0.25, seed=3)
    return generate_synthetic(config)


@pytest.fixture(scope='session')
def small_model(small_dataset):
    return train(small_dataset.train, QUICK_HYPERPARAMS)


@pytest.fixture(scope='session')
def mlp_model(small_dataset):
    return train(small_dataset.train, dict(QUICK_HYPERPARAMS, classifier='mlp'))


@pytest.fixture
def quick_hyperparams():
    return dict(QUICK_HYPERPARAMS)


@pytest.fixture
def dataset_dir(tmp_path, small_dataset):
    write_synthetic(str(tmp_path), small_dataset)
    return tmp_path
