import logging

import numpy as np
import pytest
from django.conf import settings

from dirichlet.errors import ShapeError
from dirichlet.mixture import FitConfig
from mil.errors import ConfigurationError, DatasetError, ModelStateError
from mil.evaluation import evaluate_model, sweep
from mil.pipeline import (
    Bag, PatchConfig, TrainedModel, aggregate_bag, aggregate_bags, bag_probabilities, canonical_order, content_seed,
    fit_projection, predict_bag, train
)
from mil.synthetic import SynthConfig, generate_synthetic

from .utils import QUICK_HYPERPARAMS, symmetric_model

TEST_PERFORMANCE = bool(getattr(settings, "TEST_PERFORMANCE", False))


def test_bag_validation():
    with pytest.raises(DatasetError):
        Bag('empty', np.zeros((0, 2)))
    with pytest.raises(DatasetError):
        Bag('nan', [[np.nan, 1.0]])
    with pytest.raises(DatasetError):
        Bag('coords', np.ones((2, 2)), coords=[[0, 0]])
    bag = Bag('ok', [[1.0, 2.0]], label=1)
    assert (bag.n, bag.dim, bag.label) == (1, 2, 1)


def test_identical_instances_give_one_centroid():
    bag = Bag('same', np.tile([3.0, -1.0, 7.0], (25, 1)))
    centroid_set = aggregate_bag(bag, PatchConfig(T=5))
    assert centroid_set.M == 1
    assert np.allclose(centroid_set.centroids[0], [3.0, -1.0, 7.0])
    assert np.all(centroid_set.assignments == 0)


def test_single_instance_bag():
    centroid_set = aggregate_bag(Bag('one', [[4.0, 2.0]]), PatchConfig(T=4))
    assert centroid_set.M == 1
    assert np.array_equal(centroid_set.centroids[0], [4.0, 2.0])


def test_two_separated_gaussians_give_two_centroids():
    rng = np.random.default_rng(21)
    means = np.array([[10.0, 10.0], [20.0, 10.0]])
    X = means[np.repeat([0, 1], 100)] + rng.standard_normal((200, 2))
    centroid_set = aggregate_bag(Bag('two', X), PatchConfig(T=10))
    assert centroid_set.M == 2
    found = centroid_set.centroids[np.argsort(centroid_set.centroids[:, 0])]
    assert np.all(np.linalg.norm(found - means, axis=1) < 0.5)
    for m in range(2):
        assert np.allclose(X[centroid_set.assignments == m].mean(axis=0), centroid_set.centroids[m])


def test_centroid_count_is_bounded():
    rng = np.random.default_rng(22)
    for n in (1, 3, 8):
        X = rng.uniform(-30, 30, size=(n, 2))
        assert aggregate_bag(Bag('b', X), PatchConfig(T=4)).M <= min(4, n)


def test_aggregation_ignores_instance_order():
    rng = np.random.default_rng(23)
    X = np.vstack((rng.standard_normal((15, 3)) + 8.0, rng.standard_normal((5, 3)) - 8.0))
    config = PatchConfig(T=5)
    first = aggregate_bag(Bag('b', X), config)
    perm = rng.permutation(len(X))
    second = aggregate_bag(Bag('b', X[perm]), config)
    assert np.array_equal(first.centroids, second.centroids)
    assert np.array_equal(first.assignments[perm], second.assignments)


def test_content_seed_depends_on_content_seed_and_epoch():
    X = np.arange(6, dtype=float).reshape(3, 2)
    assert content_seed(X, 0) == content_seed(X.copy(), 0)
    assert content_seed(X, 0) != content_seed(X, 1)
    assert content_seed(X, 0, epoch=0) != content_seed(X, 0, epoch=1)
    assert np.array_equal(canonical_order(X[::-1]), [2, 1, 0])


@pytest.mark.parametrize('pooling', ['mean', 'max', 'kmeans'])
def test_other_poolings(pooling):
    rng = np.random.default_rng(24)
    X = np.vstack((rng.standard_normal((10, 2)) + 10.0, rng.standard_normal((10, 2)) - 10.0))
    centroid_set = aggregate_bag(Bag('b', X), PatchConfig(T=2, pooling=pooling))
    if pooling == 'mean':
        assert np.allclose(centroid_set.centroids, X.mean(axis=0, keepdims=True))
    elif pooling == 'max':
        assert np.allclose(centroid_set.centroids, X.max(axis=0, keepdims=True))
    else:
        assert centroid_set.M == 2
    assert centroid_set.state is None


def test_unknown_pooling():
    with pytest.raises(ConfigurationError):
        PatchConfig(pooling='median')


def test_stalled_patch_fits_give_one_warning(caplog):
    rng = np.random.default_rng(25)
    bags = [Bag('b%d' % i, rng.standard_normal((6, 2)) + 5.0 * i) for i in range(4)]
    config = PatchConfig(T=3, fit=FitConfig(max_iters=1))
    with caplog.at_level(logging.INFO):
        centroid_sets = aggregate_bags(bags, config, threads=1)
    assert not any(centroid_set.converged for centroid_set in centroid_sets.values())
    warnings = [record for record in caplog.records if record.levelno >= logging.WARNING]
    assert len(warnings) == 1
    assert warnings[0].getMessage() == '4 of 4 patch-level fits stopped before converging'


def test_bag_probabilities_average_the_centroid_vectors():
    centroids = np.array([[-1.0, 0.0], [3.0, 0.0]])
    probs = bag_probabilities(centroids, symmetric_model())
    assert probs == pytest.approx([0.49998, 0.50002], abs=1e-5)
    confident = bag_probabilities(centroids, symmetric_model('log'))
    assert confident[1] == pytest.approx(0.99995, abs=1e-5)


def test_default_bag_rule_is_probability():
    model = symmetric_model()
    model.hyperparams = {key: value for key, value in model.hyperparams.items() if key != 'bag_rule'}
    probs = bag_probabilities(np.array([[-1.0, 0.0], [3.0, 0.0]]), model)
    assert probs == pytest.approx([0.49998, 0.50002], abs=1e-5)


@pytest.mark.parametrize('bag_rule', ['log', 'probability'])
def test_symmetric_model_breaks_ties_to_the_lowest_class(bag_rule):
    model = symmetric_model(bag_rule)
    predicted, probs = predict_bag(Bag('middle', [[0.0, 3.0]]), model)
    assert probs.tolist() == [0.5, 0.5]
    assert predicted == 0
    predicted, probs = predict_bag(Bag('left', [[-4.0, 0.0]]), model)
    assert predicted == 0 and probs[0] > 0.99
    predicted, _ = predict_bag(Bag('right', [[4.5, 0.5]]), model)
    assert predicted == 1


def test_prediction_rejects_wrong_dimension():
    with pytest.raises(ShapeError):
        predict_bag(Bag('wide', [[0.0, 1.0, 2.0]]), symmetric_model())


def test_trained_model_validation():
    model = symmetric_model()
    with pytest.raises(ModelStateError):
        TrainedModel(None, model.patch_config, [0, 1], 2, model.hyperparams)
    with pytest.raises(ModelStateError):
        TrainedModel(model.state, model.patch_config, [0, 0], 2, model.hyperparams)


def test_training_preconditions():
    one_class = [Bag('a', [[1.0, 1.0]], 0), Bag('b', [[2.0, 2.0]], 0)]
    with pytest.raises(ConfigurationError):
        train(one_class, QUICK_HYPERPARAMS)
    unlabelled = [Bag('a', [[1.0, 1.0]], 0), Bag('b', [[2.0, 2.0]])]
    with pytest.raises(DatasetError):
        train(unlabelled, QUICK_HYPERPARAMS)
    three = [Bag('a', [[1.0, 1.0]], 0), Bag('b', [[9.0, 9.0]], 1), Bag('c', [[1.0, 9.0]], 2)]
    with pytest.raises(ConfigurationError):
        train(three, dict(QUICK_HYPERPARAMS, K=2))


def test_memorizes_one_instance_per_class():
    bags = [Bag('normal', [[10.0, 10.0]], 0), Bag('tumor', [[20.0, 10.0]], 1)]
    model = train(bags, QUICK_HYPERPARAMS)
    assert [predict_bag(bag, model)[0] for bag in bags] == [0, 1]


def test_extra_components_vote_for_a_class():
    bags = [Bag('normal', [[10.0, 10.0]], 0), Bag('tumor', [[20.0, 10.0]], 1)]
    model = train(bags, dict(QUICK_HYPERPARAMS, K=4))
    assert model.K == 4
    assert set(model.class_map.tolist()) == {0, 1}
    assert model.class_map[:2].tolist() == [0, 1]


def test_small_synthetic_end_to_end(small_model, small_dataset):
    assert small_model.history
    metrics = evaluate_model(small_model, small_dataset.test)
    assert metrics['accuracy'] >= 0.9
    for bag in small_dataset.test:
        _, probs = predict_bag(bag, small_model)
        assert probs.sum() == pytest.approx(1.0)
        assert np.all(probs >= 0)


def test_mlp_classifier_replaces_the_slide_level_vote(mlp_model, small_model, small_dataset):
    assert small_model.head is None
    assert mlp_model.head is not None
    assert mlp_model.hyperparams['classifier'] == 'mlp'
    metrics = evaluate_model(mlp_model, small_dataset.test)
    assert metrics['accuracy'] >= 0.9
    for bag in small_dataset.test:
        _, probs = predict_bag(bag, mlp_model)
        assert probs.shape == (2,)
        assert probs.sum() == pytest.approx(1.0)


def test_classifier_sweep(small_dataset):
    bags = [bag for bag in small_dataset.train if bag.label == 0][:5]
    bags += [bag for bag in small_dataset.train if bag.label == 1][:5]
    rows = sweep(bags, small_dataset.test, 'classifier', ['dp', 'mlp'], dict(QUICK_HYPERPARAMS, epochs=1))
    assert [row['classifier'] for row in rows] == ['dp', 'mlp']
    assert all(0.0 <= row['accuracy'] <= 1.0 for row in rows)



def test_training_bag_copy_is_predicted_as_its_class(small_model, small_dataset):
    normal = next(bag for bag in small_dataset.train if bag.label == 0)
    assert predict_bag(Bag('copy', normal.features), small_model)[0] == 0


def test_prediction_ignores_instance_order(small_model, small_dataset):
    bag = small_dataset.test[0]
    perm = np.random.default_rng(5).permutation(bag.n)
    first = predict_bag(bag, small_model)
    second = predict_bag(Bag(bag.bag_id, bag.features[perm]), small_model)
    assert first[0] == second[0]
    assert np.array_equal(first[1], second[1])


def test_training_is_deterministic(small_dataset):
    hp = dict(QUICK_HYPERPARAMS, epochs=1)
    bags = [bag for bag in small_dataset.train if bag.label == 0][:5]
    bags += [bag for bag in small_dataset.train if bag.label == 1][:5]
    first = train(bags, hp)
    second = train(bags[::-1], hp)
    assert first.history == second.history
    assert np.array_equal(first.state.log_phi, second.state.log_phi)


def test_early_stopping_keeps_the_best_epoch(small_dataset):
    model = train(small_dataset.train, dict(QUICK_HYPERPARAMS, epochs=5, patience=1, cache_aggregation=False))
    accuracies = [row['accuracy'] for row in model.history]
    assert len(accuracies) <= 5
    assert model.history[-1]['accuracy'] <= max(accuracies)


def test_validation_set_drives_early_stopping(small_dataset):
    model = train(small_dataset.train, QUICK_HYPERPARAMS, validation=small_dataset.test)
    assert all(0.0 <= row['accuracy'] <= 1.0 for row in model.history)


def test_random_projection_for_wide_features():
    hp = dict(QUICK_HYPERPARAMS, project_above=4, project_dim=3)
    rng = np.random.default_rng(30)
    assert fit_projection(rng.standard_normal((5, 4)), hp) is None
    projection = fit_projection(rng.standard_normal((5, 6)), hp)
    assert projection.shape == (3, 6)
    bags = [Bag('a', rng.standard_normal((6, 6)), 0), Bag('b', rng.standard_normal((6, 6)) + 20.0, 1)]
    model = train(bags, hp)
    assert model.input_dim == 6 and model.state.dim == 3
    assert predict_bag(bags[1], model)[0] == 1


@pytest.mark.skipif(not TEST_PERFORMANCE, reason="TEST_PERFORMANCE not enabled")
def test_full_size_synthetic_acceptance():
    dataset = generate_synthetic(SynthConfig(seed=7))
    hp = {'seed': 7, 'max_iters': 60, 'cache_aggregation': True}
    metrics = evaluate_model(train(dataset.train, hp), dataset.test)
    assert metrics['accuracy'] >= 0.95
    assert metrics['auroc'] >= 0.98

    rows = sweep(dataset.train, dataset.test, 'eta', [0.1, 1.0, 10.0], hp)
    accuracies = [row['accuracy'] for row in rows]
    assert max(accuracies) - min(accuracies) <= 0.05
