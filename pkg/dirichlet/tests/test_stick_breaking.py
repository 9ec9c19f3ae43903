import numpy as np
import pytest
from scipy import special

from dirichlet.errors import DomainError, NormalizationError, ShapeError
from dirichlet.stick_breaking import (
    StickPosterior, expected_log_beta, expected_log_pi, expected_weights, kl_sticks, prior_sticks, stick_weights,
    update_gamma
)


def test_stick_weights():
    assert stick_weights([0.5, 0.5]).tolist() == [0.5, 0.25, 0.25]
    assert stick_weights([]).tolist() == [1.0]
    weights = stick_weights(np.random.default_rng(1).uniform(0.01, 0.99, 9))
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(weights > 0)


@pytest.mark.parametrize('beta', [[0.0, 0.5], [0.5, 1.0], [1.2]])
def test_stick_weights_domain(beta):
    with pytest.raises(DomainError):
        stick_weights(beta)


def test_update_gamma_tail_sums():
    phi = np.array([
        [1.0, 0.0, 0.0],
        [0.2, 0.3, 0.5],
        [0.0, 0.0, 1.0],
    ])
    sp = update_gamma(phi, eta=2.0)
    assert np.allclose(sp.gamma1, [2.2, 1.3, 2.5])
    assert np.allclose(sp.gamma2, [2.0 + 1.8, 2.0 + 1.5, 2.0])
    assert sp.eta == 2.0


def test_update_gamma_without_rows_is_prior():
    sp = update_gamma(np.zeros((0, 4)), eta=0.5)
    assert np.array_equal(sp.gamma1, np.ones(4))
    assert np.array_equal(sp.gamma2, np.full(4, 0.5))


def test_update_gamma_validation():
    with pytest.raises(NormalizationError):
        update_gamma(np.array([[0.5, 0.4]]), 1.0)
    with pytest.raises(NormalizationError):
        update_gamma(np.array([[1.5, -0.5]]), 1.0)
    with pytest.raises(ShapeError):
        update_gamma(np.ones(3) / 3, 1.0)


def test_stick_posterior_validation():
    with pytest.raises(ShapeError):
        StickPosterior([1.0, 2.0], [1.0], 1.0)
    with pytest.raises(DomainError):
        StickPosterior([1.0, 0.0], [1.0, 1.0], 1.0)
    with pytest.raises(DomainError):
        StickPosterior([1.0], [1.0], 0.0)


def test_expected_log_beta():
    sp = StickPosterior([2.0, 3.0], [5.0, 1.0], 1.0)
    log_beta, log_rest = expected_log_beta(sp)
    assert np.allclose(log_beta, special.digamma([2.0, 3.0]) - special.digamma([7.0, 4.0]))
    assert np.allclose(log_rest, special.digamma([5.0, 1.0]) - special.digamma([7.0, 4.0]))


def test_expected_log_pi_cumulates_remaining_sticks():
    sp = StickPosterior([2.0, 3.0, 4.0], [5.0, 1.0, 2.0], 1.0)
    log_beta, log_rest = expected_log_beta(sp)
    expected = [log_beta[0], log_rest[0] + log_beta[1], log_rest[0] + log_rest[1]]
    assert np.allclose(expected_log_pi(sp), expected)


def test_single_stick_takes_everything():
    sp = prior_sticks(1, 1.0)
    assert expected_log_pi(sp).tolist() == [0.0]
    assert expected_weights(sp).tolist() == [1.0]
    assert kl_sticks(sp) == 0.0


def test_expected_weights_sum_to_one():
    rng = np.random.default_rng(3)
    sp = StickPosterior(rng.uniform(0.5, 20, 10), rng.uniform(0.5, 20, 10), 1.0)
    weights = expected_weights(sp)
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    # Jensen: exp E[ln π] never exceeds E[π]
    assert np.all(np.exp(expected_log_pi(sp)) <= weights + 1e-12)


def test_kl_sticks():
    assert kl_sticks(prior_sticks(5, 2.0)) == pytest.approx(0.0, abs=1e-12)
    sp = update_gamma(np.eye(4)[[0, 0, 1, 3]], eta=1.0)
    assert kl_sticks(sp) > 0.0


def test_richer_gets_richer():
    # more mass on the first stick raises its expected log weight relative to the second
    balanced = update_gamma(np.eye(2)[[0, 1, 0, 1]], eta=1.0)
    skewed = update_gamma(np.eye(2)[[0, 0, 0, 1]], eta=1.0)
    diff_balanced = np.diff(expected_log_pi(balanced))[0]
    diff_skewed = np.diff(expected_log_pi(skewed))[0]
    assert diff_skewed < diff_balanced


def test_stick_weights_of_four_components():
    assert stick_weights([0.2, 0.4, 0.6]) == pytest.approx([0.2, 0.32, 0.288, 0.192], abs=1e-12)


def _sampled_log_pi(sp, rng, size=200000):
    beta = rng.beta(sp.gamma1[:-1], sp.gamma2[:-1], size=(size, sp.T - 1))
    log_beta = np.column_stack((np.log(beta), np.zeros(size)))
    log_rest = np.column_stack((np.zeros(size), np.cumsum(np.log1p(-beta), axis=1)))
    return log_beta + log_rest


def test_expected_log_pi_matches_sampling():
    rng = np.random.default_rng(17)
    sp = StickPosterior(rng.uniform(1.0, 5.0, 5), rng.uniform(1.0, 5.0, 5), 1.0)
    sampled = _sampled_log_pi(sp, rng)
    assert expected_log_pi(sp) == pytest.approx(sampled.mean(axis=0), abs=0.03)
    assert expected_weights(sp) == pytest.approx(np.exp(sampled).mean(axis=0), abs=0.005)


def test_sampled_weights_obey_jensen():
    rng = np.random.default_rng(18)
    sp = StickPosterior(rng.uniform(0.5, 5.0, 5), rng.uniform(0.5, 5.0, 5), 1.0)
    sampled = _sampled_log_pi(sp, rng)
    assert np.all(np.log(np.exp(sampled).mean(axis=0)) >= sampled.mean(axis=0))
    assert np.all(np.log(np.exp(sampled).mean(axis=0)) >= expected_log_pi(sp) - 0.03)


def test_update_gamma_ignores_row_order():
    rng = np.random.default_rng(19)
    phi = rng.dirichlet(np.ones(6), size=40)
    sp = update_gamma(phi, 1.5)
    shuffled = update_gamma(phi[rng.permutation(40)], 1.5)
    assert np.allclose(sp.gamma1, shuffled.gamma1)
    assert np.allclose(sp.gamma2, shuffled.gamma2)
