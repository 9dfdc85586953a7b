import numpy as np
import pytest
from scipy import stats

from ecm_evidence.bayes_core import (
    EcmLogLikelihood,
    batch_log_likelihood,
    default_prior,
    log_likelihood,
    log_posterior_unnorm,
    log_prior,
    pointwise_log_likelihood,
    prior_from_dict,
    sample_prior,
)
from ecm_evidence.constants import LIKELIHOOD_SQUARED_ERROR, LOG_LIK_FLOOR
from ecm_evidence.dataset import true_theta
from ecm_evidence.errors import ConfigError
from ecm_evidence.models import EcmParams, GaussianPrior, Theta


def test_true_parameters_beat_perturbed_ones(easy_data):
    theta = true_theta(easy_data)
    vector = theta.to_vector()
    moved = vector.copy()
    moved[1 + 2] += 0.5
    assert log_likelihood(theta, easy_data, 2) > log_likelihood(Theta.from_vector(moved, 2), easy_data, 2)


def test_degenerate_parameters_hit_the_floor(easy_data):
    ecm = EcmParams.from_ratios(0.0, np.array([0.7, 0.6]), np.array([0.0, 1.0]))
    assert log_likelihood(Theta(ecm=ecm, log_sigma2=-5.0), easy_data, 2) == LOG_LIK_FLOOR


def test_pointwise_terms_sum_to_the_likelihood(easy_data):
    theta = true_theta(easy_data)
    for form in ("residual", LIKELIHOOD_SQUARED_ERROR):
        pointwise = pointwise_log_likelihood(theta, easy_data, form)
        assert pointwise.shape == (2 * easy_data.m,)
        assert np.sum(pointwise) == pytest.approx(log_likelihood(theta, easy_data, 2, form))


def test_likelihood_forms_differ(easy_data):
    theta = true_theta(easy_data)
    assert log_likelihood(theta, easy_data, 2) != log_likelihood(theta, easy_data, 2, LIKELIHOOD_SQUARED_ERROR)


def test_unknown_form_is_a_config_error(easy_data):
    with pytest.raises(ConfigError):
        log_likelihood(true_theta(easy_data), easy_data, 2, "absolute")


def test_model_order_must_match(easy_data):
    with pytest.raises(ValueError):
        log_likelihood(true_theta(easy_data), easy_data, 3)


def test_log_prior_matches_scipy():
    prior = GaussianPrior(mean=np.array([0.5, -1.0]), cov=np.array([[2.0, 0.3], [0.3, 1.0]]))
    points = np.array([[0.0, 0.0], [1.0, -2.0], [3.0, 1.0]])
    expected = stats.multivariate_normal(prior.mean, prior.cov).logpdf(points)
    assert log_prior(prior, points) == pytest.approx(expected)
    assert log_prior(prior, points[0]) == pytest.approx(expected[0])


def test_prior_sampling_is_seeded():
    prior = default_prior(2)
    assert np.array_equal(sample_prior(prior, 5, 11), sample_prior(prior, 5, 11))
    draws = sample_prior(prior, 20000, 0)
    assert draws.shape == (20000, 6)
    assert np.std(draws, axis=0) == pytest.approx(np.full(6, 2.0), rel=0.03)


def test_prior_from_dict():
    prior = prior_from_dict({"mean": [0.0] * 4, "cov_diag": [1.0, 2.0, 3.0, 4.0]}, 1)
    assert np.diag(prior.cov) == pytest.approx([1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ConfigError):
        prior_from_dict({"mean": [0.0] * 4, "cov_diag": [1.0] * 4}, 2)
    with pytest.raises(ConfigError):
        prior_from_dict({"mean": [0.0] * 4}, 1)


def test_flat_vector_likelihood_and_parallel_batches(easy_data):
    log_lik = EcmLogLikelihood(easy_data, 2)
    assert log_lik.dim == 6
    points = sample_prior(default_prior(2), 8, 4)
    serial = batch_log_likelihood(log_lik, points)
    assert np.array_equal(serial, batch_log_likelihood(log_lik, points, workers=3))
    assert serial[0] == log_lik(points[0])


def test_unnormalised_posterior(easy_data):
    theta = true_theta(easy_data)
    prior = default_prior(2)
    expected = log_likelihood(theta, easy_data, 2) + log_prior(prior, theta.to_vector())
    assert log_posterior_unnorm(theta, easy_data, prior, 2) == pytest.approx(expected)


def test_pointwise_terms_stay_finite_when_a_ratio_underflows(easy_data):
    theta = Theta.from_vector(np.array([0.0, 7.0, 0.0, -5.0]), 1)
    pointwise = pointwise_log_likelihood(theta, easy_data)
    assert np.all(np.isfinite(pointwise))
    assert np.all(pointwise >= LOG_LIK_FLOOR / (2 * easy_data.m))
    assert np.isfinite(log_likelihood(theta, easy_data, 1))
