import numpy as np
import pytest

from ecm_evidence.basq_engine import (
    BasqConfig,
    EvidenceEstimate,
    RunHistory,
    _plateaued,
    evidence,
    log_evidence_moments,
    posterior_samples,
    run,
    run_with_likelihood,
)
from ecm_evidence.bayes_core import EcmLogLikelihood, default_prior
from ecm_evidence.criteria import map_estimate
from ecm_evidence.dataset import generate_preset
from ecm_evidence.errors import ConfigError
from ecm_evidence.models import GaussianPrior
from ecm_evidence.oracle import GaussianPseudoLikelihood, importance_log_evidence
from ecm_evidence.problems import ProblemCode
from ecm_evidence.recombination import QuadratureNodes
from ecm_evidence.warp_stack import moments_f


def test_log_evidence_moments():
    lem, lev = log_evidence_moments(
        np.array([0.5, 0.5]), np.array([1.0, 3.0]), np.array([[1.0, 0.0], [0.0, 1.0]]), beta=2.0
    )
    assert lem == pytest.approx(np.log(2.0) + 2.0)
    assert lev == pytest.approx(np.log(0.5) + 4.0)


def test_non_positive_sums_become_minus_infinity():
    lem, lev = log_evidence_moments(
        np.array([0.5, 0.5]), np.array([1.0, -3.0]), np.array([[1.0, -2.0], [-2.0, 1.0]]), beta=0.0
    )
    assert lem == -np.inf
    assert lev == -np.inf


def test_single_unit_node_has_zero_log_evidence():
    lem, _ = log_evidence_moments(np.ones(1), np.ones(1), np.ones((1, 1)), beta=0.0)
    assert lem == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("factor", [0.01, 3.0, 1e6])
def test_scaling_every_mean_shifts_lem_by_its_log(factor):
    weights = np.array([0.2, 0.5, 0.3])
    mu_f = np.array([0.4, 1.3, 2.2])
    cov_f = np.diag([0.1, 0.2, 0.3])
    base, _ = log_evidence_moments(weights, mu_f, cov_f, beta=1.5)
    scaled, _ = log_evidence_moments(weights, factor * mu_f, cov_f, beta=1.5)
    assert scaled - base == pytest.approx(np.log(factor))


def test_evidence_sums_node_means_in_the_log_domain(surrogate_2d):
    points = np.array([[0.0, 0.0], [0.5, -0.3], [-1.0, 1.0]])
    nodes = QuadratureNodes(points, np.array([0.5, 0.3, 0.2]), np.arange(3))
    estimate = evidence(surrogate_2d, nodes, n_evals=30)
    mu_f, cov_f = moments_f(surrogate_2d, points)
    beta = surrogate_2d.consts.beta
    assert estimate.lem == pytest.approx(np.log(nodes.weights @ mu_f) + beta)
    assert estimate.lev == pytest.approx(np.log(nodes.weights @ cov_f @ nodes.weights) + 2.0 * beta)
    assert estimate.beta == beta


def test_plateau_detection():
    assert not _plateaued(np.array([1.0, 1.1]), tol=0.5, window=3)
    assert _plateaued(np.array([5.0, 1.0, 1.1, 1.2, 1.3]), tol=0.5, window=3)
    assert not _plateaued(np.array([1.0, 1.1, 2.0, 2.1]), tol=0.5, window=3)
    assert not _plateaued(np.array([-np.inf, -np.inf, -np.inf, -np.inf]), tol=0.5, window=3)


def test_history_requires_increasing_evaluation_counts():
    history = RunHistory()
    history.append(EvidenceEstimate(lem=1.0, lev=0.0, lev_standardized=0.0, n_evals=10))
    with pytest.raises(ValueError):
        history.append(EvidenceEstimate(lem=1.0, lev=0.0, lev_standardized=0.0, n_evals=10))
    assert list(history.rows()[0]) == ["iter", "n_evals", "wall_time_s", "lem", "lev"]


@pytest.mark.parametrize(
    "kwargs",
    [{"batch_size": 2}, {"conv_tol": 0.0}, {"n_super": 5, "batch_size": 10}, {"uncertainty_ratio": 1.5}, {"form": "x"}],
)
def test_invalid_configs(kwargs):
    with pytest.raises(ConfigError):
        BasqConfig(**kwargs)


def test_prior_dimension_must_match_model_order(easy_data, small_config):
    with pytest.raises(ConfigError):
        run(easy_data, default_prior(1), 2, small_config)


def test_conjugate_model_runs_and_records_history(prior_2d, pseudo_likelihood, small_config):
    result = run_with_likelihood(pseudo_likelihood, prior_2d, small_config)
    n_evals = [snap.n_evals for snap in result.history]
    assert n_evals[0] == small_config.batch_size
    assert all(b > a for a, b in zip(n_evals, n_evals[1:]))
    assert result.inputs.shape == (n_evals[-1], 2)
    assert result.nodes.size <= small_config.batch_size
    assert np.all(result.nodes.weights > 0)
    assert np.isfinite(result.estimate.lem)
    assert result.estimate.lem == pytest.approx(pseudo_likelihood.log_evidence(prior_2d), abs=0.5)
    assert result.estimate.lev_standardized == pytest.approx(result.estimate.lev - 2.0 * result.estimate.beta)
    if not result.converged:
        assert ProblemCode.NOT_CONVERGED in [problem.code for problem in result.problems]


def test_runs_are_reproducible(prior_2d, pseudo_likelihood, small_config):
    first = run_with_likelihood(pseudo_likelihood, prior_2d, small_config)
    second = run_with_likelihood(pseudo_likelihood, prior_2d, small_config)
    assert first.estimate.lem == second.estimate.lem
    assert np.array_equal(first.inputs, second.inputs)


def test_posterior_samples_concentrate_near_the_posterior(prior_2d, pseudo_likelihood, small_config):
    result = run_with_likelihood(pseudo_likelihood, prior_2d, small_config)
    samples = posterior_samples(result.surrogate, prior_2d, 4000, seed=0, proposal=result.proposal)
    assert samples.weights.sum() == pytest.approx(1.0)
    mean, _ = pseudo_likelihood.posterior(prior_2d)
    assert samples.weights @ samples.points == pytest.approx(mean, abs=0.25)


def test_ecm_run_on_a_small_dataset(easy_data):
    config = BasqConfig(batch_size=10, max_iters=1, n_super=800, gp_restarts=1, seed=2)
    result = run(easy_data, default_prior(1), 1, config)
    assert len(result.history) >= 1
    assert result.inputs.shape[1] == 4
    assert result.estimate.n_evals == result.log_liks.size


@pytest.mark.slow
def test_conjugate_log_evidence_is_recovered():
    prior = GaussianPrior(mean=np.zeros(2), cov=np.eye(2))
    log_lik = GaussianPseudoLikelihood(observation=np.array([0.5, -0.3]), cov=0.5 * np.eye(2))
    exact = log_lik.log_evidence(prior)
    for seed in range(5):
        config = BasqConfig(batch_size=30, max_iters=10, n_super=5000, seed=seed)
        result = run_with_likelihood(log_lik, prior, config)
        assert result.estimate.lem == pytest.approx(exact, abs=0.1)


@pytest.mark.slow
def test_one_pair_evidence_agrees_with_the_importance_oracle():
    data = generate_preset("easy", seed=0, m=100)
    prior = default_prior(1)
    result = run(data, prior, 1, BasqConfig(seed=0))
    _, start = map_estimate(result.inputs, data, prior, 1, log_liks=result.log_liks)
    oracle = importance_log_evidence(
        EcmLogLikelihood(data, 1), prior, n_samples=1_000_000, seed=0, center=start.vector, workers=4
    )
    assert result.estimate.lem == pytest.approx(oracle.log_evidence, abs=1.0)
