import numpy as np
import pytest
from scipy import stats

from ecm_evidence.bayes_core import log_prior
from ecm_evidence.errors import DegenerateWeights
from ecm_evidence.gp_core import Kernel
from ecm_evidence.problems import ProblemCode
from ecm_evidence.warp_stack import diag_moments, fit_surrogate
from ecm_evidence.recombination import (
    ProposalMixture,
    _systematic_resample,
    build_proposal,
    choose_landmarks,
    nystrom_features,
    prior_mixture,
    recombine,
    supersample,
)


def _check_exactness(weights, features, nodes):
    assert np.all(nodes.weights > 0)
    assert nodes.size <= features.shape[1] + 1
    assert nodes.weights.sum() == pytest.approx(weights.sum(), rel=1e-10)
    target = weights @ features
    reduced = nodes.weights @ features[nodes.indices]
    scale = np.abs(weights) @ np.abs(features)
    assert np.all(np.abs(reduced - target) <= 1e-8 * scale)


def test_recombination_preserves_mass_and_feature_means():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        points = rng.standard_normal((400, 3))
        features = np.column_stack((np.sin(points @ rng.standard_normal((3, 6))), points))
        weights = rng.random(400)
        nodes = recombine(points, weights, features)
        _check_exactness(weights, features, nodes)
        assert np.array_equal(nodes.points, points[nodes.indices])


def test_dependent_features_are_reported():
    rng = np.random.default_rng(0)
    points = rng.standard_normal((200, 2))
    base = rng.standard_normal((200, 3))
    features = np.column_stack((base, base[:, 0] + base[:, 1]))
    weights = rng.random(200)
    problems = []
    nodes = recombine(points, weights, features, problems)
    _check_exactness(weights, features, nodes)
    assert nodes.size <= 4
    assert [problem.code for problem in problems] == [ProblemCode.RANK_DEFICIENT]


def test_no_features_keeps_the_heaviest_point():
    points = np.arange(8.0).reshape(4, 2)
    nodes = recombine(points, np.array([0.1, 0.4, 0.2, 0.3]), np.zeros((4, 0)))
    assert nodes.indices.tolist() == [1]
    assert nodes.weights == pytest.approx([1.0])


def test_few_candidates_are_returned_unchanged():
    points = np.arange(6.0).reshape(3, 2)
    weights = np.array([0.2, 0.0, 0.5])
    nodes = recombine(points, weights, np.ones((3, 4)))
    assert nodes.indices.tolist() == [0, 2]
    assert nodes.weights == pytest.approx([0.2, 0.5])


def test_invalid_weights():
    with pytest.raises(ValueError):
        recombine(np.zeros((2, 1)), np.array([1.0, -1.0]), np.ones((2, 1)))
    with pytest.raises(ValueError):
        recombine(np.zeros((2, 1)), np.zeros(2), np.ones((2, 1)))


def test_mixture_density_matches_scipy():
    mixture = ProposalMixture(
        means=np.array([[0.0, 0.0], [2.0, -1.0]]),
        variances=np.array([[1.0, 0.5], [0.2, 2.0]]),
        weights=np.array([0.3, 0.7]),
    )
    points = np.random.default_rng(0).standard_normal((5, 2))
    expected = np.log(
        0.3 * stats.multivariate_normal([0.0, 0.0], np.diag([1.0, 0.5])).pdf(points)
        + 0.7 * stats.multivariate_normal([2.0, -1.0], np.diag([0.2, 2.0])).pdf(points)
    )
    assert mixture.logpdf(points) == pytest.approx(expected)
    assert mixture.sample(10, np.random.default_rng(1)).shape == (10, 2)


def test_mixture_validation():
    with pytest.raises(ValueError):
        ProposalMixture(means=np.zeros((2, 1)), variances=np.ones((2, 1)), weights=np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        ProposalMixture(means=np.zeros((1, 1)), variances=np.zeros((1, 1)), weights=np.ones(1))


def test_prior_mixture(prior_2d):
    mixture = prior_mixture(prior_2d)
    assert mixture.fallback
    assert mixture.n_components == 1
    assert mixture.logpdf(np.zeros((1, 2)))[0] == pytest.approx(-np.log(2.0 * np.pi))


def test_proposal_components_sit_on_midpoints(surrogate_2d, prior_2d):
    proposal = build_proposal(surrogate_2d, prior_2d, seed=0)
    n = surrogate_2d.inputs.shape[0]
    assert proposal.n_components <= n * (n - 1) // 2
    assert proposal.weights.sum() == pytest.approx(1.0)
    assert not proposal.fallback
    assert proposal.variances[0] == pytest.approx(0.5 * surrogate_2d.base.kernel.lengthscales**2)


def test_supersample_weights(surrogate_2d, prior_2d):
    proposal = build_proposal(surrogate_2d, prior_2d, seed=0)
    candidates = supersample(proposal, surrogate_2d, prior_2d, n_super=20000, seed=1)
    assert candidates.size == 20000
    assert candidates.prior_weights.sum() == pytest.approx(1.0, abs=0.1)
    assert np.isfinite(candidates.log_z_a)
    assert candidates.ess >= 2.0
    assert candidates.resampled.shape == (20000,)
    assert candidates.moments.mu_f.shape == (20000,)


def test_supersample_is_seeded(surrogate_2d, prior_2d):
    proposal = build_proposal(surrogate_2d, prior_2d, seed=0)
    first = supersample(proposal, surrogate_2d, prior_2d, n_super=500, seed=4)
    second = supersample(proposal, surrogate_2d, prior_2d, n_super=500, seed=4)
    assert np.array_equal(first.points, second.points)
    assert np.array_equal(first.resampled, second.resampled)


def test_prior_target_resamples_from_prior(surrogate_2d, prior_2d):
    candidates = supersample(
        prior_mixture(prior_2d), surrogate_2d, prior_2d, n_super=5000, seed=2, uncertainty_ratio=None
    )
    assert candidates.log_target == pytest.approx(candidates.log_prior)
    assert candidates.ess == pytest.approx(5000.0)


def test_degenerate_target_is_reported(surrogate_2d, prior_2d):
    far = ProposalMixture(means=np.array([[1000.0, 1000.0]]), variances=np.ones((1, 2)), weights=np.ones(1))
    with pytest.raises(DegenerateWeights):
        supersample(far, surrogate_2d, prior_2d, n_super=50, seed=0, defensive_weight=0.0)


def test_systematic_resampling_is_proportional():
    weights = np.array([0.1, 0.6, 0.3])
    counts = np.bincount(_systematic_resample(weights, 1000, np.random.default_rng(0)), minlength=3)
    assert counts == pytest.approx([100, 600, 300], abs=1)


def test_landmarks_and_nystrom_features(surrogate_2d, prior_2d):
    proposal = build_proposal(surrogate_2d, prior_2d, seed=0)
    candidates = supersample(proposal, surrogate_2d, prior_2d, n_super=2000, seed=3)
    landmarks = choose_landmarks(candidates, 10, seed=0)
    assert landmarks.size == np.unique(landmarks).size == 10
    features = nystrom_features(surrogate_2d, candidates.points, candidates.points[landmarks], candidates.moments)
    assert features.shape[0] == 2000
    assert 1 <= features.shape[1] <= 10
    assert np.all(np.isfinite(features))


def _fixed_surrogate(inputs, log_liks):
    kernel = Kernel(output_scale=1.0, lengthscales=np.ones(2))
    return fit_surrogate(np.asarray(inputs, dtype=float), np.asarray(log_liks, dtype=float), initial=kernel, fit=False)


def test_recombination_with_more_candidates_than_features():
    rng = np.random.default_rng(7)
    points = rng.standard_normal((2000, 4))
    features = np.column_stack([np.cos(points @ rng.standard_normal(4)) for _ in range(18)])
    weights = rng.random(2000) / 2000
    nodes = recombine(points, weights, features)
    _check_exactness(weights, features, nodes)
    assert nodes.size <= 19


def test_two_points_give_one_midpoint_component(prior_2d):
    surrogate = _fixed_surrogate([[-1.0, 0.0], [1.0, 0.5]], [-1.0, -2.0])
    proposal = build_proposal(surrogate, prior_2d, seed=0)
    assert not proposal.fallback
    assert proposal.n_components == 1
    assert proposal.means == pytest.approx(np.array([[0.0, 0.25]]))
    assert proposal.weights == pytest.approx([1.0])


def test_identical_points_give_a_single_full_weight_component(prior_2d):
    surrogate = _fixed_surrogate([[0.5, -0.5], [0.5, -0.5]], [-1.0, -1.0])
    proposal = build_proposal(surrogate, prior_2d, seed=0)
    assert proposal.n_components == 1
    assert proposal.weights == pytest.approx([1.0])


def test_proposal_weights_match_direct_evaluation(surrogate_2d, prior_2d):
    proposal = build_proposal(surrogate_2d, prior_2d, seed=0)
    moments = diag_moments(surrogate_2d, proposal.means)
    direct = np.sqrt(moments.var_g) * moments.mu_g * np.exp(log_prior(prior_2d, proposal.means))
    assert proposal.weights == pytest.approx(direct / direct.sum(), rel=1e-8)


def test_uncertainty_mass_matches_a_grid_integral(surrogate_2d, prior_2d):
    proposal = build_proposal(surrogate_2d, prior_2d, seed=0)
    candidates = supersample(proposal, surrogate_2d, prior_2d, n_super=40_000, seed=5)
    axis = np.linspace(-7.0, 7.0, 281)
    grid = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    moments = diag_moments(surrogate_2d, grid)
    density = np.sqrt(moments.var_g) * np.maximum(moments.mu_g, 0.0) * np.exp(log_prior(prior_2d, grid))
    step = axis[1] - axis[0]
    assert np.exp(candidates.log_z_a) == pytest.approx(density.sum() * step * step, rel=0.05)
