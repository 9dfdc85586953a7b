import numpy as np
import pytest

from ecm_evidence.constants import LENGTHSCALE_BOUNDS
from ecm_evidence.errors import CholeskyFailure
from ecm_evidence.gp_core import (
    Kernel,
    _cholesky_with_jitter,
    build_state,
    fit_hyperparams,
    predict_cov,
    predict_mean,
    predict_mean_var,
)


@pytest.fixture
def state():
    inputs = np.linspace(0.0, 5.0, 12)[:, None]
    return build_state(Kernel(output_scale=1.5, lengthscales=[0.8]), inputs, np.sin(inputs[:, 0]))


def test_posterior_interpolates_observations(state):
    mean, var = predict_mean_var(state, state.inputs)
    assert mean == pytest.approx(state.targets, abs=1e-4)
    assert var == pytest.approx(np.zeros(state.n), abs=1e-5)


def test_prior_is_recovered_far_from_data(state):
    mean, var = predict_mean_var(state, np.array([[100.0]]))
    assert mean[0] == pytest.approx(0.0, abs=1e-12)
    assert var[0] == pytest.approx(1.5)


def test_covariance_diagonal_matches_marginal_variance(state):
    points = np.linspace(-1.0, 6.0, 9)[:, None]
    cov = predict_cov(state, points, points)
    _, var = predict_mean_var(state, points)
    assert np.diag(cov) == pytest.approx(var, abs=1e-10)
    assert cov == pytest.approx(cov.T, abs=1e-12)
    assert predict_mean(state, points) == pytest.approx(predict_mean_var(state, points)[0])


def test_empty_state_predicts_the_prior():
    kernel = Kernel(output_scale=2.0, lengthscales=[1.0, 1.0])
    empty = build_state(kernel, np.zeros((0, 2)), np.zeros(0))
    mean, var = predict_mean_var(empty, np.ones((3, 2)))
    assert mean == pytest.approx(np.zeros(3))
    assert var == pytest.approx(np.full(3, 2.0))


def test_jitter_escalates_for_slightly_indefinite_matrices():
    gram = np.array([[1.0, 1.0 + 1e-7], [1.0 + 1e-7, 1.0]])
    chol, jitter = _cholesky_with_jitter(gram, 1e-10, 1.0)
    assert jitter > 1e-10
    assert chol @ chol.T == pytest.approx(gram + jitter * np.eye(2))


def test_indefinite_matrix_fails_at_the_jitter_ceiling():
    with pytest.raises(CholeskyFailure):
        _cholesky_with_jitter(np.array([[1.0, 2.0], [2.0, 1.0]]), 1e-10, 1.0)


def test_hyperparameter_fit_predicts_held_out_points():
    x = np.linspace(0.0, 6.0, 25)[:, None]
    kernel = fit_hyperparams(x, np.sin(x[:, 0]), restarts=3, seed=0)
    assert np.all(kernel.lengthscales >= LENGTHSCALE_BOUNDS[0])
    assert np.all(kernel.lengthscales <= LENGTHSCALE_BOUNDS[1])
    fitted = build_state(kernel, x, np.sin(x[:, 0]))
    held_out = np.array([[1.3], [2.55], [4.1]])
    assert predict_mean(fitted, held_out) == pytest.approx(np.sin(held_out[:, 0]), abs=0.02)


def test_fit_needs_two_points():
    with pytest.raises(ValueError):
        fit_hyperparams(np.zeros((1, 1)), np.zeros(1))


def test_kernel_validation():
    with pytest.raises(ValueError):
        Kernel(output_scale=0.0, lengthscales=[1.0])
    with pytest.raises(ValueError):
        Kernel(output_scale=1.0, lengthscales=[-1.0])
