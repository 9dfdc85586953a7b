import numpy as np
import pytest

from ecm_evidence.basq_engine import BasqConfig
from ecm_evidence.dataset import generate_preset
from ecm_evidence.models import GaussianPrior
from ecm_evidence.oracle import GaussianPseudoLikelihood
from ecm_evidence.warp_stack import fit_surrogate


@pytest.fixture
def easy_data():
    return generate_preset("easy", seed=1, m=40)


@pytest.fixture
def hard_data():
    return generate_preset("hard", seed=1, m=40)


@pytest.fixture
def prior_2d():
    return GaussianPrior(mean=np.zeros(2), cov=np.eye(2))


@pytest.fixture
def pseudo_likelihood():
    return GaussianPseudoLikelihood(observation=np.array([0.5, -0.3]), cov=0.5 * np.eye(2))


@pytest.fixture
def surrogate_2d(prior_2d, pseudo_likelihood):
    rng = np.random.default_rng(3)
    inputs = rng.standard_normal((30, 2))
    log_liks = np.array([pseudo_likelihood(x) for x in inputs])
    return fit_surrogate(inputs, log_liks, restarts=2, seed=0)


@pytest.fixture
def small_config():
    return BasqConfig(batch_size=12, max_iters=3, n_super=1500, gp_restarts=1, seed=0)
