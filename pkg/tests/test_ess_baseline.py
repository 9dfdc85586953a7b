import numpy as np
import pytest

from ecm_evidence.bayes_core import default_prior
from ecm_evidence.constants import LOG_LIK_FLOOR
from ecm_evidence.errors import ConfigError
from ecm_evidence.ess_baseline import EssConfig, default_schedule, elpd_checkpoints, run_ess, run_ess_with_likelihood
from ecm_evidence.problems import ProblemCode


def test_chain_targets_the_conjugate_posterior(prior_2d, pseudo_likelihood):
    chain = run_ess_with_likelihood(pseudo_likelihood, prior_2d, EssConfig(n_samples=6000, seed=0))
    mean, _ = pseudo_likelihood.posterior(prior_2d)
    assert chain.kept.mean(axis=0) == pytest.approx(mean, abs=0.15)
    assert chain.samples.shape == (6000, 2)
    assert chain.n_evals >= 6000
    assert np.all(np.diff(chain.evals_at) >= 1)
    assert np.all(np.diff(chain.wall_time_s) >= 0)
    assert chain.problems == []


def test_chain_is_seeded(prior_2d, pseudo_likelihood):
    config = EssConfig(n_samples=200, seed=7)
    first = run_ess_with_likelihood(pseudo_likelihood, prior_2d, config)
    second = run_ess_with_likelihood(pseudo_likelihood, prior_2d, config)
    assert np.array_equal(first.samples, second.samples)


def test_shrink_limit_keeps_the_state(prior_2d):
    calls = []

    def log_lik(vector):
        calls.append(vector)
        return 0.0 if len(calls) == 1 else LOG_LIK_FLOOR

    chain = run_ess_with_likelihood(log_lik, prior_2d, EssConfig(n_samples=5, seed=0, max_shrink=3))
    assert np.all(chain.samples == chain.samples[0])
    assert np.all(chain.shrinks == 3)
    assert chain.n_evals == 1 + 5 * 4
    assert [problem.code for problem in chain.problems] == [ProblemCode.SHRINK_LIMIT]


@pytest.mark.parametrize("kwargs", [{"n_samples": 0}, {"burn_in": 10, "n_samples": 10}, {"max_shrink": 0}])
def test_invalid_configs(kwargs):
    with pytest.raises(ConfigError):
        EssConfig(**kwargs)


def test_default_burn_in():
    assert EssConfig(n_samples=1000).resolved_burn_in == 100
    assert EssConfig(n_samples=1000, burn_in=0).resolved_burn_in == 0


def test_prior_dimension_must_match_model_order(easy_data):
    with pytest.raises(ConfigError):
        run_ess(easy_data, default_prior(2), 1)


def test_learning_curve_rows(easy_data):
    chain = run_ess(easy_data, default_prior(1), 1, EssConfig(n_samples=60, seed=0, burn_in=10))
    schedule = default_schedule(chain, n_points=4)
    assert schedule == sorted(schedule)
    rows = elpd_checkpoints(chain, easy_data, 1, schedule)
    assert 1 <= len(rows) <= 4
    assert [row["iter"] for row in rows] == list(range(len(rows)))
    assert all(b["n_evals"] > a["n_evals"] for a, b in zip(rows, rows[1:]))
    assert all(np.isfinite(row["lem"]) and np.isnan(row["lev"]) for row in rows)


def test_budgets_before_burn_in_are_skipped(easy_data):
    chain = run_ess(easy_data, default_prior(1), 1, EssConfig(n_samples=30, seed=1, burn_in=20))
    assert elpd_checkpoints(chain, easy_data, 1, [int(chain.evals_at[5])]) == []
