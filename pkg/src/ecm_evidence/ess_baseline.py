"""Elliptical slice sampling under the Gaussian prior, the MCMC comparison engine."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bayes_core import EcmLogLikelihood
from .constants import BURN_IN_FRACTION, LIKELIHOOD_RESIDUAL, LOG_LIK_FLOOR, MAX_SHRINK
from .criteria import elpd
from .errors import ConfigError
from .models import Dataset, GaussianPrior
from .problems import Problem, ProblemCode

logger = logging.getLogger(__name__)

_MAX_START_DRAWS = 1000


@dataclass(frozen=True)
class EssConfig:
    n_samples: int = 2500
    burn_in: int | None = None
    seed: int | None = 0
    max_shrink: int = MAX_SHRINK
    form: str = LIKELIHOOD_RESIDUAL

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ConfigError("n_samples must be at least 1")
        if self.burn_in is not None and not 0 <= self.burn_in < self.n_samples:
            raise ConfigError("burn_in must lie in [0, n_samples)")
        if self.max_shrink < 1:
            raise ConfigError("max_shrink must be at least 1")

    @property
    def resolved_burn_in(self) -> int:
        return int(BURN_IN_FRACTION * self.n_samples) if self.burn_in is None else self.burn_in


@dataclass
class EssChain:
    samples: np.ndarray
    log_liks: np.ndarray
    evals_at: np.ndarray
    wall_time_s: np.ndarray
    shrinks: np.ndarray
    burn_in: int
    problems: list[Problem] = field(default_factory=list)

    @property
    def n_evals(self) -> int:
        return int(self.evals_at[-1]) if self.evals_at.size else 0

    @property
    def kept(self) -> np.ndarray:
        return self.samples[self.burn_in :]


def _start(log_lik, prior: GaussianPrior, rng: np.random.Generator) -> tuple[np.ndarray, float, int]:
    for draws in range(1, _MAX_START_DRAWS + 1):
        x = prior.mean + prior.chol @ rng.standard_normal(prior.dim)
        value = log_lik(x)
        if value > LOG_LIK_FLOOR:
            return x, value, draws
    return x, value, _MAX_START_DRAWS


def run_ess_with_likelihood(
    log_lik: Callable[[np.ndarray], float],
    prior: GaussianPrior,
    config: EssConfig = EssConfig(),
) -> EssChain:
    """Chain of ``config.n_samples`` states; every likelihood call is counted."""
    rng = np.random.default_rng(config.seed)
    start = time.perf_counter()
    x, current, n_evals = _start(log_lik, prior, rng)
    n = config.n_samples
    samples = np.empty((n, prior.dim))
    log_liks = np.empty(n)
    evals_at = np.empty(n, dtype=int)
    wall = np.empty(n)
    shrinks = np.zeros(n, dtype=int)
    stuck = 0

    for step in range(n):
        f = x - prior.mean
        nu = prior.chol @ rng.standard_normal(prior.dim)
        threshold = current + np.log(rng.random())
        angle = rng.uniform(0.0, 2.0 * np.pi)
        lower, upper = angle - 2.0 * np.pi, angle
        for shrink in range(config.max_shrink + 1):
            proposal = prior.mean + f * np.cos(angle) + nu * np.sin(angle)
            value = log_lik(proposal)
            n_evals += 1
            if value > threshold:
                x, current = proposal, value
                break
            if shrink == config.max_shrink:
                stuck += 1
                break
            if angle < 0:
                lower = angle
            else:
                upper = angle
            angle = rng.uniform(lower, upper)
        shrinks[step] = shrink
        samples[step] = x
        log_liks[step] = current
        evals_at[step] = n_evals
        wall[step] = time.perf_counter() - start

    problems = []
    if stuck:
        logger.warning("elliptical slice: %d steps hit the shrink limit %d", stuck, config.max_shrink)
        problems.append(
            Problem(
                ProblemCode.SHRINK_LIMIT,
                f"{stuck} steps hit the shrink limit and kept their state",
                {"steps": str(stuck), "max_shrink": str(config.max_shrink)},
            )
        )
    logger.info("elliptical slice: %d samples, %d evaluations, %.2fs", n, n_evals, wall[-1])
    return EssChain(samples, log_liks, evals_at, wall, shrinks, config.resolved_burn_in, problems)


def run_ess(
    data: Dataset,
    prior: GaussianPrior,
    model_order: int,
    config: EssConfig = EssConfig(),
) -> EssChain:
    if prior.dim != 2 + 2 * model_order:
        raise ConfigError(f"prior dimension {prior.dim} does not match model order {model_order}")
    return run_ess_with_likelihood(EcmLogLikelihood(data, model_order, config.form), prior, config)


def default_schedule(chain: EssChain, n_points: int = 10) -> list[int]:
    """Evaluation counts at evenly spaced post-burn-in chain positions."""
    kept = chain.evals_at[chain.burn_in :]
    if kept.size == 0:
        return []
    positions = np.unique(np.linspace(0, kept.size - 1, min(n_points, kept.size)).round().astype(int))
    return [int(kept[pos]) for pos in positions]


def elpd_checkpoints(
    chain: EssChain,
    data: Dataset,
    model_order: int,
    schedule: list[int] | None = None,
    form: str = LIKELIHOOD_RESIDUAL,
) -> list[dict]:
    """Learning-curve rows: ELPD of the post-burn-in prefix reached by each evaluation count."""
    if schedule is None:
        schedule = default_schedule(chain)
    rows = []
    last = chain.burn_in
    for budget in sorted(set(schedule)):
        reached = int(np.searchsorted(chain.evals_at, budget, side="right"))
        if reached <= last:
            continue
        last = reached
        prefix = chain.samples[chain.burn_in : reached]
        rows.append(
            {
                "iter": len(rows),
                "n_evals": int(chain.evals_at[reached - 1]),
                "wall_time_s": float(chain.wall_time_s[reached - 1]),
                "lem": elpd(prefix, data, model_order, form=form),
                "lev": np.nan,
            }
        )
    return rows
