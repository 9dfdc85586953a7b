"""Batch Bayesian quadrature over the warped surrogate.

Each iteration refits the surrogate on every observation, builds candidates around
promising midpoints, recombines them into at most ``batch_size`` nodes, estimates the
log evidence from those nodes and queries the true likelihood at them.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .bayes_core import EcmLogLikelihood, batch_log_likelihood, log_prior, sample_prior
from .constants import (
    BATCH_SIZE,
    CONV_TOL,
    CONV_WINDOW,
    DEFENSIVE_WEIGHT,
    GP_RESTARTS,
    JITTER_START,
    LIKELIHOOD_FORMS,
    LIKELIHOOD_RESIDUAL,
    MAX_ITERS,
    MIN_POSTERIOR_ESS,
    N_HEUR_CAP,
    N_SUPER,
)
from .errors import CholeskyFailure, ConfigError, DegenerateWeights, NegativeRadicand
from .models import Dataset, GaussianPrior
from .problems import Problem, ProblemCode
from .recombination import (
    ProposalMixture,
    QuadratureNodes,
    WeightedCandidates,
    build_proposal,
    choose_landmarks,
    nystrom_features,
    prior_mixture,
    recombine,
    supersample,
)
from .warp_stack import WarpConfig, WarpedSurrogate, diag_moments, fit_surrogate, moments_f

logger = logging.getLogger(__name__)

LogLikelihood = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class BasqConfig:
    batch_size: int = BATCH_SIZE
    max_iters: int = MAX_ITERS
    conv_tol: float = CONV_TOL
    conv_window: int = CONV_WINDOW
    seed: int | None = 0
    n_super: int = N_SUPER
    heur_cap: int = N_HEUR_CAP
    defensive_weight: float = DEFENSIVE_WEIGHT
    uncertainty_ratio: float = 1.0
    gp_restarts: int = GP_RESTARTS
    warp: WarpConfig = field(default_factory=WarpConfig)
    form: str = LIKELIHOOD_RESIDUAL
    workers: int = 1

    def __post_init__(self) -> None:
        if self.batch_size < 3:
            raise ConfigError("batch_size must be at least 3")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be non-negative")
        if self.conv_tol <= 0 or self.conv_window < 1:
            raise ConfigError("conv_tol must be positive and conv_window at least 1")
        if self.n_super < self.batch_size:
            raise ConfigError("n_super must be at least batch_size")
        if not 0.0 <= self.defensive_weight <= 1.0:
            raise ConfigError("defensive_weight must lie in [0, 1]")
        if not 0.0 <= self.uncertainty_ratio <= 1.0:
            raise ConfigError("uncertainty_ratio must lie in [0, 1]")
        if self.form not in LIKELIHOOD_FORMS:
            raise ConfigError(f"unknown likelihood form '{self.form}'")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")


@dataclass(frozen=True)
class EvidenceEstimate:
    lem: float
    lev: float
    lev_standardized: float
    n_evals: int = 0
    wall_time_s: float = 0.0
    iteration: int = 0
    beta: float = 0.0


@dataclass
class RunHistory:
    snapshots: list[EvidenceEstimate] = field(default_factory=list)

    def append(self, estimate: EvidenceEstimate) -> None:
        if self.snapshots and estimate.n_evals <= self.snapshots[-1].n_evals:
            raise ValueError("history n_evals must be strictly increasing")
        self.snapshots.append(estimate)

    def __len__(self) -> int:
        return len(self.snapshots)

    def __getitem__(self, index: int) -> EvidenceEstimate:
        return self.snapshots[index]

    @property
    def levs(self) -> np.ndarray:
        return np.array([snap.lev for snap in self.snapshots])

    def rows(self) -> list[dict]:
        """Learning-curve rows ``iter, n_evals, wall_time_s, lem, lev``."""
        return [
            {
                "iter": snap.iteration,
                "n_evals": snap.n_evals,
                "wall_time_s": snap.wall_time_s,
                "lem": snap.lem,
                "lev": snap.lev,
            }
            for snap in self.snapshots
        ]


@dataclass
class BasqResult:
    estimate: EvidenceEstimate
    surrogate: WarpedSurrogate
    history: RunHistory
    nodes: QuadratureNodes
    proposal: ProposalMixture
    converged: bool
    problems: list[Problem] = field(default_factory=list)

    @property
    def inputs(self) -> np.ndarray:
        return self.surrogate.inputs

    @property
    def log_liks(self) -> np.ndarray:
        return self.surrogate.log_liks


@dataclass(frozen=True)
class PosteriorSamples:
    points: np.ndarray
    weights: np.ndarray
    ess: float

    @property
    def size(self) -> int:
        return int(self.weights.size)


def log_evidence_moments(
    weights: np.ndarray,
    mu_f: np.ndarray,
    cov_f: np.ndarray,
    beta: float,
) -> tuple[float, float]:
    """(ln sum W mu_f + beta, ln sum sum W W sigma_f + 2 beta); -inf where a sum is not positive."""
    with np.errstate(divide="ignore"):
        log_w = np.log(np.asarray(weights, dtype=float))
        log_mean, sign_mean = logsumexp(log_w + np.log(np.abs(mu_f)), b=np.sign(mu_f), return_sign=True)
        log_pair = log_w[:, None] + log_w[None, :] + np.log(np.abs(cov_f))
        log_var, sign_var = logsumexp(log_pair, b=np.sign(cov_f), return_sign=True)
    lem = float(log_mean) + beta if sign_mean > 0 else -np.inf
    lev = float(log_var) + 2.0 * beta if sign_var > 0 else -np.inf
    return lem, lev


def evidence(
    surrogate: WarpedSurrogate,
    nodes: QuadratureNodes,
    n_evals: int = 0,
    wall_time_s: float = 0.0,
    iteration: int = 0,
    problems: list[Problem] | None = None,
) -> EvidenceEstimate:
    mu_f, cov_f = moments_f(surrogate, nodes.points)
    beta = surrogate.consts.beta
    lem, lev = log_evidence_moments(nodes.weights, mu_f, cov_f, beta)
    if not (np.isfinite(lem) and np.isfinite(lev)):
        logger.warning("evidence sum not positive at iteration %d (LEM=%s, LEV=%s)", iteration, lem, lev)
        if problems is not None:
            problems.append(
                Problem(
                    ProblemCode.NON_POSITIVE_SUM,
                    "quadrature sum not positive; reported as -inf",
                    {"iteration": str(iteration)},
                )
            )
    return EvidenceEstimate(
        lem=lem,
        lev=lev,
        lev_standardized=lev - 2.0 * beta,
        n_evals=n_evals,
        wall_time_s=wall_time_s,
        iteration=iteration,
        beta=beta,
    )


def _plateaued(levs: np.ndarray, tol: float, window: int) -> bool:
    if levs.size < window + 1:
        return False
    recent = levs[-(window + 1) :]
    if not np.all(np.isfinite(recent)):
        return False
    return bool(np.all(np.abs(np.diff(recent)) < tol))


@dataclass
class _Step:
    surrogate: WarpedSurrogate
    proposal: ProposalMixture
    candidates: WeightedCandidates
    nodes: QuadratureNodes


def _candidates(
    surrogate: WarpedSurrogate,
    prior: GaussianPrior,
    config: BasqConfig,
    seeds: list[np.random.SeedSequence],
    problems: list[Problem],
    iteration: int,
) -> tuple[ProposalMixture, WeightedCandidates]:
    proposal = build_proposal(surrogate, prior, cap=config.heur_cap, seed=seeds[0], problems=problems)
    try:
        return proposal, supersample(
            proposal,
            surrogate,
            prior,
            n_super=config.n_super,
            seed=seeds[1],
            defensive_weight=config.defensive_weight,
            uncertainty_ratio=config.uncertainty_ratio,
        )
    except DegenerateWeights as exc:
        logger.warning("iteration %d: %s; resampling from the prior", iteration, exc)
        problems.append(
            Problem(ProblemCode.DEGENERATE_BATCH, str(exc), {"iteration": str(iteration), "ess": f"{exc.ess:.3g}"})
        )
        proposal = prior_mixture(prior)
        return proposal, supersample(
            proposal, surrogate, prior, n_super=config.n_super, seed=seeds[1], defensive_weight=1.0, uncertainty_ratio=None
        )


def _step(
    inputs: np.ndarray,
    log_liks: np.ndarray,
    prior: GaussianPrior,
    config: BasqConfig,
    seed: np.random.SeedSequence,
    previous: WarpedSurrogate | None,
    problems: list[Problem],
    iteration: int,
) -> _Step:
    seeds = seed.spawn(4)
    initial = previous.base.kernel if previous is not None else None
    surrogate = fit_surrogate(
        inputs, log_liks, config.warp, initial=initial, restarts=config.gp_restarts, seed=seeds[0]
    )
    if surrogate.base.jitter > JITTER_START * surrogate.base.kernel.output_scale:
        problems.append(
            Problem(
                ProblemCode.JITTER_ESCALATED,
                f"GP jitter escalated to {surrogate.base.jitter:.3g}",
                {"iteration": str(iteration)},
            )
        )
    proposal, candidates = _candidates(surrogate, prior, config, seeds[1:3], problems, iteration)
    n_landmarks = config.batch_size - 2
    landmarks = choose_landmarks(candidates, n_landmarks, seed=seeds[3])
    kernel_features = nystrom_features(
        surrogate, candidates.points, candidates.points[landmarks], candidates.moments
    )
    features = np.column_stack((candidates.moments.mu_f, kernel_features))
    logger.debug("iteration %d: %d landmarks, %d features", iteration, landmarks.size, features.shape[1])
    nodes = recombine(candidates.points, candidates.prior_weights, features, problems)
    return _Step(surrogate, proposal, candidates, nodes)


def _next_batch(step: _Step, batch_size: int, problems: list[Problem], iteration: int) -> np.ndarray:
    """Recombination nodes, padded from the uncertainty-resampled pool."""
    nodes = step.nodes.points[:batch_size]
    missing = batch_size - len(nodes)
    if missing <= 0:
        return nodes
    taken = set(step.nodes.indices.tolist())
    pool = [idx for idx in dict.fromkeys(step.candidates.resampled.tolist()) if idx not in taken]
    if len(pool) < missing:
        rest = [idx for idx in range(step.candidates.size) if idx not in taken and idx not in set(pool)]
        pool.extend(rest)
    pad = step.candidates.points[pool[:missing]]
    problems.append(
        Problem(
            ProblemCode.PADDED_BATCH,
            f"{len(nodes)} nodes padded with {missing} resampled candidates",
            {"iteration": str(iteration), "nodes": str(len(nodes))},
        )
    )
    return np.vstack((nodes, pad))


def run_with_likelihood(
    log_lik: LogLikelihood,
    prior: GaussianPrior,
    config: BasqConfig = BasqConfig(),
) -> BasqResult:
    """Run the quadrature loop on any log-likelihood over flat parameter vectors."""
    problems: list[Problem] = []
    root = np.random.SeedSequence(config.seed)
    design_seed, *iteration_seeds = root.spawn(config.max_iters + 2)
    start = time.perf_counter()

    inputs = sample_prior(prior, config.batch_size, design_seed)
    log_liks = batch_log_likelihood(log_lik, inputs, config.workers)
    history = RunHistory()
    surrogate: WarpedSurrogate | None = None
    step: _Step | None = None
    converged = False

    for iteration in range(config.max_iters + 1):
        stale = False
        try:
            step = _step(inputs, log_liks, prior, config, iteration_seeds[iteration], surrogate, problems, iteration)
        except (CholeskyFailure, NegativeRadicand) as exc:
            if step is None:
                raise
            logger.warning("iteration %d: %s; keeping the previous surrogate", iteration, exc)
            problems.append(Problem(ProblemCode.DEGENERATE_BATCH, str(exc), {"iteration": str(iteration)}))
            stale = True
        surrogate = step.surrogate
        estimate = evidence(
            surrogate,
            step.nodes,
            n_evals=int(log_liks.size),
            wall_time_s=time.perf_counter() - start,
            iteration=iteration,
            problems=problems,
        )
        history.append(estimate)
        logger.info(
            "iter %d: n_evals=%d, LEM=%.4f, LEV=%.4f, beta=%.4f, nodes=%d, scale=%.3g",
            iteration,
            estimate.n_evals,
            estimate.lem,
            estimate.lev,
            estimate.beta,
            step.nodes.size,
            surrogate.base.kernel.output_scale,
        )
        if _plateaued(history.levs, config.conv_tol, config.conv_window):
            converged = True
            break
        if iteration == config.max_iters:
            break
        if stale:
            batch = sample_prior(prior, config.batch_size, iteration_seeds[iteration].spawn(1)[0])
        else:
            batch = _next_batch(step, config.batch_size, problems, iteration)
        inputs = np.vstack((inputs, batch))
        log_liks = np.concatenate((log_liks, batch_log_likelihood(log_lik, batch, config.workers)))

    if not converged:
        problems.append(
            Problem(
                ProblemCode.NOT_CONVERGED,
                f"LEV did not plateau within {config.max_iters} iterations",
                {"max_iters": str(config.max_iters)},
            )
        )
    return BasqResult(
        estimate=history[-1],
        surrogate=step.surrogate,
        history=history,
        nodes=step.nodes,
        proposal=step.proposal,
        converged=converged,
        problems=problems,
    )


def run(
    data: Dataset,
    prior: GaussianPrior,
    model_order: int,
    config: BasqConfig = BasqConfig(),
) -> BasqResult:
    if prior.dim != 2 + 2 * model_order:
        raise ConfigError(f"prior dimension {prior.dim} does not match model order {model_order}")
    logger.info("BASQ: N=%d, m=%d, batch=%d, warp=%s", model_order, data.m, config.batch_size, config.warp.label)
    return run_with_likelihood(EcmLogLikelihood(data, model_order, config.form), prior, config)


def posterior_samples(
    surrogate: WarpedSurrogate,
    prior: GaussianPrior,
    n: int,
    seed=None,
    proposal: ProposalMixture | None = None,
    defensive_weight: float = DEFENSIVE_WEIGHT,
    min_ess: float = MIN_POSTERIOR_ESS,
) -> PosteriorSamples:
    """Self-normalised importance samples with weights proportional to mu_f pi / q.

    Without a proposal the samples come from the prior and the weights are proportional
    to mu_f alone.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    if proposal is None:
        points = sample_prior(prior, n, rng)
        log_ratio = np.zeros(n)
    else:
        from_prior = rng.random(n) < defensive_weight
        points = np.empty((n, prior.dim))
        points[from_prior] = sample_prior(prior, int(from_prior.sum()), rng)
        points[~from_prior] = proposal.sample(int((~from_prior).sum()), rng)
        log_pi = log_prior(prior, points)
        with np.errstate(divide="ignore"):
            log_q = np.logaddexp(
                np.log1p(-defensive_weight) + proposal.logpdf(points), np.log(defensive_weight) + log_pi
            )
        log_ratio = log_pi - log_q
    mu_f = diag_moments(surrogate, points).mu_f
    with np.errstate(divide="ignore"):
        log_w = np.log(np.maximum(mu_f, 0.0)) + log_ratio
    if not np.any(np.isfinite(log_w)):
        raise DegenerateWeights(0.0, min_ess)
    weights = np.exp(log_w - logsumexp(log_w))
    weights /= weights.sum()
    ess = float(1.0 / np.sum(weights * weights))
    logger.debug("posterior samples: n=%d, ess=%.1f", n, ess)
    if ess < min_ess:
        raise DegenerateWeights(ess, min_ess)
    return PosteriorSamples(points=points, weights=weights, ess=ess)
