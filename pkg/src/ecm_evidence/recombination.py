"""Candidate generation and positively-weighted kernel recombination.

Candidates are drawn around midpoints of observed pairs, weighted back to the prior
measure, and reduced to at most M + 1 nodes that keep the weighted mean of M test
functions exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .bayes_core import log_prior, sample_prior
from .constants import ALL_PAIRS_LIMIT, DEFENSIVE_WEIGHT, MIN_SUPER_ESS, N_HEUR_CAP, N_SUPER
from .errors import DegenerateWeights
from .models import GaussianPrior
from .problems import Problem, ProblemCode
from .warp_stack import DiagMoments, WarpedSurrogate, cross_cov_g, diag_moments

logger = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))
_RANK_TOLERANCE = 1e-10
_POINT_CHUNK = 2048


@dataclass(frozen=True)
class ProposalMixture:
    """Diagonal Gaussian mixture over pairwise midpoints of the evaluated points."""

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    fallback: bool = False

    def __post_init__(self) -> None:
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        variances = np.broadcast_to(np.asarray(self.variances, dtype=float), means.shape).copy()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if weights.size != means.shape[0]:
            raise ValueError("one weight per component required")
        if np.any(weights <= 0) or not np.isclose(weights.sum(), 1.0, rtol=0.0, atol=1e-10):
            raise ValueError("mixture weights must be positive and sum to 1")
        if np.any(variances <= 0):
            raise ValueError("component variances must be positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "weights", weights)

    @property
    def n_components(self) -> int:
        return int(self.weights.size)

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def logpdf(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        inv_var = 1.0 / self.variances
        log_norm = np.log(self.weights) - 0.5 * (self.dim * _LOG_2PI + np.sum(np.log(self.variances), axis=1))
        out = np.empty(len(points))
        for start in range(0, len(points), _POINT_CHUNK):
            block = points[start : start + _POINT_CHUNK]
            sq = (block[:, None, :] - self.means[None, :, :]) ** 2
            out[start : start + len(block)] = logsumexp(log_norm - 0.5 * np.sum(sq * inv_var, axis=2), axis=1)
        return out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        return self.means[comp] + rng.standard_normal((n, self.dim)) * np.sqrt(self.variances[comp])


@dataclass(frozen=True)
class QuadratureNodes:
    points: np.ndarray
    weights: np.ndarray
    indices: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.weights.size)


@dataclass(frozen=True)
class WeightedCandidates:
    """Supersample with weights towards the prior (for recombination) and towards A~.

    ``prior_weights`` are unnormalised importance weights pi / q / N whose sum estimates 1.
    ``resampled`` indexes an equal-weight SMC subset targeting the uncertainty density.
    """

    points: np.ndarray
    log_q: np.ndarray
    log_prior: np.ndarray
    prior_weights: np.ndarray
    log_target: np.ndarray
    log_z_a: float
    ess: float
    moments: DiagMoments = field(repr=False)
    resampled: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return int(self.points.shape[0])


def prior_mixture(prior: GaussianPrior) -> ProposalMixture:
    return ProposalMixture(
        means=prior.mean[None, :],
        variances=np.diag(prior.cov)[None, :],
        weights=np.ones(1),
        fallback=True,
    )


def _midpoint_pairs(scores: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    n = scores.size
    if n <= ALL_PAIRS_LIMIT:
        return np.array(list(combinations(range(n), 2)), dtype=int).reshape(-1, 2)
    top = np.argsort(scores, kind="stable")[::-1][:ALL_PAIRS_LIMIT]
    pairs = {tuple(sorted(pair)) for pair in combinations(top.tolist(), 2)}
    draws = rng.integers(0, n, size=(2 * cap, 2))
    pairs.update(tuple(sorted(pair)) for pair in draws.tolist() if pair[0] != pair[1])
    return np.array(sorted(pairs), dtype=int)


def score_midpoints(surrogate: WarpedSurrogate, prior: GaussianPrior, points: np.ndarray) -> np.ndarray:
    """ln(sigma_g * mu_g * pi) at ``points``; -inf where mu_g <= 0."""
    moments = diag_moments(surrogate, points)
    with np.errstate(divide="ignore", invalid="ignore"):
        return (
            0.5 * np.log(moments.var_g)
            + np.log(np.maximum(moments.mu_g, 0.0))
            + log_prior(prior, np.atleast_2d(points))
        )


def build_proposal(
    surrogate: WarpedSurrogate,
    prior: GaussianPrior,
    cap: int = N_HEUR_CAP,
    seed=None,
    problems: list[Problem] | None = None,
) -> ProposalMixture:
    inputs = surrogate.inputs
    if inputs.shape[0] < 2:
        raise ValueError("building the proposal needs at least two observed points")
    rng = np.random.default_rng(seed)
    observed = surrogate.log_liks + log_prior(prior, inputs)
    pairs = _midpoint_pairs(observed, cap, rng)
    mids = 0.5 * (inputs[pairs[:, 0]] + inputs[pairs[:, 1]])
    scores = score_midpoints(surrogate, prior, mids)
    scores = np.where(np.isfinite(scores), scores, -np.inf)
    if mids.shape[0] > cap:
        keep = np.argsort(scores, kind="stable")[::-1][:cap]
        mids, scores = mids[keep], scores[keep]
    usable = np.isfinite(scores)
    if not np.any(usable):
        logger.warning("all midpoint weights underflowed; falling back to the prior")
        if problems is not None:
            problems.append(Problem(ProblemCode.PROPOSAL_FALLBACK, "all midpoint weights underflowed"))
        return prior_mixture(prior)
    mids, scores = mids[usable], scores[usable]
    weights = np.exp(scores - logsumexp(scores))
    weights = weights / weights.sum()
    positive = weights > 0
    variances = 0.5 * surrogate.base.kernel.lengthscales**2
    logger.debug("proposal: %d components from %d observed points", int(positive.sum()), inputs.shape[0])
    return ProposalMixture(means=mids[positive], variances=variances, weights=weights[positive] / weights[positive].sum())


def _systematic_resample(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side="left")


def _ess(log_weights: np.ndarray) -> tuple[float, np.ndarray]:
    finite = np.isfinite(log_weights)
    if not np.any(finite):
        return 0.0, np.zeros_like(log_weights)
    normalized = np.exp(log_weights - logsumexp(log_weights[finite]))
    normalized[~finite] = 0.0
    return float(1.0 / np.sum(normalized * normalized)), normalized


def supersample(
    proposal: ProposalMixture,
    surrogate: WarpedSurrogate,
    prior: GaussianPrior,
    n_super: int = N_SUPER,
    seed=None,
    defensive_weight: float = DEFENSIVE_WEIGHT,
    uncertainty_ratio: float | None = 1.0,
) -> WeightedCandidates:
    """Draw from (1 - rho) q + rho pi, q the midpoint mixture, and weight the draws.

    The SMC target is ``r * A~ + (1 - r) * pi'`` with ``r = uncertainty_ratio``, where
    A~ is proportional to sigma_g pi' and pi' to mu_g pi; ``None`` targets the prior.
    """
    if n_super < 1:
        raise ValueError("n_super must be at least 1")
    if not 0.0 <= defensive_weight <= 1.0:
        raise ValueError("defensive_weight must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    from_prior = rng.random(n_super) < defensive_weight
    n_prior = int(from_prior.sum())
    points = np.empty((n_super, prior.dim))
    points[from_prior] = sample_prior(prior, n_prior, rng)
    points[~from_prior] = proposal.sample(n_super - n_prior, rng)

    log_pi = log_prior(prior, points)
    log_g = proposal.logpdf(points)
    with np.errstate(divide="ignore"):
        log_q = np.logaddexp(np.log1p(-defensive_weight) + log_g, np.log(defensive_weight) + log_pi)
    log_prior_weights = log_pi - log_q - np.log(n_super)
    prior_weights = np.exp(log_prior_weights)

    moments = diag_moments(surrogate, points)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_mu_g = np.log(np.maximum(moments.mu_g, 0.0))
        log_a = 0.5 * np.log(moments.var_g) + log_mu_g + log_pi
    log_a = np.where(np.isnan(log_a), -np.inf, log_a)
    log_w_a = log_a - log_q
    log_z_a = float(logsumexp(log_w_a) - np.log(n_super)) if np.any(np.isfinite(log_w_a)) else -np.inf

    if uncertainty_ratio is None:
        log_target = log_pi
        log_w = log_prior_weights
    else:
        if not 0.0 <= uncertainty_ratio <= 1.0:
            raise ValueError("uncertainty_ratio must lie in [0, 1]")
        log_pi_prime = np.where(np.isnan(log_mu_g + log_pi), -np.inf, log_mu_g + log_pi)
        # both densities normalised before mixing, each through its own importance estimate
        with np.errstate(divide="ignore"):
            log_r, log_1r = np.log(uncertainty_ratio), np.log1p(-uncertainty_ratio)
        log_w_pp = log_pi_prime - log_q
        log_w = np.logaddexp(log_r + log_w_a - _safe_lse(log_w_a), log_1r + log_w_pp - _safe_lse(log_w_pp))
        log_target = np.logaddexp(log_r + log_a, log_1r + log_pi_prime)

    ess, normalized = _ess(log_w)
    if ess < MIN_SUPER_ESS:
        raise DegenerateWeights(ess, MIN_SUPER_ESS)
    resampled = _systematic_resample(normalized, n_super, rng)
    logger.debug("supersample: n=%d, ln Z_A=%.4g, ess=%.1f", n_super, log_z_a, ess)
    return WeightedCandidates(
        points=points,
        log_q=log_q,
        log_prior=log_pi,
        prior_weights=prior_weights,
        log_target=log_target,
        log_z_a=log_z_a,
        ess=ess,
        moments=moments,
        resampled=resampled,
    )


def _safe_lse(values: np.ndarray) -> float:
    return float(logsumexp(values)) if np.any(np.isfinite(values)) else 0.0


def choose_landmarks(candidates: WeightedCandidates, n_landmarks: int, seed=None) -> np.ndarray:
    """Distinct candidate indices, preferring the SMC-resampled subset."""
    rng = np.random.default_rng(seed)
    pool = np.unique(candidates.resampled)
    if pool.size < n_landmarks:
        rest = np.setdiff1d(np.arange(candidates.size), pool)
        extra = rng.choice(rest, size=min(n_landmarks - pool.size, rest.size), replace=False)
        return np.sort(np.concatenate((pool, extra)))
    return np.sort(rng.choice(pool, size=n_landmarks, replace=False))


def nystrom_features(
    surrogate: WarpedSurrogate,
    points: np.ndarray,
    landmarks: np.ndarray,
    moments: DiagMoments | None = None,
) -> np.ndarray:
    """Nystrom features of the g-space predictive covariance: K(x, Z) U diag(s)^-1/2."""
    if len(landmarks) == 0:
        return np.zeros((len(points), 0))
    gram = cross_cov_g(surrogate, landmarks, landmarks)
    gram = 0.5 * (gram + gram.T)
    eigvals, eigvecs = linalg.eigh(gram)
    keep = eigvals > _RANK_TOLERANCE * max(float(eigvals.max()), 0.0)
    if not np.any(keep):
        return np.zeros((len(points), 0))
    projection = eigvecs[:, keep] / np.sqrt(eigvals[keep])
    return cross_cov_g(surrogate, points, landmarks, moments) @ projection


def _reduced_system(features: np.ndarray, weights: np.ndarray, problems: list[Problem] | None) -> np.ndarray:
    """Rows spanning [1; features^T] with dependent feature directions removed."""
    n, m = features.shape
    ones = np.ones((1, n))
    if m == 0:
        return ones
    total = weights.sum()
    centered = features - (weights @ features) / total
    scale = np.sqrt((weights @ centered**2) / total)
    scale = np.where(scale > 0, scale, 1.0)
    u, s, _ = linalg.svd(centered / scale, full_matrices=False)
    rank = int(np.sum(s > _RANK_TOLERANCE * max(float(s[0]) if s.size else 0.0, 1e-300)))
    if rank < m:
        logger.debug("recombination: dropped %d dependent feature directions", m - rank)
        if problems is not None:
            problems.append(
                Problem(ProblemCode.RANK_DEFICIENT, f"feature rank {rank} < {m}", {"rank": str(rank), "features": str(m)})
            )
    return np.vstack((ones, s[:rank, None] * u[:, :rank].T))


def _caratheodory(system: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weights supported on at most rows(system) points with the same moments."""
    weights = weights.copy()
    rows = system.shape[0]
    active = np.flatnonzero(weights > 0)
    while active.size > rows:
        subset = active[: rows + 1]
        _, _, vt = linalg.svd(system[:, subset], full_matrices=True)
        direction = vt[-1]
        if direction.max() <= 0:
            direction = -direction
        positive = direction > 0
        ratios = np.full(direction.size, np.inf)
        ratios[positive] = weights[subset][positive] / direction[positive]
        drop = int(np.argmin(ratios))
        weights[subset] -= ratios[drop] * direction
        weights[subset[drop]] = 0.0
        weights[subset] = np.maximum(weights[subset], 0.0)
        active = np.flatnonzero(weights > 0)
    return weights


def _tree_reduce(system: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Divide-and-conquer reduction: recombine group barycenters, then the survivors."""
    rows = system.shape[0]
    weights = weights.copy()
    active = np.flatnonzero(weights > 0)
    while active.size > 2 * rows:
        groups = np.array_split(active, 2 * rows)
        masses = np.array([weights[g].sum() for g in groups])
        centers = np.column_stack([system[:, g] @ weights[g] / mass for g, mass in zip(groups, masses)])
        reduced = _caratheodory(centers, masses)
        for group, old, new in zip(groups, masses, reduced):
            weights[group] *= new / old
        active = np.flatnonzero(weights > 0)
    return _caratheodory(system, weights)


def recombine(
    points: np.ndarray,
    weights: np.ndarray,
    features: np.ndarray,
    problems: list[Problem] | None = None,
) -> QuadratureNodes:
    """Positive reweighting of a subset preserving mass and every feature mean."""
    points = np.atleast_2d(points)
    weights = np.asarray(weights, dtype=float).ravel()
    features = np.asarray(features, dtype=float).reshape(len(points), -1)
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ValueError("recombination weights must be finite and non-negative")
    index = np.flatnonzero(weights > 0)
    if index.size == 0:
        raise ValueError("recombination needs positive total mass")
    n_features = features.shape[1]
    if n_features == 0:
        best = index[int(np.argmax(weights[index]))]
        return QuadratureNodes(points[[best]], np.array([weights.sum()]), np.array([best]))
    if index.size <= n_features + 1:
        return QuadratureNodes(points[index], weights[index], index)
    system = _reduced_system(features[index], weights[index], problems)
    reduced = _tree_reduce(system, weights[index])
    keep = reduced > 0
    logger.debug("recombination: %d candidates -> %d nodes (%d features)", index.size, int(keep.sum()), n_features)
    return QuadratureNodes(points[index[keep]], reduced[keep], index[keep])
