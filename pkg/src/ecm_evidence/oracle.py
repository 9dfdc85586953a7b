"""Reference evidences: a conjugate Gaussian model and brute-force importance sampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats
from scipy.special import logsumexp

from .bayes_core import batch_log_likelihood, log_prior, sample_prior
from .constants import N_IS
from .criteria import maximize_from_points
from .models import GaussianPrior

logger = logging.getLogger(__name__)

_HESSIAN_STEP = 1e-4
_COV_INFLATION = 2.0


@dataclass(frozen=True)
class GaussianPseudoLikelihood:
    """ln N(observation; theta, cov), a likelihood conjugate to any Gaussian prior."""

    observation: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        observation = np.atleast_1d(np.asarray(self.observation, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        object.__setattr__(self, "observation", observation)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", linalg.cholesky(cov, lower=True))

    @property
    def dim(self) -> int:
        return int(self.observation.size)

    def __call__(self, vector: np.ndarray) -> float:
        return float(stats.multivariate_normal.logpdf(self.observation, mean=vector, cov=self.cov))

    def log_evidence(self, prior: GaussianPrior) -> float:
        return float(stats.multivariate_normal.logpdf(self.observation, mean=prior.mean, cov=prior.cov + self.cov))

    def posterior(self, prior: GaussianPrior) -> tuple[np.ndarray, np.ndarray]:
        """Closed-form posterior mean and covariance."""
        gain = linalg.solve(prior.cov + self.cov, prior.cov, assume_a="pos").T
        mean = prior.mean + gain @ (self.observation - prior.mean)
        cov = prior.cov - gain @ prior.cov
        return mean, 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class ImportanceEvidence:
    log_evidence: float
    ess: float
    n_samples: int
    rel_std_error: float
    center: np.ndarray = field(repr=False)


def _numerical_hessian(fn, x: np.ndarray, step: float = _HESSIAN_STEP) -> np.ndarray:
    dim = x.size
    hess = np.empty((dim, dim))
    f0 = fn(x)
    for i in range(dim):
        ei = np.zeros(dim)
        ei[i] = step
        hess[i, i] = (fn(x + ei) - 2.0 * f0 + fn(x - ei)) / step**2
        for j in range(i):
            ej = np.zeros(dim)
            ej[j] = step
            value = (fn(x + ei + ej) - fn(x + ei - ej) - fn(x - ei + ej) + fn(x - ei - ej)) / (4.0 * step**2)
            hess[i, j] = hess[j, i] = value
    return hess


def laplace_proposal_cov(log_post, center: np.ndarray, prior: GaussianPrior) -> np.ndarray:
    """Inflated inverse Hessian of -log posterior at ``center``; the prior covariance if not positive definite."""
    hess = -_numerical_hessian(log_post, center)
    hess = 0.5 * (hess + hess.T)
    try:
        cov = linalg.inv(hess)
        linalg.cholesky(cov, lower=True)
    except (linalg.LinAlgError, ValueError):
        logger.warning("Laplace Hessian not positive definite; using the prior covariance")
        return prior.cov.copy()
    if not np.all(np.isfinite(cov)):
        return prior.cov.copy()
    return _COV_INFLATION * cov


def importance_log_evidence(
    log_lik,
    prior: GaussianPrior,
    n_samples: int = N_IS,
    seed=None,
    center: np.ndarray | None = None,
    n_search: int = 2000,
    df: float = 5.0,
    defensive_weight: float = 0.1,
    workers: int = 1,
) -> ImportanceEvidence:
    """Self-normalised importance estimate of ln Z with a Student-t proposal at the MAP.

    Without ``center`` the MAP is searched from ``n_search`` prior draws and polished.
    """
    rng = np.random.default_rng(seed)

    def log_post(x: np.ndarray) -> float:
        return float(log_lik(x)) + log_prior(prior, x)

    if center is None:
        starts = sample_prior(prior, n_search, rng)
        center = maximize_from_points(log_post, starts).vector
    cov = laplace_proposal_cov(log_post, np.asarray(center, dtype=float), prior)
    proposal = stats.multivariate_t(loc=center, shape=cov, df=df)

    from_prior = rng.random(n_samples) < defensive_weight
    points = np.empty((n_samples, prior.dim))
    points[from_prior] = sample_prior(prior, int(from_prior.sum()), rng)
    points[~from_prior] = proposal.rvs(size=int((~from_prior).sum()), random_state=rng).reshape(-1, prior.dim)

    log_pi = log_prior(prior, points)
    with np.errstate(divide="ignore"):
        log_q = np.logaddexp(np.log1p(-defensive_weight) + proposal.logpdf(points), np.log(defensive_weight) + log_pi)
    log_w = batch_log_likelihood(log_lik, points, workers) + log_pi - log_q
    log_z = float(logsumexp(log_w) - np.log(n_samples))
    normalized = np.exp(log_w - logsumexp(log_w))
    ess = float(1.0 / np.sum(normalized * normalized))
    scaled = np.exp(log_w - log_w.max())
    rel_err = float(np.std(scaled) / (np.sqrt(n_samples) * np.mean(scaled)))
    logger.info("importance evidence: ln Z=%.4f, ess=%.1f, rel err=%.3g", log_z, ess, rel_err)
    return ImportanceEvidence(log_evidence=log_z, ess=ess, n_samples=n_samples, rel_std_error=rel_err, center=center)
