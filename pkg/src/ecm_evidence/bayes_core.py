"""Prior, likelihood and unnormalized posterior shared by all inference engines.

Each frequency contributes two residuals (real and imaginary channel), both with the
homoskedastic variance exp(log_sigma2). The default form places Gaussian noise on the
residual; the squared-error form evaluates the density at the squared residual.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .constants import (
    DEFAULT_PRIOR_MEAN,
    DEFAULT_PRIOR_STD,
    LIKELIHOOD_FORMS,
    LIKELIHOOD_RESIDUAL,
    LIKELIHOOD_SQUARED_ERROR,
    LOG_LIK_FLOOR,
)
from .ecm_model import impedance
from .errors import ConfigError, DegenerateParams
from .models import Dataset, GaussianPrior, Theta

logger = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))


def residuals(theta: Theta, data: Dataset) -> np.ndarray:
    """All 2m channel residuals y_obs - y_ecm; raises DegenerateParams."""
    re, im = impedance(theta.ecm, data.std)
    return np.concatenate((data.y_obs_re - re, data.y_obs_im - im))


def channel_errors(res: np.ndarray, form: str) -> np.ndarray:
    if form == LIKELIHOOD_RESIDUAL:
        return res
    if form == LIKELIHOOD_SQUARED_ERROR:
        return res * res
    raise ConfigError(f"unknown likelihood form '{form}', expected one of {LIKELIHOOD_FORMS}")


def pointwise_log_likelihood(
    theta: Theta,
    data: Dataset,
    form: str = LIKELIHOOD_RESIDUAL,
) -> np.ndarray:
    """Per-residual Gaussian log densities; degenerate params spread the floor evenly."""
    share = LOG_LIK_FLOOR / (2 * data.m)
    try:
        res = residuals(theta, data)
    except DegenerateParams:
        return np.full(2 * data.m, share)
    err = channel_errors(res, form)
    with np.errstate(over="ignore", invalid="ignore"):
        values = -0.5 * (_LOG_2PI + theta.log_sigma2) - 0.5 * err * err * np.exp(-theta.log_sigma2)
    return np.where(np.isfinite(values), np.maximum(values, share), share)


def log_likelihood(
    theta: Theta,
    data: Dataset,
    model_order: int,
    form: str = LIKELIHOOD_RESIDUAL,
) -> float:
    if theta.ecm.n_pairs != model_order:
        raise ValueError(f"theta has {theta.ecm.n_pairs} RC pairs, model order is {model_order}")
    try:
        res = residuals(theta, data)
    except DegenerateParams:
        return LOG_LIK_FLOOR
    err = channel_errors(res, form)
    n = err.size
    value = -0.5 * n * (_LOG_2PI + theta.log_sigma2) - 0.5 * float(np.dot(err, err)) * np.exp(-theta.log_sigma2)
    if not np.isfinite(value):
        return LOG_LIK_FLOOR
    return float(max(value, LOG_LIK_FLOOR))


@dataclass(frozen=True)
class EcmLogLikelihood:
    """Log-likelihood over flat parameter vectors for one dataset and model order."""

    data: Dataset
    model_order: int
    form: str = LIKELIHOOD_RESIDUAL

    @property
    def dim(self) -> int:
        return 2 + 2 * self.model_order

    def __call__(self, vector: np.ndarray) -> float:
        return log_likelihood(Theta.from_vector(vector, self.model_order), self.data, self.model_order, self.form)


def batch_log_likelihood(log_lik, points: np.ndarray, workers: int = 1) -> np.ndarray:
    """Evaluate a log-likelihood over rows of ``points``; results keep row order."""
    points = np.atleast_2d(points)
    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(log_lik, points))
    else:
        values = [log_lik(point) for point in points]
    return np.asarray(values, dtype=float)


def default_prior(model_order: int) -> GaussianPrior:
    dim = 2 + 2 * model_order
    return GaussianPrior(
        mean=np.full(dim, DEFAULT_PRIOR_MEAN),
        cov=np.eye(dim) * DEFAULT_PRIOR_STD**2,
    )


def prior_from_dict(payload: dict, model_order: int) -> GaussianPrior:
    """Prior from ``{"mean", "cov_diag"}`` or ``{"mean", "cov"}``.

    Entries given for a different dimension are rejected.
    """
    dim = 2 + 2 * model_order
    if not isinstance(payload, dict) or "mean" not in payload:
        raise ConfigError("prior specification needs a 'mean' entry")
    mean = np.asarray(payload["mean"], dtype=float)
    if "cov" in payload:
        cov = np.asarray(payload["cov"], dtype=float)
    elif "cov_diag" in payload:
        cov = np.diag(np.asarray(payload["cov_diag"], dtype=float))
    else:
        raise ConfigError("prior specification needs 'cov' or 'cov_diag'")
    if mean.shape != (dim,):
        raise ConfigError(f"prior mean has length {mean.size}, model order {model_order} needs {dim}")
    return GaussianPrior(mean=mean, cov=cov)


def prior_to_dict(prior: GaussianPrior) -> dict:
    return {"mean": prior.mean.tolist(), "cov": prior.cov.tolist()}


def log_prior(prior: GaussianPrior, x: np.ndarray) -> np.ndarray | float:
    """Exact multivariate normal log density; accepts one point or rows of points."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    z = linalg.solve_triangular(prior.chol, (rows - prior.mean).T, lower=True)
    values = -0.5 * (prior.dim * _LOG_2PI + prior.log_det) - 0.5 * np.sum(z * z, axis=0)
    return float(values[0]) if single else values


def sample_prior(prior: GaussianPrior, n: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, prior.dim))
    return prior.mean + z @ prior.chol.T


def log_posterior_unnorm(
    theta: Theta,
    data: Dataset,
    prior: GaussianPrior,
    model_order: int,
    form: str = LIKELIHOOD_RESIDUAL,
) -> float:
    return log_likelihood(theta, data, model_order, form) + log_prior(prior, theta.to_vector())
