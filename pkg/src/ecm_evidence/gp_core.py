"""Exact Gaussian-process regression with a squared-exponential ARD kernel."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import cdist

from .constants import (
    GP_MAX_FIT_POINTS,
    GP_RESTARTS,
    JITTER_FACTOR,
    JITTER_MAX,
    JITTER_START,
    LENGTHSCALE_BOUNDS,
    OUTPUT_SCALE_BOUNDS,
    PREDICT_CHUNK,
)
from .errors import CholeskyFailure

logger = logging.getLogger(__name__)

_FIT_JITTER = 1e-6


@dataclass(frozen=True)
class Kernel:
    output_scale: float
    lengthscales: np.ndarray
    variant: str = "squared-exponential"

    def __post_init__(self) -> None:
        lengthscales = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if not (np.isfinite(self.output_scale) and self.output_scale > 0):
            raise ValueError("output_scale must be positive and finite")
        if not (np.all(np.isfinite(lengthscales)) and np.all(lengthscales > 0)):
            raise ValueError("lengthscales must be positive and finite")
        object.__setattr__(self, "output_scale", float(self.output_scale))
        object.__setattr__(self, "lengthscales", lengthscales)

    @property
    def dim(self) -> int:
        return int(self.lengthscales.size)

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(a) / self.lengthscales
        b = np.atleast_2d(b) / self.lengthscales
        return self.output_scale * np.exp(-0.5 * cdist(a, b, "sqeuclidean"))


@dataclass(frozen=True)
class GpState:
    """Zero-mean GP conditioned on noise-free observations plus jitter."""

    kernel: Kernel
    inputs: np.ndarray
    targets: np.ndarray
    jitter: float
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return int(self.targets.size)

    @property
    def dim(self) -> int:
        return self.kernel.dim


def _cholesky_with_jitter(gram: np.ndarray, start: float, scale: float) -> tuple[np.ndarray, float]:
    jitter = start
    ceiling = max(JITTER_MAX * scale, start)
    eye = np.eye(gram.shape[0])
    while True:
        try:
            return linalg.cholesky(gram + jitter * eye, lower=True), jitter
        except linalg.LinAlgError:
            if jitter >= ceiling:
                raise CholeskyFailure(f"kernel matrix not positive definite at jitter {jitter:.3g}") from None
            jitter = min(jitter * JITTER_FACTOR, ceiling)
            logger.debug("cholesky failed, escalating jitter to %.3g", jitter)


def build_state(
    kernel: Kernel,
    inputs: np.ndarray,
    targets: np.ndarray,
    jitter: float | None = None,
) -> GpState:
    inputs = np.asarray(inputs, dtype=float).reshape(-1, kernel.dim)
    targets = np.asarray(targets, dtype=float).ravel()
    if inputs.shape[0] != targets.size:
        raise ValueError("inputs and targets disagree in length")
    start = JITTER_START * kernel.output_scale if jitter is None else jitter
    if targets.size == 0:
        empty = np.zeros((0, 0))
        return GpState(kernel, inputs, targets, start, empty, np.zeros(0))
    chol, used = _cholesky_with_jitter(kernel(inputs, inputs), start, kernel.output_scale)
    if used > start:
        logger.warning("GP jitter escalated from %.3g to %.3g", start, used)
    alpha = linalg.cho_solve((chol, True), targets)
    return GpState(kernel, inputs, targets, used, chol, alpha)


def _chunks(n: int):
    for start in range(0, n, PREDICT_CHUNK):
        yield slice(start, min(start + PREDICT_CHUNK, n))


def predict_mean(state: GpState, query_points: np.ndarray) -> np.ndarray:
    query_points = np.atleast_2d(query_points)
    if query_points.shape[1] != state.dim:
        raise ValueError(f"query dimension {query_points.shape[1]} != {state.dim}")
    if state.n == 0:
        return np.zeros(len(query_points))
    out = np.empty(len(query_points))
    for part in _chunks(len(query_points)):
        out[part] = state.kernel(query_points[part], state.inputs) @ state.alpha
    return out


def whitened_cross(state: GpState, points: np.ndarray) -> np.ndarray:
    """L^-1 K(observed, points); shape (n, len(points))."""
    if state.n == 0:
        return np.zeros((0, len(points)))
    return linalg.solve_triangular(state.chol, state.kernel(state.inputs, points), lower=True)


def predict_cov(state: GpState, a_points: np.ndarray, b_points: np.ndarray) -> np.ndarray:
    a_points = np.atleast_2d(a_points)
    b_points = np.atleast_2d(b_points)
    prior = state.kernel(a_points, b_points)
    if state.n == 0:
        return prior
    va = whitened_cross(state, a_points)
    vb = va if b_points is a_points else whitened_cross(state, b_points)
    cov = prior - va.T @ vb
    if a_points.shape == b_points.shape and np.array_equal(a_points, b_points):
        cov[np.diag_indices_from(cov)] = np.maximum(np.diag(cov), 0.0)
    return cov


def predict_mean_var(state: GpState, query_points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and marginal variance, chunked over query points."""
    query_points = np.atleast_2d(query_points)
    mean = np.empty(len(query_points))
    var = np.empty(len(query_points))
    for part in _chunks(len(query_points)):
        block = query_points[part]
        if state.n == 0:
            mean[part] = 0.0
            var[part] = state.kernel.output_scale
            continue
        cross = state.kernel(block, state.inputs)
        mean[part] = cross @ state.alpha
        v = linalg.solve_triangular(state.chol, cross.T, lower=True)
        var[part] = state.kernel.output_scale - np.sum(v * v, axis=0)
    return mean, np.maximum(var, 0.0)


def _neg_log_marginal(log_params: np.ndarray, inputs: np.ndarray, targets: np.ndarray, sq_dists: np.ndarray):
    scale = np.exp(log_params[0])
    lengthscales = np.exp(log_params[1:])
    scaled = sq_dists / lengthscales**2
    shape = np.exp(-0.5 * np.sum(scaled, axis=2))
    gram = scale * shape
    n = targets.size
    gram[np.diag_indices(n)] += _FIT_JITTER * scale
    try:
        chol = linalg.cholesky(gram, lower=True)
    except linalg.LinAlgError:
        return 1e25, np.zeros_like(log_params)
    alpha = linalg.cho_solve((chol, True), targets)
    nll = 0.5 * targets @ alpha + np.sum(np.log(np.diag(chol))) + 0.5 * n * np.log(2.0 * np.pi)
    inner = np.outer(alpha, alpha) - linalg.cho_solve((chol, True), np.eye(n))
    grad = np.empty_like(log_params)
    grad[0] = -0.5 * np.sum(inner * gram)
    base = scale * shape
    for k in range(lengthscales.size):
        grad[1 + k] = -0.5 * np.sum(inner * (base * scaled[:, :, k]))
    return float(nll), grad


def _fit_subset(inputs: np.ndarray, targets: np.ndarray, max_points: int, rng: np.random.Generator) -> np.ndarray:
    n = targets.size
    if n <= max_points:
        return np.arange(n)
    top = np.argsort(targets, kind="stable")[::-1][: max_points // 2]
    rest = np.setdiff1d(np.arange(n), top)
    extra = rng.choice(rest, size=max_points - top.size, replace=False)
    return np.sort(np.concatenate((top, extra)))


def fit_hyperparams(
    inputs: np.ndarray,
    targets: np.ndarray,
    restarts: int = GP_RESTARTS,
    seed=None,
    initial: Kernel | None = None,
    max_points: int = GP_MAX_FIT_POINTS,
) -> Kernel:
    """Maximize the log marginal likelihood with multi-start L-BFGS-B in log space.

    Never fails hard: the best kernel found (or the starting one) is returned.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.asarray(targets, dtype=float).ravel()
    if targets.size < 2:
        raise ValueError("hyperparameter fitting needs at least two observations")
    rng = np.random.default_rng(seed)
    idx = _fit_subset(inputs, targets, max_points, rng)
    x, y = inputs[idx], targets[idx]
    dim = x.shape[1]
    sq_dists = (x[:, None, :] - x[None, :, :]) ** 2

    spread = np.std(x, axis=0)
    spread = np.where(spread > 0, spread, 1.0)
    if initial is None:
        initial = Kernel(output_scale=max(float(np.var(y)), OUTPUT_SCALE_BOUNDS[0] * 10), lengthscales=spread)
    bounds = [tuple(np.log(OUTPUT_SCALE_BOUNDS))] + [tuple(np.log(LENGTHSCALE_BOUNDS))] * dim
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    starts = [np.clip(np.log(np.concatenate(([initial.output_scale], initial.lengthscales))), lo, hi)]
    for _ in range(max(restarts - 1, 0)):
        log_scale = np.log(max(float(np.var(y)), 1e-6)) + rng.normal(0.0, 1.0)
        log_ls = np.log(spread) + rng.uniform(-2.0, 1.0, size=dim)
        starts.append(np.clip(np.concatenate(([log_scale], log_ls)), lo, hi))

    best_x, best_f = starts[0], _neg_log_marginal(starts[0], x, y, sq_dists)[0]
    for start in starts:
        try:
            result = optimize.minimize(
                _neg_log_marginal,
                start,
                args=(x, y, sq_dists),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
            )
        except (ValueError, linalg.LinAlgError) as exc:
            logger.debug("hyperparameter restart failed: %s", exc)
            continue
        if np.isfinite(result.fun) and result.fun < best_f:
            best_x, best_f = result.x, float(result.fun)
    kernel = Kernel(output_scale=float(np.exp(best_x[0])), lengthscales=np.exp(best_x[1:]))
    logger.debug("fitted kernel: scale=%.3g, lengthscales=%s, nll=%.4g", kernel.output_scale, kernel.lengthscales, best_f)
    return kernel
