"""Four-layer warped GP over the likelihood (e/f/g/h spaces).

    e  likelihood                        f = e / exp(beta)
    f  normalised likelihood             g = sqrt(2 (f - alpha))
    g  square-root normalised likelihood h = log(g + 1)
    h  base GP

Moments are pushed back from h to f by moment matching (log-normal for the log layer,
Gaussian square moments for the square-root layer). The e layer is only ever
represented in the log domain. Any layer can be switched off for ablation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .constants import PREDICT_CHUNK, RADICAND_TOLERANCE
from .errors import NegativeRadicand, WarpOverflow
from .gp_core import GpState, Kernel, build_state, fit_hyperparams, predict_cov, predict_mean, predict_mean_var

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WarpConfig:
    log: bool = True
    sqrt: bool = True
    scaling: bool = True

    @property
    def label(self) -> str:
        active = [name for name, on in (("log", self.log), ("sqrt", self.sqrt), ("scaling", self.scaling)) if on]
        return "+".join(active) if active else "none"


@dataclass(frozen=True)
class WarpConstants:
    alpha: float
    beta: float


@dataclass(frozen=True)
class WarpedSurrogate:
    base: GpState
    consts: WarpConstants
    config: WarpConfig
    log_liks: np.ndarray

    @property
    def inputs(self) -> np.ndarray:
        return self.base.inputs


@dataclass(frozen=True)
class DiagMoments:
    mu_h: np.ndarray
    var_h: np.ndarray
    mu_g: np.ndarray
    var_g: np.ndarray
    mu_f: np.ndarray
    var_f: np.ndarray


def compute_constants(log_liks: np.ndarray, config: WarpConfig = WarpConfig()) -> WarpConstants:
    y = np.asarray(log_liks, dtype=float)
    beta = float(np.max(y)) if config.scaling else 0.0
    with np.errstate(over="ignore", under="ignore"):
        f = np.exp(y - beta)
    if not np.all(np.isfinite(f)):
        raise WarpOverflow(f"likelihood exp({float(np.max(y)):.4g}) overflows without the scaling layer")
    return WarpConstants(alpha=float(np.min(f)), beta=beta)


def forward(log_lik_values: np.ndarray, consts: WarpConstants, config: WarpConfig = WarpConfig()) -> np.ndarray:
    """Log-likelihood values to h-space targets."""
    y = np.asarray(log_lik_values, dtype=float)
    with np.errstate(over="ignore", under="ignore"):
        f = np.exp(y - consts.beta)
    if not np.all(np.isfinite(f)):
        raise WarpOverflow("likelihood values overflow the f space")
    shifted = f - consts.alpha
    if np.any(shifted < -RADICAND_TOLERANCE):
        raise NegativeRadicand(f"f below alpha by {float(-shifted.min()):.3g}")
    shifted = np.maximum(shifted, 0.0)
    g = np.sqrt(2.0 * shifted) if config.sqrt else shifted
    return np.log1p(g) if config.log else g


def backward(h_values: np.ndarray, consts: WarpConstants, config: WarpConfig = WarpConfig()) -> np.ndarray:
    """h-space values back to log-likelihood values."""
    h = np.asarray(h_values, dtype=float)
    g = np.expm1(h) if config.log else h
    f = consts.alpha + 0.5 * g * g if config.sqrt else consts.alpha + g
    with np.errstate(divide="ignore"):
        return np.log(f) + consts.beta


def fit_surrogate(
    inputs: np.ndarray,
    log_liks: np.ndarray,
    config: WarpConfig = WarpConfig(),
    initial: Kernel | None = None,
    restarts: int = 3,
    seed=None,
    fit: bool = True,
) -> WarpedSurrogate:
    """Re-warp every observation with fresh constants and condition the base GP."""
    consts = compute_constants(log_liks, config)
    targets = forward(log_liks, consts, config)
    if fit or initial is None:
        kernel = fit_hyperparams(inputs, targets, restarts=restarts, seed=seed, initial=initial)
    else:
        kernel = initial
    base = build_state(kernel, inputs, targets)
    logger.debug("surrogate: n=%d, alpha=%.3g, beta=%.6g, warp=%s", base.n, consts.alpha, consts.beta, config.label)
    return WarpedSurrogate(base=base, consts=consts, config=config, log_liks=np.asarray(log_liks, dtype=float))


def lognormal_moments(mu_h: np.ndarray, cov_h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of exp(h) - 1 for Gaussian h."""
    shifted = np.exp(mu_h + 0.5 * np.diag(cov_h))
    return shifted - 1.0, np.outer(shifted, shifted) * np.expm1(cov_h)


def square_moments(mu_g: np.ndarray, cov_g: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of alpha + g^2 / 2 for Gaussian g."""
    mu_f = alpha + 0.5 * (mu_g * mu_g + np.diag(cov_g))
    cov_f = 0.5 * cov_g * cov_g + np.outer(mu_g, mu_g) * cov_g
    cov_f[np.diag_indices_from(cov_f)] = np.maximum(np.diag(cov_f), 0.0)
    return mu_f, cov_f


def moments_h(surrogate: WarpedSurrogate, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    points = np.atleast_2d(points)
    return predict_mean(surrogate.base, points), predict_cov(surrogate.base, points, points)


def moments_g(surrogate: WarpedSurrogate, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu_h, cov_h = moments_h(surrogate, points)
    if not surrogate.config.log:
        return mu_h, cov_h
    return lognormal_moments(mu_h, cov_h)


def moments_f(surrogate: WarpedSurrogate, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu_g, cov_g = moments_g(surrogate, points)
    alpha = surrogate.consts.alpha
    if not surrogate.config.sqrt:
        cov_f = cov_g.copy()
        cov_f[np.diag_indices_from(cov_f)] = np.maximum(np.diag(cov_f), 0.0)
        return alpha + mu_g, cov_f
    return square_moments(mu_g, cov_g, alpha)


def moments_e_log(surrogate: WarpedSurrogate, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(ln mu_e, ln |sigma_e|, sign sigma_e) without ever forming exp(beta)."""
    mu_f, cov_f = moments_f(surrogate, points)
    beta = surrogate.consts.beta
    with np.errstate(divide="ignore"):
        return np.log(mu_f) + beta, np.log(np.abs(cov_f)) + 2.0 * beta, np.sign(cov_f)


def diag_moments(surrogate: WarpedSurrogate, points: np.ndarray) -> DiagMoments:
    """Marginal moments in every space, without forming covariance matrices."""
    mu_h, var_h = predict_mean_var(surrogate.base, np.atleast_2d(points))
    if surrogate.config.log:
        shifted = np.exp(mu_h + 0.5 * var_h)
        mu_g, var_g = shifted - 1.0, shifted * shifted * np.expm1(var_h)
    else:
        mu_g, var_g = mu_h, var_h
    alpha = surrogate.consts.alpha
    if surrogate.config.sqrt:
        mu_f = alpha + 0.5 * (mu_g * mu_g + var_g)
        var_f = 0.5 * var_g * var_g + mu_g * mu_g * var_g
    else:
        mu_f, var_f = alpha + mu_g, var_g
    return DiagMoments(mu_h, var_h, mu_g, var_g, mu_f, np.maximum(var_f, 0.0))


def cross_cov_g(
    surrogate: WarpedSurrogate,
    points: np.ndarray,
    landmarks: np.ndarray,
    moments: DiagMoments | None = None,
) -> np.ndarray:
    """g-space predictive covariance between ``points`` and ``landmarks``.

    ``moments`` may carry precomputed marginals of ``points``.
    """
    points = np.atleast_2d(points)
    landmarks = np.atleast_2d(landmarks)
    mu_l, var_l = predict_mean_var(surrogate.base, landmarks)
    shift_l = np.exp(mu_l + 0.5 * var_l)
    out = np.empty((len(points), len(landmarks)))
    for start in range(0, len(points), PREDICT_CHUNK):
        block = points[start : start + PREDICT_CHUNK]
        cov_h = predict_cov(surrogate.base, block, landmarks)
        if surrogate.config.log:
            if moments is None:
                mu_b, var_b = predict_mean_var(surrogate.base, block)
            else:
                mu_b = moments.mu_h[start : start + len(block)]
                var_b = moments.var_h[start : start + len(block)]
            shift_b = np.exp(mu_b + 0.5 * var_b)
            out[start : start + len(block)] = np.outer(shift_b, shift_l) * np.expm1(cov_h)
        else:
            out[start : start + len(block)] = cov_h
    return out


def log_posterior(
    surrogate: WarpedSurrogate,
    points: np.ndarray,
    log_prior_values: np.ndarray,
    lem: float,
    route: str = "f",
) -> np.ndarray:
    """Surrogate log posterior density mu(Theta) pi(Theta) / E[mu], via f or e space."""
    beta = surrogate.consts.beta
    if route == "f":
        with np.errstate(divide="ignore"):
            log_mu_f = np.log(diag_moments(surrogate, points).mu_f)
        return log_mu_f + log_prior_values - (lem - beta)
    if route == "e":
        log_mu_e, _, _ = moments_e_log(surrogate, points)
        return log_mu_e + log_prior_values - lem
    raise ValueError(f"unknown route '{route}'")
