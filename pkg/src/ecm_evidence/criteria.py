"""Competing selection criteria, model ranking and sweep analyses."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import optimize, stats
from scipy.special import logsumexp

from .basq_engine import BasqResult, posterior_samples
from .bayes_core import channel_errors, log_likelihood, log_prior, pointwise_log_likelihood, residuals
from .constants import ELPD_MIN_ESS, ELPD_SAMPLES, JEFFREYS_SCALE, LIKELIHOOD_RESIDUAL, POLISH_MAX_ITER
from .errors import DegenerateParams, DegenerateWeights
from .models import Dataset, GaussianPrior, Theta
from .problems import Problem, ProblemCode

logger = logging.getLogger(__name__)

SELECTION_DIRECTIONS = {"lem": "max", "rmse": "min", "bic": "min", "elpd": "max"}
CORRELATION_COLUMNS = ("m", "js", "snr", "lem", "lev")


@dataclass(frozen=True)
class MapEstimate:
    vector: np.ndarray
    value: float
    index: int
    polished: bool


def maximize_from_points(
    objective: Callable[[np.ndarray], float],
    points: np.ndarray,
    values: np.ndarray | None = None,
    polish: bool = True,
    max_iter: int = POLISH_MAX_ITER,
) -> MapEstimate:
    """Best point by ``objective`` (first on ties), then a Nelder-Mead polish kept only if it improves."""
    points = np.atleast_2d(points)
    if values is None:
        values = np.array([objective(point) for point in points])
    values = np.where(np.isfinite(values), values, -np.inf)
    index = int(np.argmax(values))
    start, best = points[index].copy(), float(values[index])
    if not polish:
        return MapEstimate(start, best, index, False)
    result = optimize.minimize(
        lambda x: -objective(x),
        start,
        method="Nelder-Mead",
        options={"maxiter": max_iter, "xatol": 1e-8, "fatol": 1e-10},
    )
    if np.isfinite(result.fun) and -result.fun > best:
        return MapEstimate(np.asarray(result.x, dtype=float), float(-result.fun), index, True)
    return MapEstimate(start, best, index, False)


def map_estimate(
    points: np.ndarray,
    data: Dataset,
    prior: GaussianPrior,
    model_order: int,
    form: str = LIKELIHOOD_RESIDUAL,
    log_liks: np.ndarray | None = None,
    polish: bool = True,
) -> tuple[Theta, MapEstimate]:
    """MAP over observed points by unnormalised log posterior, polished locally."""
    points = np.atleast_2d(points)

    def objective(vector: np.ndarray) -> float:
        theta = Theta.from_vector(vector, model_order)
        return log_likelihood(theta, data, model_order, form) + log_prior(prior, vector)

    values = None
    if log_liks is not None:
        values = np.asarray(log_liks, dtype=float) + log_prior(prior, points)
    estimate = maximize_from_points(objective, points, values, polish=polish)
    return Theta.from_vector(estimate.vector, model_order), estimate


def rmse(theta: Theta, data: Dataset, form: str = LIKELIHOOD_RESIDUAL) -> float:
    """Root mean error over all 2m channel residuals, in the likelihood's error convention."""
    try:
        err = channel_errors(residuals(theta, data), form)
    except DegenerateParams:
        return np.inf
    return float(np.sqrt(np.mean(err * err)))


def bic_from_log_lik(log_lik: float, dim: int, m: int) -> float:
    return float(dim * np.log(m) - 2.0 * log_lik)


def bic(theta: Theta, data: Dataset, model_order: int, form: str = LIKELIHOOD_RESIDUAL) -> float:
    return bic_from_log_lik(log_likelihood(theta, data, model_order, form), 2 + 2 * model_order, data.m)


def elpd(
    points: np.ndarray,
    data: Dataset,
    model_order: int,
    weights: np.ndarray | None = None,
    form: str = LIKELIHOOD_RESIDUAL,
    min_ess: float | None = None,
) -> float:
    """sum_j ln sum_s w_s N(err_js) over posterior samples; uniform weights when none given."""
    points = np.atleast_2d(points)
    if weights is None:
        weights = np.full(len(points), 1.0 / len(points))
    weights = np.asarray(weights, dtype=float)
    weights = weights / weights.sum()
    if min_ess is not None:
        ess = float(1.0 / np.sum(weights * weights))
        if ess < min_ess:
            raise DegenerateWeights(ess, min_ess)
    pointwise = np.stack(
        [pointwise_log_likelihood(Theta.from_vector(point, model_order), data, form) for point in points]
    )
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    logger.debug("ELPD over %d posterior samples", len(points))
    return float(np.sum(logsumexp(log_w[:, None] + pointwise, axis=0)))


@dataclass(frozen=True)
class ModelCriteria:
    model_order: int
    lem: float = np.nan
    lev: float = np.nan
    lev_standardized: float = np.nan
    rmse: float = np.nan
    bic: float = np.nan
    elpd: float = np.nan
    log_lik_map: float = np.nan
    theta_map: list[float] = field(default_factory=list)
    n_evals: int = 0
    wall_time_s: float = 0.0
    error: str | None = None
    elpd_error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class CriteriaReport:
    models: list[ModelCriteria]
    selected_by: dict[str, int | None]
    evidence_weights: dict[int, float]
    bayes_factor: tuple[float, str] | None = None
    problems: list[Problem] = field(default_factory=list)


def select(models: list[ModelCriteria], criterion: str) -> int | None:
    """Winning model order for one criterion; the first model wins ties."""
    direction = SELECTION_DIRECTIONS[criterion]
    candidates = [(getattr(model, criterion), model.model_order) for model in models if model.ok]
    candidates = [(value, order) for value, order in candidates if np.isfinite(value)]
    if not candidates:
        return None
    pick = max if direction == "max" else min
    return pick(candidates, key=lambda item: item[0])[1]


def evidence_weights(models: list[ModelCriteria]) -> dict[int, float]:
    """exp-normalised LEM over models with a finite evidence."""
    usable = [model for model in models if model.ok and np.isfinite(model.lem)]
    if not usable:
        return {}
    lems = np.array([model.lem for model in usable])
    weights = np.exp(lems - logsumexp(lems))
    return {model.model_order: float(weight) for model, weight in zip(usable, weights)}


def jeffreys_label(log_bayes_factor: float) -> str:
    magnitude = abs(log_bayes_factor)
    for threshold, label in JEFFREYS_SCALE:
        if magnitude < threshold:
            return label
    return JEFFREYS_SCALE[-1][1]


def build_report(models: list[ModelCriteria], problems: list[Problem] | None = None) -> CriteriaReport:
    selected = {criterion: select(models, criterion) for criterion in SELECTION_DIRECTIONS}
    ranked = sorted(
        (model for model in models if model.ok and np.isfinite(model.lem)), key=lambda model: model.lem, reverse=True
    )
    bayes_factor = None
    if len(ranked) >= 2:
        log_bf = ranked[0].lem - ranked[1].lem
        bayes_factor = (float(log_bf), jeffreys_label(log_bf))
    return CriteriaReport(
        models=models,
        selected_by=selected,
        evidence_weights=evidence_weights(models),
        bayes_factor=bayes_factor,
        problems=list(problems or []),
    )


@dataclass(frozen=True)
class SensitivityRecord:
    index: int
    m: int
    r_total: float
    r_prime: float
    tau_std: float
    log_sigma2: float
    js: float
    snr: float
    lem: float
    lev: float
    bic: float
    z_pred: float = np.nan
    residual: float = np.nan


@dataclass(frozen=True)
class CorrelationResult:
    columns: tuple[str, ...]
    matrix: np.ndarray
    zero_variance: tuple[str, ...] = ()
    n_records: int = 0


def _finite_records(records: list[SensitivityRecord], columns) -> list[SensitivityRecord]:
    return [rec for rec in records if all(np.isfinite(getattr(rec, name)) for name in columns)]


def correlation_matrix(
    records: list[SensitivityRecord],
    columns: tuple[str, ...] = CORRELATION_COLUMNS,
    problems: list[Problem] | None = None,
) -> CorrelationResult:
    """Pearson coefficients; a constant column correlates 0 with everything else."""
    usable = _finite_records(records, columns)
    if len(usable) < 3:
        raise ValueError(f"correlation needs at least 3 finite records, got {len(usable)}")
    table = np.array([[getattr(rec, name) for name in columns] for rec in usable], dtype=float)
    centered = table - table.mean(axis=0)
    norms = np.sqrt(np.sum(centered * centered, axis=0))
    flat = norms <= 0
    safe = np.where(flat, 1.0, norms)
    matrix = (centered.T @ centered) / np.outer(safe, safe)
    matrix[flat, :] = 0.0
    matrix[:, flat] = 0.0
    np.fill_diagonal(matrix, 1.0)
    matrix = np.clip(0.5 * (matrix + matrix.T), -1.0, 1.0)
    flagged = tuple(name for name, is_flat in zip(columns, flat) if is_flat)
    if flagged and problems is not None:
        problems.append(Problem(ProblemCode.ZERO_VARIANCE, f"constant columns: {', '.join(flagged)}"))
    return CorrelationResult(columns=tuple(columns), matrix=matrix, zero_variance=flagged, n_records=len(usable))


def bic_regression(records: list[SensitivityRecord]) -> tuple[float, float, list[SensitivityRecord]]:
    """Least squares of LEM on BIC; each record gets its prediction and squared residual."""
    usable = _finite_records(records, ("bic", "lem"))
    if len(usable) < 3:
        raise ValueError(f"regression needs at least 3 finite records, got {len(usable)}")
    x = np.array([rec.bic for rec in usable])
    y = np.array([rec.lem for rec in usable])
    if np.ptp(x) == 0:
        slope, intercept = 0.0, float(y.mean())
    else:
        fit = stats.linregress(x, y)
        slope, intercept = float(fit.slope), float(fit.intercept)
    updated = []
    for rec in records:
        if not (np.isfinite(rec.bic) and np.isfinite(rec.lem)):
            updated.append(rec)
            continue
        z_pred = slope * rec.bic + intercept
        updated.append(replace(rec, z_pred=z_pred, residual=(rec.lem - z_pred) ** 2))
    return slope, intercept, updated


def evaluate_model(
    result: BasqResult,
    data: Dataset,
    prior: GaussianPrior,
    model_order: int,
    form: str = LIKELIHOOD_RESIDUAL,
    n_samples: int = ELPD_SAMPLES,
    seed=None,
    problems: list[Problem] | None = None,
) -> ModelCriteria:
    """All criteria for one trained model; ELPD uses surrogate posterior samples."""
    theta_map, estimate = map_estimate(result.inputs, data, prior, model_order, form, log_liks=result.log_liks)
    log_lik_map = log_likelihood(theta_map, data, model_order, form)
    elpd_error = None
    try:
        samples = posterior_samples(
            result.surrogate, prior, n_samples, seed=seed, proposal=result.proposal, min_ess=ELPD_MIN_ESS
        )
        elpd_value = elpd(samples.points, data, model_order, samples.weights, form, min_ess=ELPD_MIN_ESS)
        logger.info("N=%d: ELPD from %d samples (ess %.1f)", model_order, samples.size, samples.ess)
    except DegenerateWeights as exc:
        logger.warning("N=%d: ELPD unavailable: %s", model_order, exc)
        if problems is not None:
            problems.append(
                Problem(ProblemCode.ELPD_UNAVAILABLE, f"posterior samples: {exc}", {"model_order": str(model_order)})
            )
        elpd_value, elpd_error = np.nan, f"{type(exc).__name__}: {exc}"
    snap = result.estimate
    return ModelCriteria(
        model_order=model_order,
        lem=snap.lem,
        lev=snap.lev,
        lev_standardized=snap.lev_standardized,
        rmse=rmse(theta_map, data, form),
        bic=bic_from_log_lik(log_lik_map, 2 + 2 * model_order, data.m),
        elpd=elpd_value,
        log_lik_map=log_lik_map,
        theta_map=estimate.vector.tolist(),
        n_evals=snap.n_evals,
        wall_time_s=snap.wall_time_s,
        elpd_error=elpd_error,
    )
