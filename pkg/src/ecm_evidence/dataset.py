"""Synthetic EIS dataset generation, frequency standardization and persistence."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from .artifacts import write_json_atomic, write_text_atomic
from .constants import DEFAULT_FREQ_MIN_HZ, DEFAULT_SPAN_DECADES, PRESETS
from .ecm_model import impedance
from .errors import DatasetSchemaError, InvalidGrid
from .models import Dataset, DatasetMeta, EcmParams, FrequencyStandardization, NoiseSpec, Theta

logger = logging.getLogger(__name__)

_REQUIRED_FIELDS = ("freqs_hz", "y_re", "y_im")
_META_FIELDS = ("true_model", "theta", "log_sigma2", "seed", "m", "preset")


def standardize(freqs_hz: np.ndarray) -> FrequencyStandardization:
    freqs = np.asarray(freqs_hz, dtype=float)
    if freqs.ndim != 1 or freqs.size < 2:
        raise InvalidGrid("frequency grid needs at least two points")
    if not np.all(np.isfinite(freqs)) or np.any(freqs <= 0):
        raise InvalidGrid("frequencies must be positive and finite")
    log_omega = np.log(2.0 * np.pi * freqs)
    mu = float(np.mean(log_omega))
    sigma = float(np.std(log_omega))
    if sigma <= 0:
        raise InvalidGrid("frequencies must be distinct")
    return FrequencyStandardization(mu_omega=mu, sigma_omega=sigma, omega_std=(log_omega - mu) / sigma)


def log_grid(m: int, freq_min_hz: float = DEFAULT_FREQ_MIN_HZ, span_decades: float = DEFAULT_SPAN_DECADES) -> np.ndarray:
    """Frequencies equispaced in ln(omega)."""
    if m < 2:
        raise InvalidGrid("frequency grid needs at least two points")
    if freq_min_hz <= 0 or span_decades <= 0:
        raise InvalidGrid("grid start and span must be positive")
    return np.logspace(np.log10(freq_min_hz), np.log10(freq_min_hz) + span_decades, m)


def generate(
    true_params: EcmParams,
    m: int,
    span_decades: float,
    noise: NoiseSpec,
    seed: int,
    freq_min_hz: float = DEFAULT_FREQ_MIN_HZ,
    preset: str | None = None,
) -> Dataset:
    freqs = log_grid(m, freq_min_hz, span_decades)
    std = standardize(freqs)
    re, im = impedance(true_params, std)
    rng = np.random.default_rng(seed)
    scale = np.sqrt(noise.sigma2)
    noise_re = rng.standard_normal(m) * scale
    noise_im = rng.standard_normal(m) * scale
    theta = Theta(ecm=true_params, log_sigma2=noise.log_sigma2)
    meta = DatasetMeta(
        true_model=true_params.n_pairs,
        theta=theta.to_vector().tolist(),
        log_sigma2=noise.log_sigma2,
        seed=seed,
        m=m,
        preset=preset,
    )
    logger.debug("generated dataset: m=%d, N=%d, ln sigma2=%.3f, seed=%s", m, true_params.n_pairs, noise.log_sigma2, seed)
    return Dataset(freqs_hz=freqs, y_obs_re=re + noise_re, y_obs_im=im + noise_im, std=std, meta=meta)


def preset_params(name: str, std: FrequencyStandardization) -> tuple[EcmParams, NoiseSpec]:
    """Circuit and noise for a named scenario on the given grid."""
    try:
        preset = PRESETS[name]
    except KeyError as exc:
        raise ValueError(f"unknown preset '{name}'") from exc
    tau_std = np.asarray(preset["peak_offsets"], dtype=float) / std.sigma_omega
    params = EcmParams.from_ratios(preset["r_total"], np.asarray(preset["r"]), tau_std)
    return params, NoiseSpec(preset["log_sigma2"])


def generate_preset(
    name: str,
    seed: int,
    m: int,
    span_decades: float = DEFAULT_SPAN_DECADES,
    freq_min_hz: float = DEFAULT_FREQ_MIN_HZ,
) -> Dataset:
    std = standardize(log_grid(m, freq_min_hz, span_decades))
    params, noise = preset_params(name, std)
    return generate(params, m, span_decades, noise, seed, freq_min_hz=freq_min_hz, preset=name)


def true_theta(data: Dataset) -> Theta | None:
    if not data.is_synthetic:
        return None
    return Theta.from_vector(np.asarray(data.meta.theta), data.meta.true_model)


def to_dict(data: Dataset) -> dict:
    meta = data.meta
    return {
        "freqs_hz": data.freqs_hz.tolist(),
        "y_re": data.y_obs_re.tolist(),
        "y_im": data.y_obs_im.tolist(),
        "meta": {name: getattr(meta, name) for name in _META_FIELDS},
    }


def _float_vector(payload: dict, name: str) -> np.ndarray:
    if name not in payload:
        raise DatasetSchemaError(name)
    try:
        values = np.asarray(payload[name], dtype=float)
    except (TypeError, ValueError) as exc:
        raise DatasetSchemaError(name, f"dataset field '{name}' must be a list of numbers") from exc
    if values.ndim != 1:
        raise DatasetSchemaError(name, f"dataset field '{name}' must be a flat list")
    return values


def _meta_from_dict(raw: object) -> DatasetMeta:
    if raw is None:
        return DatasetMeta()
    if not isinstance(raw, dict):
        raise DatasetSchemaError("meta", "dataset field 'meta' must be an object")
    known = {name: raw.get(name) for name in _META_FIELDS}
    return DatasetMeta(**known)


def from_dict(payload: dict) -> Dataset:
    if not isinstance(payload, dict):
        raise DatasetSchemaError("(root)", "dataset must be a JSON object")
    freqs, y_re, y_im = (_float_vector(payload, name) for name in _REQUIRED_FIELDS)
    if not (freqs.size == y_re.size == y_im.size):
        raise DatasetSchemaError("y_re", "dataset vectors must have equal length")
    if np.any(np.diff(freqs) <= 0):
        raise InvalidGrid("frequencies must be strictly increasing")
    return Dataset(
        freqs_hz=freqs,
        y_obs_re=y_re,
        y_obs_im=y_im,
        std=standardize(freqs),
        meta=_meta_from_dict(payload.get("meta")),
    )


def save(data: Dataset, path: Path | str) -> None:
    write_json_atomic(Path(path), to_dict(data))


def load(path: Path | str) -> Dataset:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetSchemaError("(root)", f"invalid JSON in {path}: {exc}") from exc
    return from_dict(payload)


def write_nyquist_csv(freqs_hz: np.ndarray, y_re: np.ndarray, y_im: np.ndarray, output) -> None:
    writer = csv.writer(output)
    writer.writerow(["freq_hz", "y_re", "y_im"])
    for f, re, im in zip(freqs_hz, y_re, y_im):
        writer.writerow([repr(float(f)), repr(float(re)), repr(float(im))])


def save_csv(data: Dataset, path: Path | str) -> None:
    write_text_atomic(
        Path(path),
        lambda stream: write_nyquist_csv(data.freqs_hz, data.y_obs_re, data.y_obs_im, stream),
    )
