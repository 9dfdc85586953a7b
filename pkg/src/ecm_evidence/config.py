"""Command configuration records and their resolution from JSON files and flags."""

from __future__ import annotations

import json
from dataclasses import MISSING, dataclass, field, fields
from pathlib import Path

from .constants import (
    BATCH_SIZE,
    CONV_TOL,
    DEFAULT_FREQ_MIN_HZ,
    DEFAULT_M,
    DEFAULT_SPAN_DECADES,
    DEFENSIVE_WEIGHT,
    ELPD_SAMPLES,
    LIKELIHOOD_FORMS,
    LIKELIHOOD_RESIDUAL,
    MAX_ITERS,
    N_IS,
    N_SUPER,
    PRESETS,
)
from .errors import ConfigError


CUSTOM_PRESET = "custom"


def _check_positive(name: str, value) -> None:
    if value is None or value <= 0:
        raise ConfigError(f"{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class EngineOptions:
    """Options shared by every command that runs the quadrature engine."""

    batch_size: int = BATCH_SIZE
    max_iters: int = MAX_ITERS
    conv_tol: float = CONV_TOL
    n_super: int = N_SUPER
    defensive_weight: float = DEFENSIVE_WEIGHT
    uncertainty_ratio: float = 1.0
    form: str = LIKELIHOOD_RESIDUAL
    workers: int = 1
    prior: dict | None = None

    def __post_init__(self) -> None:
        if self.form not in LIKELIHOOD_FORMS:
            raise ConfigError(f"unknown likelihood form '{self.form}', expected one of {LIKELIHOOD_FORMS}")
        _check_positive("workers", self.workers)


@dataclass(frozen=True)
class GenerateConfig:
    preset: str = "easy"
    r_total: float = 0.0
    r: tuple[float, ...] = ()
    tau_std: tuple[float, ...] = ()
    log_sigma2: float = -9.97
    m: int = DEFAULT_M
    span_decades: float = DEFAULT_SPAN_DECADES
    freq_min_hz: float = DEFAULT_FREQ_MIN_HZ
    output: str = "dataset.json"
    csv: bool = False

    def __post_init__(self) -> None:
        if self.preset != CUSTOM_PRESET and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset '{self.preset}', expected one of {sorted(PRESETS) + [CUSTOM_PRESET]}")
        if self.preset == CUSTOM_PRESET:
            if not self.r or len(self.r) != len(self.tau_std):
                raise ConfigError("custom circuits need --r and --tau-std of equal, non-zero length")
            if any(not 0.0 < value < 1.0 for value in self.r) or sum(self.r) >= 1.0:
                raise ConfigError("resistance ratios must lie in (0, 1) and sum below 1")
        if self.m < 2:
            raise ConfigError("m must be at least 2")
        _check_positive("span_decades", self.span_decades)
        _check_positive("freq_min_hz", self.freq_min_hz)


@dataclass(frozen=True)
class SelectConfig:
    dataset: str = ""
    model_orders: tuple[int, ...] = (1, 2, 3, 4)
    elpd_samples: int = ELPD_SAMPLES
    engine: EngineOptions = field(default_factory=EngineOptions)

    def __post_init__(self) -> None:
        if not self.dataset:
            raise ConfigError("select needs a dataset path")
        if not self.model_orders or any(order < 1 for order in self.model_orders):
            raise ConfigError("model orders must be positive integers")
        _check_positive("elpd_samples", self.elpd_samples)


@dataclass(frozen=True)
class IdentifyConfig:
    dataset: str = ""
    n_is: int = N_IS
    noise_mu_sigma: float | None = None
    noise_sigma_sigma: float = 0.5

    def __post_init__(self) -> None:
        if not self.dataset:
            raise ConfigError("identify needs a dataset path")
        if self.n_is < 10_000:
            raise ConfigError("n_is must be at least 10000")
        if self.noise_sigma_sigma < 0:
            raise ConfigError("noise_sigma_sigma must be non-negative")


@dataclass(frozen=True)
class SensitivityConfig:
    n_datasets: int = 256
    model_order: int = 2
    n_is: int = 100_000
    datasets_dir: str | None = None
    engine: EngineOptions = field(default_factory=lambda: EngineOptions(batch_size=50, max_iters=8))

    def __post_init__(self) -> None:
        if self.n_datasets < 3:
            raise ConfigError("a sweep needs at least 3 datasets")
        _check_positive("model_order", self.model_order)


@dataclass(frozen=True)
class BenchmarkConfig:
    dataset: str = ""
    model_order: int = 2
    budget: int = 2500
    oracle_samples: int = 1_000_000
    checkpoints: int = 10
    engine: EngineOptions = field(default_factory=EngineOptions)

    def __post_init__(self) -> None:
        if not self.dataset:
            raise ConfigError("benchmark needs a dataset path")
        _check_positive("model_order", self.model_order)
        if self.budget < 2 * self.engine.batch_size:
            raise ConfigError("budget must cover at least two batches")
        _check_positive("oracle_samples", self.oracle_samples)
        _check_positive("checkpoints", self.checkpoints)


@dataclass(frozen=True)
class AblationConfig:
    dataset: str = ""
    model_order: int = 2
    engine: EngineOptions = field(default_factory=EngineOptions)

    def __post_init__(self) -> None:
        if not self.dataset:
            raise ConfigError("ablation needs a dataset path")
        _check_positive("model_order", self.model_order)


def load_config_file(path: str | Path | None) -> dict:
    if path is None:
        return {}
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return payload


def _coerce(name: str, value, default):
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(value)
    if isinstance(default, bool) and not isinstance(value, bool):
        raise ConfigError(f"option '{name}' must be true or false")
    if isinstance(default, (int, float)) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"option '{name}' must be a number")
        if isinstance(default, int):
            if not float(value).is_integer():
                raise ConfigError(f"option '{name}' must be an integer")
            return int(value)
        return float(value)
    return value


def _field_default(item):
    if item.default is not MISSING:
        return item.default
    if item.default_factory is not MISSING:
        return item.default_factory()
    return None


def resolve(cls, file_values: dict, flag_values: dict):
    """Build ``cls`` from config-file values overridden by explicitly given flags.

    Nested ``engine`` options may be given flat; unknown keys are rejected.
    """
    own = {item.name: item for item in fields(cls)}
    engine_item = own.get("engine")
    engine_names = {item.name for item in fields(EngineOptions)} if engine_item else set()
    merged = dict(file_values)
    merged.update({key: value for key, value in flag_values.items() if value is not None})
    nested = dict(merged.pop("engine", {}) or {})
    top, engine_values = {}, {}
    for key, value in merged.items():
        if key in own and key != "engine":
            top[key] = _coerce(key, value, _field_default(own[key]))
        elif key in engine_names:
            engine_values[key] = value
        else:
            raise ConfigError(f"unknown option '{key}' for {cls.__name__}")
    if engine_item is not None:
        base = _field_default(engine_item)
        values = {item.name: getattr(base, item.name) for item in fields(EngineOptions)}
        for key, value in {**nested, **engine_values}.items():
            if key not in values:
                raise ConfigError(f"unknown engine option '{key}'")
            values[key] = _coerce(key, value, getattr(base, key))
        top["engine"] = EngineOptions(**values)
    try:
        return cls(**top)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
