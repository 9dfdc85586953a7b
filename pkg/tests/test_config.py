import json

import pytest

from ecm_evidence.config import (
    BenchmarkConfig,
    EngineOptions,
    GenerateConfig,
    IdentifyConfig,
    SelectConfig,
    SensitivityConfig,
    load_config_file,
    resolve,
)
from ecm_evidence.errors import ConfigError


def test_flags_override_the_file():
    config = resolve(SelectConfig, {"dataset": "a.json", "elpd_samples": 50}, {"dataset": "b.json", "elpd_samples": None})
    assert config.dataset == "b.json"
    assert config.elpd_samples == 50


def test_engine_options_may_be_flat_or_nested():
    file_values = {"dataset": "d.json", "engine": {"batch_size": 40, "conv_tol": 0.2}}
    config = resolve(SelectConfig, file_values, {"batch_size": 20})
    assert config.engine.batch_size == 20
    assert config.engine.conv_tol == 0.2
    assert config.engine.max_iters == EngineOptions().max_iters


def test_command_specific_engine_defaults_survive():
    config = resolve(SensitivityConfig, {}, {"n_datasets": 4})
    assert config.engine.batch_size == 50
    assert config.engine.max_iters == 8


def test_lists_become_tuples():
    config = resolve(SelectConfig, {"dataset": "d.json", "model_orders": [1, 2]}, {})
    assert config.model_orders == (1, 2)


@pytest.mark.parametrize(
    ("file_values", "message"),
    [
        ({"dataset": "d.json", "colour": "red"}, "unknown option"),
        ({"dataset": "d.json", "engine": {"colour": "red"}}, "unknown engine option"),
        ({"dataset": "d.json", "elpd_samples": "many"}, "must be a number"),
        ({"dataset": "d.json", "elpd_samples": 2.5}, "must be an integer"),
        ({"dataset": "d.json", "batch_size": True}, "must be a number"),
    ],
)
def test_bad_values_are_rejected(file_values, message):
    with pytest.raises(ConfigError, match=message):
        resolve(SelectConfig, file_values, {})


def test_csv_flag_must_be_boolean():
    with pytest.raises(ConfigError):
        resolve(GenerateConfig, {"csv": "yes"}, {})


def test_config_file_loading(tmp_path):
    assert load_config_file(None) == {}
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 3}), encoding="utf-8")
    assert load_config_file(path) == {"seed": 3}
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config_file(path)
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config_file(path)
    with pytest.raises(ConfigError, match="not found"):
        load_config_file(tmp_path / "missing.json")


def test_custom_circuits_need_ratios_and_locations():
    with pytest.raises(ConfigError):
        GenerateConfig(preset="custom")
    with pytest.raises(ConfigError):
        GenerateConfig(preset="custom", r=(0.6, 0.5), tau_std=(-1.0, 1.0))
    config = GenerateConfig(preset="custom", r=(0.4, 0.3), tau_std=(-1.0, 1.0))
    assert config.r == (0.4, 0.3)


@pytest.mark.parametrize(
    "build",
    [
        lambda: GenerateConfig(preset="medium"),
        lambda: GenerateConfig(m=1),
        lambda: SelectConfig(),
        lambda: SelectConfig(dataset="d.json", model_orders=(0, 1)),
        lambda: IdentifyConfig(dataset="d.json", n_is=5000),
        lambda: SensitivityConfig(n_datasets=2),
        lambda: BenchmarkConfig(dataset="d.json", budget=150),
        lambda: BenchmarkConfig(dataset="d.json", checkpoints=0),
        lambda: EngineOptions(form="absolute"),
    ],
)
def test_invalid_configs(build):
    with pytest.raises(ConfigError):
        build()
