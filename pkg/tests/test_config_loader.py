import json
from pathlib import Path

import pytest

from config_loader import load_config, load_runtime_settings, resolve_config_path
from models.config import ConfigValidationException

CONFIG_DIR = str(Path(__file__).parent.parent / "config")


def test_defaults_without_a_file():
    config = load_config(config_dir=CONFIG_DIR)
    assert config.encoder.preset == "tiny"
    assert (config.encoder.d, config.encoder.depth, config.encoder.heads) == (64, 4, 4)
    assert config.decoder.t_a == 16 and config.train.execute_steps == 8
    assert config.diffusion.schedule_kind == "squared_cosine" and config.diffusion.k == 100
    assert config.task.name == "reach" and config.task.max_steps == 60


def test_named_presets_resolve_from_base():
    smoke = load_config("smoke", config_dir=CONFIG_DIR)
    assert smoke.train.epochs == 2 and smoke.train.checkpoint_every == 1
    push = load_config("push", config_dir=CONFIG_DIR)
    assert push.task.name == "push"
    assert (push.task.max_steps, push.task.n_distractors) == (150, 1)


def test_push_task_preset_applies_without_a_file():
    config = load_config(overrides=["task.name=push"], config_dir=CONFIG_DIR)
    assert config.task.max_steps == 150 and config.task.n_distractors == 1


def test_encoder_preset_override():
    config = load_config(overrides=["encoder.preset=small"], config_dir=CONFIG_DIR)
    assert (config.encoder.d, config.encoder.depth, config.encoder.heads) == (128, 6, 8)


def test_file_value_wins_over_preset(tmp_path):
    path = tmp_path / "wide.yaml"
    path.write_text("encoder:\n  preset: small\n  d: 96\n", encoding="utf-8")
    config = load_config(str(path), config_dir=CONFIG_DIR)
    assert config.encoder.d == 96 and config.encoder.depth == 6


def test_override_wins_over_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("train:\n  epochs: 3\n", encoding="utf-8")
    assert load_config(str(path), ["train.epochs=7"], CONFIG_DIR).train.epochs == 7


def test_json_files_are_accepted(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"decoder": {"depth": 2}, "task": {"name": "push"}}), encoding="utf-8")
    config = load_config(str(path), config_dir=CONFIG_DIR)
    assert config.decoder.depth == 2 and config.task.max_steps == 150


@pytest.mark.parametrize("overrides", [
    ["train.unknown_key=1"],
    ["train.epochs=many"],
    ["encoder.preset=huge"],
    ["task.name=stack"],
    ["decoder.t_a=4"],
    ["train.lr=-1"],
])
def test_invalid_configs_are_rejected(overrides):
    with pytest.raises(ConfigValidationException):
        load_config(overrides=overrides, config_dir=CONFIG_DIR)


def test_missing_config_name_raises():
    with pytest.raises(ConfigValidationException):
        resolve_config_path("does-not-exist", CONFIG_DIR)


def test_non_mapping_file_is_rejected(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ConfigValidationException):
        load_config(str(path), config_dir=CONFIG_DIR)


def test_runtime_settings_from_environment(monkeypatch):
    monkeypatch.setenv("R3D_THREADS", "1")
    monkeypatch.setenv("LOG_LEVEL", "debug")
    monkeypatch.setenv("R3D_CONFIG_DIR", "/tmp/r3d-config")
    settings = load_runtime_settings()
    assert settings.deterministic
    assert settings.log_level == "DEBUG"
    assert settings.config_dir == "/tmp/r3d-config"
    monkeypatch.delenv("R3D_THREADS")
    assert not load_runtime_settings().deterministic
