import logging
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import torch
import yaml
from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from models.config import ENCODER_PRESETS, TASK_PRESETS, Config, ConfigValidationException, config_from_dict

DEFAULT_CONFIG_DIR = "config"
CONFIG_EXTENSIONS = (".yaml", ".yml", ".json")


@dataclass
class RuntimeSettings:
    threads: Optional[int]
    log_level: str
    config_dir: str

    @property
    def deterministic(self) -> bool:
        return self.threads == 1


def load_runtime_settings() -> RuntimeSettings:
    threads = os.getenv("R3D_THREADS")
    return RuntimeSettings(
        threads=int(threads) if threads else None,
        log_level=os.getenv("LOG_LEVEL", "INFO").upper(),
        config_dir=os.getenv("R3D_CONFIG_DIR", DEFAULT_CONFIG_DIR),
    )


def apply_runtime_settings(settings: RuntimeSettings):
    if settings.threads is not None:
        torch.set_num_threads(settings.threads)
    if settings.deterministic:
        torch.use_deterministic_algorithms(True)
        logging.info("Deterministic mode: single kernel thread, wall-clock columns written as 0")


def resolve_config_path(name_or_path: str, config_dir: str = DEFAULT_CONFIG_DIR) -> str:
    """A file path is used as is; a bare name is looked up in custom/ before base/."""
    if os.path.isfile(name_or_path):
        return name_or_path
    for folder in ("custom", "base"):
        for extension in CONFIG_EXTENSIONS:
            candidate = os.path.join(config_dir, folder, f"{name_or_path}{extension}")
            if os.path.exists(candidate):
                return candidate
    raise ConfigValidationException(f"No configuration found for {name_or_path}")


def read_config_file(path: str) -> dict:
    with open(path, 'r', encoding='utf-8') as file:
        try:
            raw_config = yaml.safe_load(file)
        except yaml.YAMLError as e:
            raise ConfigValidationException(f"{path} is not valid YAML/JSON: {e}") from e
    if raw_config is None:
        return {}
    if not isinstance(raw_config, dict):
        raise ConfigValidationException(f"{path} must hold a mapping at the top level")
    return raw_config


def load_config(name_or_path: Optional[str] = None, overrides: Sequence[str] = (), config_dir: str = DEFAULT_CONFIG_DIR) -> Config:
    """Merge dataclass defaults, encoder and task presets, the file and `key=value` overrides, in that order."""
    raw_config = read_config_file(resolve_config_path(name_or_path, config_dir)) if name_or_path else {}
    try:
        schema = OmegaConf.structured(Config)
        file_conf = OmegaConf.create(raw_config)
        override_conf = OmegaConf.from_dotlist(list(overrides))
        requested = OmegaConf.merge(schema, file_conf, override_conf)
        preset, task = requested.encoder.preset, requested.task.name
        if preset not in ENCODER_PRESETS:
            raise ConfigValidationException(f"unknown encoder preset '{preset}', choose from {sorted(ENCODER_PRESETS)}")
        if task not in TASK_PRESETS:
            raise ConfigValidationException(f"unknown task '{task}', choose from {sorted(TASK_PRESETS)}")
        preset_conf = OmegaConf.create({"encoder": ENCODER_PRESETS[preset], "task": TASK_PRESETS[task]})
        merged = OmegaConf.merge(schema, preset_conf, file_conf, override_conf)
    except OmegaConfBaseException as e:
        raise ConfigValidationException(f"invalid configuration: {e}") from e
    config = config_from_dict(OmegaConf.to_container(merged, resolve=True)).validate()
    logging.debug(f"loaded config {name_or_path or '<defaults>'} with {len(overrides)} override(s)")
    return config
