from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from dacite import Config as DaciteConfig
from dacite import from_dict

from .task_type import TaskType


class ConfigValidationException(ValueError):
    pass


ENCODER_PRESETS = {
    "tiny": {"d": 64, "depth": 4, "heads": 4},
    "small": {"d": 128, "depth": 6, "heads": 8},
    "base": {"d": 256, "depth": 8, "heads": 8},
}

TASK_PRESETS = {
    "reach": {},
    "push": {"max_steps": 150, "n_distractors": 1},
}


def _check(condition: bool, message: str):
    if not condition:
        raise ConfigValidationException(message)


def _check_range(name: str, values: List[float]):
    _check(len(values) == 2 and values[0] <= values[1], f"{name} must be an ordered [low, high] pair, got {values}")


@dataclass
class AugmentConfig:
    brightness_range: List[float] = field(default_factory=lambda: [-0.125, 0.125])
    contrast_range: List[float] = field(default_factory=lambda: [0.5, 1.5])
    saturation_range: List[float] = field(default_factory=lambda: [0.5, 1.5])
    coord_noise_sigma: float = 0.005
    proprio_noise_sigma: float = 0.01
    dropout_max_ratio: float = 0.2
    permute_points: bool = True

    @classmethod
    def identity(cls) -> "AugmentConfig":
        return cls(
            brightness_range=[0.0, 0.0],
            contrast_range=[1.0, 1.0],
            saturation_range=[1.0, 1.0],
            coord_noise_sigma=0.0,
            proprio_noise_sigma=0.0,
            dropout_max_ratio=0.0,
            permute_points=False,
        )

    def validate(self):
        _check_range("brightness_range", self.brightness_range)
        _check_range("contrast_range", self.contrast_range)
        _check_range("saturation_range", self.saturation_range)
        _check(self.coord_noise_sigma >= 0 and self.proprio_noise_sigma >= 0, "noise sigmas must be non-negative")
        _check(0.0 <= self.dropout_max_ratio < 1.0, f"dropout_max_ratio must be in [0, 1), got {self.dropout_max_ratio}")


@dataclass
class EncoderConfig:
    preset: str = "tiny"
    n_p: int = 1024
    n_c: int = 64
    k: int = 32
    d: int = 64
    depth: int = 4
    heads: int = 4
    hidden: int = 64
    mlp_ratio: int = 4

    def validate(self):
        _check(self.preset in ENCODER_PRESETS, f"unknown encoder preset '{self.preset}', choose from {sorted(ENCODER_PRESETS)}")
        _check(1 <= self.n_c <= self.n_p, f"encoder n_c ({self.n_c}) must be in [1, n_p={self.n_p}]")
        _check(1 <= self.k <= self.n_p, f"encoder k ({self.k}) must be in [1, n_p={self.n_p}]")
        _check(self.heads >= 1 and self.d % self.heads == 0, f"encoder d ({self.d}) must be divisible by heads ({self.heads})")
        _check(self.depth >= 1, "encoder depth must be at least 1")


@dataclass
class DecoderConfig:
    d: int = 64
    depth: int = 4
    heads: int = 4
    t_o: int = 2
    t_a: int = 16
    n_q: int = 4
    enable_ee_branch: bool = True
    hidden: int = 64
    mlp_ratio: int = 4

    def validate(self):
        _check(self.depth >= 1, "decoder depth must be at least 1")
        _check(self.heads >= 1 and self.d % self.heads == 0, f"decoder d ({self.d}) must be divisible by heads ({self.heads})")
        _check(self.t_a >= 1 and self.t_o >= 1, "decoder horizons t_o and t_a must be at least 1")
        _check(self.n_q >= 1, "decoder n_q must be at least 1")


@dataclass
class DiffusionConfig:
    schedule_kind: str = "squared_cosine"
    k: int = 100
    lambda_ee: float = 1.0
    prediction_target: str = "epsilon"

    def validate(self):
        _check(self.schedule_kind in ("squared_cosine", "linear"), f"unknown schedule kind '{self.schedule_kind}'")
        _check(self.k >= 1, "diffusion k must be at least 1")
        _check(self.lambda_ee >= 0, "lambda_ee must be non-negative")
        _check(self.prediction_target == "epsilon", "only epsilon prediction is supported")


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 256
    lr: float = 1e-4
    betas: List[float] = field(default_factory=lambda: [0.9, 0.999])
    eps: float = 1e-8
    weight_decay: float = 1e-4
    lr_schedule: str = "constant"
    lr_warmup_steps: int = 0
    seed: int = 0
    execute_steps: int = 8
    max_steps: Optional[int] = None
    checkpoint_every: int = 100
    val_fraction: float = 0.1
    augment_enabled: bool = True
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def validate(self, t_a: int):
        _check(self.epochs >= 1, "epochs must be at least 1")
        _check(self.batch_size >= 1, "batch_size must be at least 1")
        _check(self.lr > 0, "lr must be positive")
        _check(len(self.betas) == 2 and all(0 <= b < 1 for b in self.betas), f"betas must be two values in [0, 1), got {self.betas}")
        _check(self.lr_schedule in ("constant", "cosine"), f"unknown lr_schedule '{self.lr_schedule}'")
        _check(1 <= self.execute_steps <= t_a, f"execute_steps ({self.execute_steps}) must be in [1, t_a={t_a}]")
        _check(self.max_steps is None or self.max_steps >= 1, "max_steps must be at least 1 when set")
        _check(self.checkpoint_every >= 1, "checkpoint_every must be at least 1")
        _check(0 <= self.val_fraction < 1, "val_fraction must be in [0, 1)")
        self.augment.validate()


@dataclass
class TaskSpec:
    name: str = "reach"
    workspace_min: List[float] = field(default_factory=lambda: [-0.5, -0.5, 0.0])
    workspace_max: List[float] = field(default_factory=lambda: [0.5, 0.5, 0.4])
    success_tolerance: float = 0.03
    max_steps: int = 60
    n_distractors: int = 2
    cloud_points_per_entity: int = 200
    target_radius: float = 0.03
    agent_radius: float = 0.02
    max_step_size: float = 0.05
    expert_jitter: float = 0.002

    def validate(self):
        _check(self.name in {task.value for task in TaskType}, f"unknown task '{self.name}'")
        _check(len(self.workspace_min) == 3 and len(self.workspace_max) == 3, "workspace bounds must be 3-vectors")
        _check(all(lo <= hi for lo, hi in zip(self.workspace_min, self.workspace_max)), "workspace min must not exceed max")
        _check(self.success_tolerance > 0, "success_tolerance must be positive")
        _check(self.max_steps >= 1, "task max_steps must be at least 1")
        _check(self.n_distractors >= 0, "n_distractors must be non-negative")
        _check(self.cloud_points_per_entity >= 1, "cloud_points_per_entity must be at least 1")


@dataclass
class PretrainConfig:
    scenes: int = 200
    epochs: int = 40
    batch_size: int = 16
    lr: float = 1e-3
    weight_decay: float = 1e-4
    held_out_fraction: float = 0.2
    n_classes: int = 5
    seed: int = 0

    def validate(self):
        _check(self.scenes >= 2, "pretraining needs at least 2 scenes")
        _check(self.n_classes >= 2, "n_classes must be at least 2")
        _check(0 < self.held_out_fraction < 1, "held_out_fraction must be in (0, 1)")


@dataclass
class Config:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    task: TaskSpec = field(default_factory=TaskSpec)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)

    def validate(self) -> "Config":
        self.encoder.validate()
        self.decoder.validate()
        self.diffusion.validate()
        self.train.validate(self.decoder.t_a)
        self.task.validate()
        self.pretrain.validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def config_from_dict(data: Dict[str, Any]) -> Config:
    """Strict conversion: unknown keys and wrong types are rejected."""
    try:
        return from_dict(data_class=Config, data=data, config=DaciteConfig(strict=True))
    except Exception as e:
        raise ConfigValidationException(f"invalid configuration: {e}") from e
