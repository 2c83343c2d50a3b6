from typing import Optional

from pydantic import BaseModel


class MetricsRow(BaseModel):
    step: int
    epoch: int
    split: str
    loss: float
    loss_joint: float
    loss_ee: float
    wall_ms: int


class EpisodeRecord(BaseModel):
    episode: int
    steps: int
    success: bool
    final_distance: float


class SweepRow(BaseModel):
    value: str
    final_val_loss: Optional[float]
    success_rate: Optional[float]


class GradCheckRow(BaseModel):
    op: str
    max_rel_error: float
    threshold: float
    passed: bool


class PretrainMetricsRow(BaseModel):
    step: int
    epoch: int
    split: str
    loss: float
    accuracy: float
    wall_ms: int
