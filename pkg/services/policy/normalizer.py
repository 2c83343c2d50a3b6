from dataclasses import dataclass
from typing import Dict, List

import numpy as np
import torch

from models.episode import Episode

STATS_PREFIX = "stats."


def canonical_quaternions(q: np.ndarray) -> np.ndarray:
    """Unit-norm wxyz quaternions with w >= 0."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    q = np.where(norm > 0, q / np.where(norm > 0, norm, 1.0), np.array([1.0, 0.0, 0.0, 0.0]))
    return np.where(q[..., :1] < 0, -q, q)


@dataclass
class ChannelRange:
    """Per-channel min/max mapped to [-1, 1]; degenerate channels map to 0 with unit scale."""
    low: np.ndarray
    high: np.ndarray

    @property
    def scale(self) -> np.ndarray:
        span = (self.high - self.low) / 2.0
        return np.where(span > 0, span, 1.0)

    @property
    def offset(self) -> np.ndarray:
        return np.where(self.high > self.low, (self.high + self.low) / 2.0, self.low)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return ((np.asarray(x, dtype=np.float64) - self.offset) / self.scale).astype(np.float32)

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.scale + self.offset

    @classmethod
    def fit(cls, values: np.ndarray) -> "ChannelRange":
        values = np.asarray(values, dtype=np.float32).reshape(-1, values.shape[-1])
        return cls(values.min(axis=0).astype(np.float64), values.max(axis=0).astype(np.float64))


@dataclass
class NormalizationStats:
    joint: ChannelRange
    ee: ChannelRange
    proprio: ChannelRange

    @classmethod
    def from_episodes(cls, episodes: List[Episode]) -> "NormalizationStats":
        return cls(
            joint=ChannelRange.fit(np.concatenate([e.actions for e in episodes])),
            ee=ChannelRange.fit(np.concatenate([e.ee_poses for e in episodes])),
            proprio=ChannelRange.fit(np.concatenate([e.proprio for e in episodes])),
        )

    def to_tensors(self) -> Dict[str, torch.Tensor]:
        tensors = {}
        for name in ("joint", "ee", "proprio"):
            channel = getattr(self, name)
            tensors[f"{STATS_PREFIX}{name}_min"] = torch.as_tensor(channel.low, dtype=torch.float32)
            tensors[f"{STATS_PREFIX}{name}_max"] = torch.as_tensor(channel.high, dtype=torch.float32)
        return tensors

    @classmethod
    def from_tensors(cls, tensors: Dict[str, torch.Tensor]) -> "NormalizationStats":
        def channel(name: str) -> ChannelRange:
            return ChannelRange(
                tensors[f"{STATS_PREFIX}{name}_min"].numpy().astype(np.float64),
                tensors[f"{STATS_PREFIX}{name}_max"].numpy().astype(np.float64),
            )
        return cls(channel("joint"), channel("ee"), channel("proprio"))
