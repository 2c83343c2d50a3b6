from dataclasses import dataclass
from typing import Optional

import numpy as np

from .point_cloud import PointCloud

EE_POSE_DIM = 7


@dataclass
class Observation:
    cloud: PointCloud
    proprio: np.ndarray


@dataclass
class ActionChunk:
    """joint: T_a x N_q executable targets; ee: T_a x 7 poses, None when the EE branch is disabled."""
    joint: np.ndarray
    ee: Optional[np.ndarray] = None


@dataclass
class Episode:
    """A demonstration stored column-wise.

    clouds: L x n_p x 6, proprio: L x n_q, actions: L x n_q, ee_poses: L x 7.
    """
    clouds: np.ndarray
    proprio: np.ndarray
    actions: np.ndarray
    ee_poses: np.ndarray
    task_id: str = ""
    success: bool = True

    def __post_init__(self):
        length = len(self.clouds)
        if length < 1:
            raise ValueError("episode needs at least one frame")
        if not (len(self.proprio) == len(self.actions) == len(self.ee_poses) == length):
            raise ValueError("episode columns differ in length")
        if self.clouds.ndim != 3 or self.clouds.shape[2] != 6:
            raise ValueError(f"episode clouds must be L x n_p x 6, got {self.clouds.shape}")
        if self.proprio.shape[1] != self.actions.shape[1] or self.ee_poses.shape[1] != EE_POSE_DIM:
            raise ValueError("episode proprio/action/ee dimensions are inconsistent")

    def __len__(self) -> int:
        return len(self.clouds)

    @property
    def n_p(self) -> int:
        return self.clouds.shape[1]

    @property
    def n_q(self) -> int:
        return self.actions.shape[1]

    def take(self, indices) -> "Episode":
        indices = np.asarray(indices, dtype=np.int64)
        return Episode(self.clouds[indices], self.proprio[indices], self.actions[indices], self.ee_poses[indices], self.task_id, self.success)


@dataclass
class Window:
    """One training sample: t_o observations and a t_a action chunk."""
    clouds: np.ndarray
    proprio: np.ndarray
    joint: np.ndarray
    ee: np.ndarray
