from dataclasses import dataclass
from typing import Optional

import numpy as np


class PointCloudException(ValueError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray
    colors: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points)
        self.colors = np.clip(np.asarray(self.colors), 0.0, 1.0)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise PointCloudException(f"points must be N x 3, got {self.points.shape}")
        if self.colors.shape != self.points.shape:
            raise PointCloudException(f"colors shape {self.colors.shape} does not match points {self.points.shape}")
        if not np.isfinite(self.points).all():
            raise PointCloudException("point coordinates must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.points),):
                raise PointCloudException(f"labels shape {self.labels.shape} does not match {len(self.points)} points")

    def __len__(self) -> int:
        return len(self.points)

    def select(self, indices) -> "PointCloud":
        indices = np.asarray(indices, dtype=np.int64)
        labels = self.labels[indices] if self.labels is not None else None
        return PointCloud(self.points[indices], self.colors[indices], labels)

    def as_array(self, dtype=np.float32) -> np.ndarray:
        return np.concatenate([self.points, self.colors], axis=1).astype(dtype)

    @classmethod
    def from_array(cls, array: np.ndarray, labels: Optional[np.ndarray] = None) -> "PointCloud":
        array = np.asarray(array)
        return cls(array[:, :3], array[:, 3:6], labels)


@dataclass
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise PointCloudException("rigid transform needs a 3x3 rotation and a 3-vector translation")
        if not np.allclose(self.rotation.T @ self.rotation, np.eye(3), atol=1e-6):
            raise PointCloudException("rotation is not orthonormal")
        if abs(np.linalg.det(self.rotation) - 1.0) > 1e-6:
            raise PointCloudException("rotation determinant must be +1")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation


@dataclass
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        self.min = np.asarray(self.min, dtype=np.float64)
        self.max = np.asarray(self.max, dtype=np.float64)
        if self.min.shape != (3,) or self.max.shape != (3,):
            raise PointCloudException("box bounds must be 3-vectors")
        if (self.min > self.max).any():
            raise PointCloudException(f"box min {self.min} exceeds max {self.max}")

    def contains(self, points: np.ndarray) -> np.ndarray:
        return np.all((points >= self.min) & (points <= self.max), axis=-1)

    def clamp(self, points: np.ndarray) -> np.ndarray:
        return np.clip(points, self.min, self.max)
