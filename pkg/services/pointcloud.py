import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from models.config import AugmentConfig
from models.point_cloud import Aabb, PointCloud, PointCloudException, RigidTransform
from services.numerics.rng import Rng


def _points(cloud: Union[PointCloud, np.ndarray]) -> np.ndarray:
    points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud)
    return points.astype(np.float64, copy=False)


def batched_farthest_point_sample(points: np.ndarray, n: int, starts: Sequence[int]) -> np.ndarray:
    """FPS over B equal-size clouds.

    points: B x N x 3, starts: B start indices. Returns B x n indices.
    Squared Euclidean distance; argmax picks the lowest index on ties.
    """
    points = np.asarray(points, dtype=np.float64)
    batch, count, _ = points.shape
    if count == 0:
        raise PointCloudException("cannot sample from an empty cloud")
    if not 1 <= n <= count:
        raise PointCloudException(f"cannot sample {n} points from a cloud of {count}")
    starts = np.asarray(starts, dtype=np.int64)
    if starts.shape != (batch,) or (starts < 0).any() or (starts >= count).any():
        raise PointCloudException(f"start indices {starts} out of range for {count} points")

    rows = np.arange(batch)
    selected = np.zeros((batch, n), dtype=np.int64)
    min_dist = np.full((batch, count), np.inf)
    farthest = starts
    for i in range(n):
        selected[:, i] = farthest
        centroid = points[rows, farthest][:, None, :]
        dist = ((points - centroid) ** 2).sum(axis=-1)
        np.minimum(min_dist, dist, out=min_dist)
        # a selected point never wins again, even when all the rest duplicate it
        min_dist[rows, farthest] = -np.inf
        farthest = np.argmax(min_dist, axis=-1)
    return selected


def farthest_point_sample(cloud: Union[PointCloud, np.ndarray], n: int, start_index: int = 0) -> np.ndarray:
    points = _points(cloud)
    if len(points) == 0:
        raise PointCloudException("cannot sample from an empty cloud")
    return batched_farthest_point_sample(points[None], n, [start_index])[0]


def knn_group(cloud: Union[PointCloud, np.ndarray], center_indices: Sequence[int], k: int) -> np.ndarray:
    """Row i: the k nearest points to center i, sorted by (distance, index)."""
    points = _points(cloud)
    count = len(points)
    if not 1 <= k <= count:
        raise PointCloudException(f"cannot group {k} neighbours from a cloud of {count}")
    centers = points[np.asarray(center_indices, dtype=np.int64)]
    dist = ((centers[:, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
    # stable sort keeps index order among equal distances
    return np.argsort(dist, axis=-1, kind="stable")[:, :k]


def crop_workspace(cloud: PointCloud, box: Aabb, remove_ground: Optional[float] = None) -> PointCloud:
    keep = box.contains(cloud.points)
    if remove_ground is not None:
        keep &= cloud.points[:, 2] > remove_ground
    return cloud.select(np.flatnonzero(keep))


def merge_views(clouds: List[PointCloud], extrinsics: List[RigidTransform]) -> PointCloud:
    if len(clouds) != len(extrinsics):
        raise PointCloudException(f"got {len(clouds)} views but {len(extrinsics)} extrinsics")
    if not clouds:
        raise PointCloudException("no views to merge")
    points = np.concatenate([transform.apply(_points(cloud)) for cloud, transform in zip(clouds, extrinsics)])
    colors = np.concatenate([cloud.colors for cloud in clouds])
    labels = None
    if all(cloud.labels is not None for cloud in clouds):
        labels = np.concatenate([cloud.labels for cloud in clouds])
    return PointCloud(points.astype(clouds[0].points.dtype), colors, labels)


def resample_indices(cloud: PointCloud, n_p: int, rng: Rng) -> np.ndarray:
    count = len(cloud)
    if count == 0:
        raise PointCloudException("cannot resample an empty cloud")
    if count > n_p:
        return farthest_point_sample(cloud, n_p, int(rng.integers(0, count)))
    if count < n_p:
        return np.concatenate([np.arange(count), rng.choice(count, n_p - count, replace=True)])
    return np.arange(count)


def resample_to_fixed(cloud: PointCloud, n_p: int, rng: Rng) -> PointCloud:
    """Downsample by FPS or pad by duplicating points to exactly n_p."""
    if len(cloud) == n_p:
        return cloud
    return cloud.select(resample_indices(cloud, n_p, rng))


@dataclass
class ColorJitter:
    brightness: float
    contrast: float
    saturation: float


def sample_color_jitter(cfg: AugmentConfig, rng: Rng) -> ColorJitter:
    return ColorJitter(
        brightness=float(rng.uniform(*cfg.brightness_range)),
        contrast=float(rng.uniform(*cfg.contrast_range)),
        saturation=float(rng.uniform(*cfg.saturation_range)),
    )


def apply_color_jitter(colors: np.ndarray, jitter: ColorJitter) -> np.ndarray:
    """Saturation toward per-point gray, contrast around 0.5, then brightness, then clamp."""
    out = colors
    if jitter.saturation != 1.0:
        gray = out.mean(axis=-1, keepdims=True)
        out = (out - gray) * jitter.saturation + gray
    if jitter.contrast != 1.0:
        out = (out - 0.5) * jitter.contrast + 0.5
    if jitter.brightness != 0.0:
        out = out + jitter.brightness
    return np.clip(out, 0.0, 1.0).astype(colors.dtype, copy=False)


def apply_dropout(cloud: PointCloud, ratio: float, rng: Rng) -> PointCloud:
    """Remove floor(ratio * n) random points, then pad back with duplicated survivors."""
    count = len(cloud)
    n_drop = int(np.floor(ratio * count))
    if n_drop <= 0:
        return cloud
    n_drop = min(n_drop, count - 1)
    dropped = rng.choice(count, n_drop, replace=False)
    survivors = np.setdiff1d(np.arange(count), dropped)
    refill = survivors[rng.choice(len(survivors), n_drop, replace=True)]
    return cloud.select(np.concatenate([survivors, refill]))


def augment(cloud: PointCloud, proprio: np.ndarray, cfg: AugmentConfig, rng: Rng) -> Tuple[PointCloud, np.ndarray]:
    """Permutation, color jitter, Gaussian noise and point dropout, in that order."""
    count = len(cloud)
    if cfg.permute_points:
        cloud = cloud.select(rng.permutation(count))

    jitter = sample_color_jitter(cfg, rng)
    colors = apply_color_jitter(cloud.colors, jitter)

    points = cloud.points
    if cfg.coord_noise_sigma > 0:
        points = (points + rng.normal(0.0, cfg.coord_noise_sigma, points.shape)).astype(cloud.points.dtype)
    proprio = np.asarray(proprio)
    if cfg.proprio_noise_sigma > 0:
        proprio = (proprio + rng.normal(0.0, cfg.proprio_noise_sigma, proprio.shape)).astype(proprio.dtype)
    cloud = PointCloud(points, colors, cloud.labels)

    ratio = float(rng.uniform(0.0, cfg.dropout_max_ratio))
    cloud = apply_dropout(cloud, ratio, rng)
    logging.debug(f"augment: jitter {jitter}, dropout ratio {ratio:.3f}")
    return cloud, proprio
