import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from models.config import AugmentConfig
from models.episode import Episode, Window
from models.point_cloud import PointCloud
from repos.demo_repository import DatasetException
from services.diffusion import DiffusionBatch
from services.numerics.rng import Rng
from services.pointcloud import augment
from services.policy.normalizer import NormalizationStats, canonical_quaternions

STATIC_FRAME_TOLERANCE = 1e-9


def filter_static_frames(episode: Episode, tolerance: float = STATIC_FRAME_TOLERANCE) -> Episode:
    """Drop frames whose joint action equals the last retained frame's action."""
    keep = [0]
    for index in range(1, len(episode)):
        if np.max(np.abs(episode.actions[index] - episode.actions[keep[-1]])) > tolerance:
            keep.append(index)
    return episode.take(keep)


def make_windows(episode: Episode, t_o: int, t_a: int) -> List[Window]:
    """One window per frame; history pads with the first frame, chunks with the last action."""
    length = len(episode)
    if length < 1:
        raise DatasetException("cannot window an empty episode")
    windows = []
    for t in range(length):
        obs_index = np.clip(np.arange(t - t_o + 1, t + 1), 0, length - 1)
        act_index = np.clip(np.arange(t, t + t_a), 0, length - 1)
        windows.append(Window(
            clouds=episode.clouds[obs_index],
            proprio=episode.proprio[obs_index],
            joint=episode.actions[act_index],
            ee=episode.ee_poses[act_index],
        ))
    return windows


def split_episodes(episodes: List[Episode], val_fraction: float) -> Tuple[List[Episode], List[Episode]]:
    """Last fraction of episodes by index is validation."""
    n_val = int(round(len(episodes) * val_fraction))
    if len(episodes) < 2 or n_val == 0:
        return list(episodes), []
    return list(episodes[:-n_val]), list(episodes[-n_val:])


@dataclass
class ObservationBatch:
    """clouds: B x T_o x n_p x 6 (metric, raw); proprio: B x T_o x N_q (normalized)."""
    clouds: np.ndarray
    proprio: torch.Tensor


class WindowDataset:
    def __init__(self, windows: List[Window], stats: NormalizationStats, dtype: torch.dtype = torch.float32):
        if not windows:
            raise DatasetException("dataset has no windows")
        self.windows = windows
        self.stats = stats
        self.dtype = dtype

    def __len__(self) -> int:
        return len(self.windows)

    def batch(self, indices: Sequence[int], rng: Rng, augment_cfg: Optional[AugmentConfig] = None) -> DiffusionBatch:
        windows = [self.windows[i] for i in indices]
        clouds = np.stack([w.clouds for w in windows]).astype(np.float32)
        proprio = np.stack([w.proprio for w in windows]).astype(np.float32)
        if augment_cfg is not None:
            streams = rng.split(clouds.shape[0] * clouds.shape[1])
            for b in range(clouds.shape[0]):
                for t in range(clouds.shape[1]):
                    stream = streams[b * clouds.shape[1] + t]
                    cloud, proprio[b, t] = augment(PointCloud.from_array(clouds[b, t]), proprio[b, t], augment_cfg, stream)
                    clouds[b, t] = cloud.as_array()

        ee = np.stack([w.ee for w in windows]).astype(np.float64)
        ee[..., 3:] = canonical_quaternions(ee[..., 3:])
        joint = np.stack([self.stats.joint.normalize(w.joint) for w in windows])
        return DiffusionBatch(
            observations=ObservationBatch(clouds, torch.as_tensor(self.stats.proprio.normalize(proprio), dtype=self.dtype)),
            joint=torch.as_tensor(joint, dtype=self.dtype),
            ee=torch.as_tensor(self.stats.ee.normalize(ee), dtype=self.dtype),
        )


def build_windows(episodes: List[Episode], t_o: int, t_a: int) -> List[Window]:
    windows = []
    for episode in episodes:
        filtered = filter_static_frames(episode)
        logging.debug(f"episode {episode.task_id}: {len(episode)} frames, {len(filtered)} after static-frame filter")
        windows.extend(make_windows(filtered, t_o, t_a))
    return windows
