import json
import logging
import os
import struct
from typing import List

import numpy as np
from pydantic import ValidationError

from models.dataset_manifest import DATASET_FORMAT_VERSION, DatasetManifest
from models.episode import EE_POSE_DIM, Episode

EPISODE_MAGIC = b"R3DE"
MANIFEST_NAME = "manifest.json"
_HEADER = struct.Struct("<4sIIII")


class DatasetException(Exception):
    pass


def encode_episode(episode: Episode) -> bytes:
    length, n_p, n_q = len(episode), episode.n_p, episode.n_q
    frames = np.concatenate([
        episode.clouds.astype("<f4").reshape(length, n_p * 6),
        episode.proprio.astype("<f4"),
        episode.actions.astype("<f4"),
        episode.ee_poses.astype("<f4"),
    ], axis=1)
    return _HEADER.pack(EPISODE_MAGIC, DATASET_FORMAT_VERSION, length, n_p, n_q) + frames.tobytes(order="C")


def decode_episode(data: bytes, task_id: str = "") -> Episode:
    if len(data) < _HEADER.size:
        raise DatasetException("episode file is shorter than its header")
    magic, version, length, n_p, n_q = _HEADER.unpack_from(data)
    if magic != EPISODE_MAGIC:
        raise DatasetException(f"bad episode magic {magic!r}")
    if version != DATASET_FORMAT_VERSION:
        raise DatasetException(f"unsupported episode version {version}")
    width = n_p * 6 + 2 * n_q + EE_POSE_DIM
    if len(data) != _HEADER.size + 4 * length * width:
        raise DatasetException(f"episode payload is {len(data) - _HEADER.size} bytes, expected {4 * length * width}")
    frames = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(length, width).astype(np.float32)
    clouds_end = n_p * 6
    return Episode(
        clouds=frames[:, :clouds_end].reshape(length, n_p, 6),
        proprio=frames[:, clouds_end:clouds_end + n_q],
        actions=frames[:, clouds_end + n_q:clouds_end + 2 * n_q],
        ee_poses=frames[:, clouds_end + 2 * n_q:],
        task_id=task_id,
        success=True,
    )


class DemoRepository:
    """Demonstration store: manifest.json plus one .r3de file per episode."""

    def __init__(self, root: str):
        self.root = root

    def save(self, name: str, task_id: str, episodes: List[Episode]) -> DatasetManifest:
        if not episodes:
            raise DatasetException("refusing to write an empty dataset")
        n_p, n_q = episodes[0].n_p, episodes[0].n_q
        os.makedirs(self.root, exist_ok=True)
        files = []
        for index, episode in enumerate(episodes):
            if episode.n_p != n_p or episode.n_q != n_q:
                raise DatasetException(f"episode {index} dims ({episode.n_p}, {episode.n_q}) differ from ({n_p}, {n_q})")
            file_name = f"episode_{index:05d}.r3de"
            with open(os.path.join(self.root, file_name), "wb") as file:
                file.write(encode_episode(episode))
            files.append(file_name)
        manifest = DatasetManifest(name=name, task_id=task_id, n_q=n_q, n_p=n_p, episodes=files)
        with open(os.path.join(self.root, MANIFEST_NAME), "w", encoding="utf-8") as file:
            json.dump(manifest.model_dump(), file, indent=2, sort_keys=True)
        logging.info(f"Wrote {len(files)} episodes of '{task_id}' to {self.root}")
        return manifest

    def load_manifest(self) -> DatasetManifest:
        path = os.path.join(self.root, MANIFEST_NAME)
        try:
            with open(path, "r", encoding="utf-8") as file:
                manifest = DatasetManifest(**json.load(file))
        except (OSError, json.JSONDecodeError, ValidationError) as e:
            raise DatasetException(f"cannot read dataset manifest {path}: {e}") from e
        if manifest.format_version != DATASET_FORMAT_VERSION:
            raise DatasetException(f"unsupported dataset version {manifest.format_version}")
        return manifest

    def load_episode(self, manifest: DatasetManifest, file_name: str) -> Episode:
        path = os.path.join(self.root, file_name)
        try:
            with open(path, "rb") as file:
                episode = decode_episode(file.read(), manifest.task_id)
        except OSError as e:
            raise DatasetException(f"cannot read episode {path}") from e
        if episode.n_p != manifest.n_p or episode.n_q != manifest.n_q:
            raise DatasetException(f"{path}: dims ({episode.n_p}, {episode.n_q}) disagree with manifest ({manifest.n_p}, {manifest.n_q})")
        return episode

    def load(self) -> List[Episode]:
        manifest = self.load_manifest()
        episodes = [self.load_episode(manifest, name) for name in manifest.episodes]
        logging.info(f"Loaded {len(episodes)} episodes of '{manifest.task_id}' from {self.root}")
        return episodes
