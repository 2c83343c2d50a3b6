import json
import logging
import os
import struct
from typing import BinaryIO, Dict

import numpy as np
import torch

from models.checkpoint import CHECKPOINT_FORMAT_VERSION, Checkpoint

CHECKPOINT_MAGIC = b"R3DC"


class CheckpointFormatException(Exception):
    pass


def _read_exact(stream: BinaryIO, size: int) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise CheckpointFormatException(f"truncated checkpoint: wanted {size} bytes, got {len(data)}")
    return data


def _read_u32(stream: BinaryIO) -> int:
    return struct.unpack("<I", _read_exact(stream, 4))[0]


def save_checkpoint(checkpoint: Checkpoint, path: str):
    header = {"config": checkpoint.config, "step": checkpoint.step, "kind": checkpoint.kind, "meta": checkpoint.meta}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as file:
        file.write(CHECKPOINT_MAGIC)
        file.write(struct.pack("<II", CHECKPOINT_FORMAT_VERSION, len(checkpoint.tensors)))
        file.write(struct.pack("<I", len(blob)))
        file.write(blob)
        for name, tensor in checkpoint.tensors.items():
            encoded = name.encode("utf-8")
            array = tensor.detach().cpu().numpy().astype("<f4")
            file.write(struct.pack("<I", len(encoded)))
            file.write(encoded)
            file.write(struct.pack("<I", array.ndim))
            file.write(struct.pack(f"<{array.ndim}Q", *array.shape))
            file.write(array.tobytes(order="C"))


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as file:
        magic = _read_exact(file, 4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointFormatException(f"{path}: bad magic {magic!r}")
        version = _read_u32(file)
        if version != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointFormatException(f"{path}: unsupported checkpoint version {version}")
        count = _read_u32(file)
        try:
            header = json.loads(_read_exact(file, _read_u32(file)).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointFormatException(f"{path}: unreadable config blob") from e

        tensors: Dict[str, torch.Tensor] = {}
        for _ in range(count):
            name = _read_exact(file, _read_u32(file)).decode("utf-8")
            if name in tensors:
                raise CheckpointFormatException(f"{path}: duplicate tensor name '{name}'")
            rank = _read_u32(file)
            shape = struct.unpack(f"<{rank}Q", _read_exact(file, 8 * rank))
            size = int(np.prod(shape, dtype=np.int64))
            array = np.frombuffer(_read_exact(file, 4 * size), dtype="<f4").reshape(shape)
            tensors[name] = torch.from_numpy(array.astype(np.float32))
        if file.read(1):
            raise CheckpointFormatException(f"{path}: trailing bytes after {count} tensors")

    return Checkpoint(
        config=header["config"],
        tensors=tensors,
        step=int(header.get("step", 0)),
        kind=header.get("kind", "policy"),
        version=version,
        meta=header.get("meta", {}),
    )


class CheckpointRepository:
    """Checkpoints of one run, stored as <out_dir>/<name>.r3dc."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, f"{name}.r3dc")

    def save(self, name: str, checkpoint: Checkpoint) -> str:
        path = self.path(name)
        save_checkpoint(checkpoint, path)
        logging.info(f"Saved {checkpoint.kind} checkpoint '{name}' at step {checkpoint.step} to {path}")
        return path

    def load(self, name: str) -> Checkpoint:
        return load_checkpoint(self.path(name))
