import logging
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np
import torch
from torch import nn

from models.checkpoint import Checkpoint
from models.config import EncoderConfig
from models.point_cloud import PointCloud, PointCloudException
from services.numerics.modules import LayerNorm, Linear, Mlp, SelfAttentionBlock
from services.numerics.rng import Rng
from services.pointcloud import batched_farthest_point_sample, knn_group

ENCODER_PREFIX = "encoder."


class ConfigMismatchException(Exception):
    pass


class MissingParameterException(Exception):
    pass


@dataclass
class Patches:
    centers: np.ndarray
    patches: np.ndarray
    center_indices: np.ndarray
    groups: np.ndarray


@dataclass
class GeometricTokens:
    """Per-patch tokens (..., N_C, D) and their centers (..., N_C, 3). No pooled row."""
    tokens: torch.Tensor
    centers: torch.Tensor

    @property
    def count(self) -> int:
        return self.tokens.shape[-2]


def batched_patchify(clouds: np.ndarray, cfg: EncoderConfig, rng: Optional[Rng] = None) -> Patches:
    """FPS centers and kNN patches for B clouds of n_p points (B x n_p x 6).

    Patch coordinates are re-centered on their center; colors are untouched.
    Without an rng every cloud starts FPS at index 0.
    """
    clouds = np.asarray(clouds, dtype=np.float64)
    batch, count, _ = clouds.shape
    if count != cfg.n_p:
        raise PointCloudException(f"encoder expects {cfg.n_p} points per cloud, got {count}")
    starts = rng.integers(0, count, size=batch) if rng is not None else np.zeros(batch, dtype=np.int64)
    center_indices = batched_farthest_point_sample(clouds[..., :3], cfg.n_c, starts)
    groups = np.stack([knn_group(clouds[b, :, :3], center_indices[b], cfg.k) for b in range(batch)])

    rows = np.arange(batch)[:, None]
    centers = clouds[rows, center_indices, :3]
    patches = clouds[np.arange(batch)[:, None, None], groups]
    patches[..., :3] -= centers[:, :, None, :]
    return Patches(centers, patches, center_indices, groups)


def patchify(cloud: PointCloud, cfg: EncoderConfig, rng: Optional[Rng] = None) -> Patches:
    out = batched_patchify(cloud.as_array(np.float64)[None], cfg, rng)
    return Patches(out.centers[0], out.patches[0], out.center_indices[0], out.groups[0])


def patch_majority_labels(labels: np.ndarray, groups: np.ndarray, n_classes: int) -> np.ndarray:
    """Most frequent member label per patch, lowest label on ties."""
    member_labels = np.asarray(labels)[groups]
    counts = np.stack([(member_labels == c).sum(axis=-1) for c in range(n_classes)], axis=-1)
    return counts.argmax(axis=-1)


class PointCloudEncoder(nn.Module):
    """LayerNorm-only point transformer emitting one token per patch."""

    def __init__(self, cfg: EncoderConfig, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.cfg = cfg
        # lightweight PointNet: shared per-point MLP with LN, max-pooled per patch
        self.patch_embed = Mlp(6, cfg.hidden, cfg.d, norm=True, generator=generator)
        self.pos_embed = Mlp(3, cfg.hidden, cfg.d, generator=generator)
        self.blocks = nn.ModuleList([SelfAttentionBlock(cfg.d, cfg.heads, cfg.mlp_ratio, generator) for _ in range(cfg.depth)])
        self.ln_final = LayerNorm(cfg.d)

    @property
    def dtype(self) -> torch.dtype:
        return self.ln_final.gamma.dtype

    def embed_patches(self, patches: torch.Tensor) -> torch.Tensor:
        if patches.shape[-1] != 6:
            raise ValueError(f"patch features must be 6-wide, got {patches.shape[-1]}")
        return self.patch_embed(patches).amax(dim=-2)

    def positional_embed(self, centers: torch.Tensor) -> torch.Tensor:
        return self.pos_embed(centers)

    def encode_patches(self, centers: torch.Tensor, patches: torch.Tensor) -> GeometricTokens:
        x = self.embed_patches(patches) + self.positional_embed(centers)
        for block in self.blocks:
            x = block(x)
        return GeometricTokens(self.ln_final(x), centers)

    def encode(self, clouds: Union[np.ndarray, PointCloud], rng: Optional[Rng] = None) -> GeometricTokens:
        """Encode a PointCloud or a (..., n_p, 6) array of clouds."""
        if isinstance(clouds, PointCloud):
            clouds = clouds.as_array(np.float64)
        clouds = np.asarray(clouds)
        lead = clouds.shape[:-2]
        flat = clouds.reshape(-1, *clouds.shape[-2:])
        patches = batched_patchify(flat, self.cfg, rng)
        centers = torch.as_tensor(patches.centers, dtype=self.dtype)
        grouped = torch.as_tensor(patches.patches, dtype=self.dtype)
        tokens = self.encode_patches(centers, grouped)
        return GeometricTokens(
            tokens.tokens.reshape(*lead, self.cfg.n_c, self.cfg.d),
            tokens.centers.reshape(*lead, self.cfg.n_c, 3),
        )

    def forward(self, centers: torch.Tensor, patches: torch.Tensor) -> GeometricTokens:
        return self.encode_patches(centers, patches)


class SegmentationHead(nn.Module):
    def __init__(self, width: int, n_classes: int, generator: Optional[torch.Generator] = None):
        super().__init__()
        if n_classes < 2:
            raise ValueError(f"segmentation needs at least 2 classes, got {n_classes}")
        self.n_classes = n_classes
        self.proj = Linear(width, n_classes, generator)

    def forward(self, tokens: GeometricTokens) -> torch.Tensor:
        return self.proj(tokens.tokens)


def segment_logits(tokens: GeometricTokens, head: SegmentationHead) -> torch.Tensor:
    return head(tokens)


def load_pretrained(encoder: PointCloudEncoder, checkpoint: Checkpoint) -> PointCloudEncoder:
    """Copy encoder weights by name from a pretraining checkpoint."""
    stored = checkpoint.config.get("encoder")
    if stored != asdict(encoder.cfg):
        raise ConfigMismatchException(f"pretrained encoder config {stored} does not match {asdict(encoder.cfg)}")
    tensors = checkpoint.subset(ENCODER_PREFIX)
    with torch.no_grad():
        for name, param in encoder.named_parameters():
            if name not in tensors:
                raise MissingParameterException(f"pretrained checkpoint lacks '{ENCODER_PREFIX}{name}'")
            if tensors[name].shape != param.shape:
                raise ConfigMismatchException(f"shape of '{name}' differs: {tuple(tensors[name].shape)} vs {tuple(param.shape)}")
            param.copy_(tensors[name].to(param.dtype))
    logging.info(f"Loaded pretrained encoder weights from a {checkpoint.kind} checkpoint at step {checkpoint.step}")
    return encoder
