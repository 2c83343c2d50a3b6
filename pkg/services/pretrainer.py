import logging
import os
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from models.checkpoint import Checkpoint
from models.config import Config
from models.point_cloud import PointCloud
from models.records import PretrainMetricsRow
from repos import CheckpointRepository, MetricsRepository
from services.encoder import ENCODER_PREFIX, PointCloudEncoder, SegmentationHead, batched_patchify, patch_majority_labels, segment_logits
from services.numerics.autograd import backward
from services.numerics.optim import adamw_step, build_optimizer
from services.numerics.rng import Rng
from services.synthenv import gen_pretrain_scenes

PRETRAIN_KIND = "pretrain"
SEG_HEAD_PREFIX = "seg_head."
METRICS_FILE = "pretrain_metrics.csv"


@dataclass
class PretrainResult:
    checkpoint: Checkpoint
    accuracy: float
    steps: int


class SegmentationPretrainer:
    """Patch-level semantic segmentation on synthetic scenes to warm-start the point-cloud encoder."""

    def __init__(self, checkpoint_repository: CheckpointRepository, metrics_repository: MetricsRepository, deterministic: bool = False):
        self.checkpoint_repository = checkpoint_repository
        self.metrics_repository = metrics_repository
        self.deterministic = deterministic

    def patch_batch(self, encoder: PointCloudEncoder, scenes: List[Tuple[PointCloud, np.ndarray]], n_classes: int,
                    rng: Optional[Rng]) -> Tuple[torch.Tensor, torch.Tensor]:
        clouds = np.stack([cloud.as_array(np.float64) for cloud, _ in scenes])
        patches = batched_patchify(clouds, encoder.cfg, rng)
        labels = np.stack([patch_majority_labels(l, g, n_classes) for (_, l), g in zip(scenes, patches.groups)])
        tokens = encoder.encode_patches(torch.as_tensor(patches.centers, dtype=encoder.dtype), torch.as_tensor(patches.patches, dtype=encoder.dtype))
        return tokens, torch.as_tensor(labels, dtype=torch.long)

    @torch.no_grad()
    def accuracy(self, encoder: PointCloudEncoder, head: SegmentationHead, scenes: List[Tuple[PointCloud, np.ndarray]], batch_size: int) -> Tuple[float, float]:
        correct, total, loss = 0, 0, 0.0
        for start in range(0, len(scenes), batch_size):
            tokens, labels = self.patch_batch(encoder, scenes[start:start + batch_size], head.n_classes, None)
            logits = segment_logits(tokens, head)
            loss += F.cross_entropy(logits.reshape(-1, head.n_classes), labels.reshape(-1), reduction="sum").item()
            correct += int((logits.argmax(dim=-1) == labels).sum())
            total += labels.numel()
        return correct / total, loss / total

    def pretrain(self, config: Config) -> PretrainResult:
        cfg = config.pretrain
        scene_rng, init_rng, shuffle_rng, step_rng = Rng(cfg.seed).split(4)
        scenes = gen_pretrain_scenes(config.task, cfg.scenes, scene_rng, config.encoder.n_p)
        n_held_out = max(1, int(round(len(scenes) * cfg.held_out_fraction)))
        train_scenes, held_out = scenes[:-n_held_out], scenes[-n_held_out:]

        generator = init_rng.torch_generator()
        encoder = PointCloudEncoder(config.encoder, generator)
        head = SegmentationHead(config.encoder.d, cfg.n_classes, generator)
        params = list(encoder.parameters()) + list(head.parameters())
        optimizer = build_optimizer(params, cfg.lr, weight_decay=cfg.weight_decay)

        logging.info(f"Pretraining started: {len(train_scenes)} train scenes, {len(held_out)} held-out, {cfg.n_classes} classes")
        step = 0
        accuracy = 0.0
        for epoch in range(cfg.epochs):
            order = shuffle_rng.permutation(len(train_scenes))
            for start in range(0, len(order), cfg.batch_size):
                started = time.perf_counter()
                batch = [train_scenes[i] for i in order[start:start + cfg.batch_size]]
                tokens, labels = self.patch_batch(encoder, batch, cfg.n_classes, step_rng.child())
                logits = segment_logits(tokens, head)
                loss = F.cross_entropy(logits.reshape(-1, cfg.n_classes), labels.reshape(-1))
                optimizer.zero_grad(set_to_none=True)
                backward(loss, params)
                adamw_step(optimizer)
                step += 1
                batch_accuracy = float((logits.argmax(dim=-1) == labels).float().mean())
                self.metrics_repository.append(self._row(step, epoch, "train", loss.item(), batch_accuracy, started))

            started = time.perf_counter()
            accuracy, held_out_loss = self.accuracy(encoder, head, held_out, cfg.batch_size)
            self.metrics_repository.append(self._row(step, epoch, "val", held_out_loss, accuracy, started))
            self.metrics_repository.flush()
            logging.info(f"Pretrain epoch {epoch + 1}/{cfg.epochs}: held-out patch accuracy {accuracy:.4f}")

        tensors = {f"{ENCODER_PREFIX}{name}": p.detach().clone() for name, p in encoder.named_parameters()}
        tensors.update({f"{SEG_HEAD_PREFIX}{name}": p.detach().clone() for name, p in head.named_parameters()})
        checkpoint = Checkpoint(config=config.to_dict(), tensors=tensors, step=step, kind=PRETRAIN_KIND, meta={"accuracy": accuracy})
        self.checkpoint_repository.save("pretrain", checkpoint)
        logging.info(f"Pretraining finished after {step} steps, held-out patch accuracy {accuracy:.4f}")
        return PretrainResult(checkpoint, accuracy, step)

    def _row(self, step: int, epoch: int, split: str, loss: float, accuracy: float, started: float) -> PretrainMetricsRow:
        wall_ms = 0 if self.deterministic else int((time.perf_counter() - started) * 1000)
        return PretrainMetricsRow(step=step, epoch=epoch, split=split, loss=loss, accuracy=accuracy, wall_ms=wall_ms)


def pretrain(config: Config, out_dir: str, deterministic: bool = False) -> PretrainResult:
    trainer = SegmentationPretrainer(CheckpointRepository(out_dir), MetricsRepository(os.path.join(out_dir, METRICS_FILE), PretrainMetricsRow), deterministic)
    return trainer.pretrain(config)
