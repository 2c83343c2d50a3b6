import logging
import math
import os
import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import torch

from models.checkpoint import Checkpoint
from models.config import Config
from models.episode import Episode
from models.records import MetricsRow
from repos import CheckpointRepository, DemoRepository, MetricsRepository, load_checkpoint
from services.diffusion import LossBreakdown, make_schedule, training_loss
from services.encoder import ConfigMismatchException, load_pretrained
from services.numerics.autograd import backward
from services.numerics.optim import adamw_step, build_optimizer
from services.numerics.rng import Rng
from services.policy.dataset import WindowDataset, build_windows, split_episodes
from services.policy.model import R3DPolicy, build_policy, policy_to_checkpoint
from services.policy.normalizer import NormalizationStats

METRICS_FILE = "metrics.csv"


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    steps: int
    final_train_loss: float
    final_val_loss: Optional[float]


def learning_rate(step: int, total_steps: int, base_lr: float, schedule: str, warmup_steps: int) -> float:
    """Learning rate for the 0-based optimizer step."""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    if schedule == "cosine":
        progress = (step - warmup_steps) / max(1, total_steps - warmup_steps)
        return base_lr * 0.5 * (1.0 + math.cos(math.pi * min(1.0, progress)))
    return base_lr


def check_dataset_dims(config: Config, episodes: List[Episode]):
    for index, episode in enumerate(episodes):
        if episode.n_p != config.encoder.n_p:
            raise ConfigMismatchException(f"episode {index} has n_p={episode.n_p}, config expects encoder.n_p={config.encoder.n_p}")
        if episode.n_q != config.decoder.n_q:
            raise ConfigMismatchException(f"episode {index} has n_q={episode.n_q}, config expects decoder.n_q={config.decoder.n_q}")


class PolicyTrainer:
    def __init__(self, checkpoint_repository: CheckpointRepository, metrics_repository: MetricsRepository, deterministic: bool = False):
        self.checkpoint_repository = checkpoint_repository
        self.metrics_repository = metrics_repository
        self.deterministic = deterministic

    def train(self, config: Config, episodes: List[Episode], init_encoder: Optional[Checkpoint] = None) -> TrainResult:
        train_cfg = config.train
        check_dataset_dims(config, episodes)
        train_episodes, val_episodes = split_episodes(episodes, train_cfg.val_fraction)
        stats = NormalizationStats.from_episodes(episodes)
        t_o, t_a = config.decoder.t_o, config.decoder.t_a
        train_set = WindowDataset(build_windows(train_episodes, t_o, t_a), stats)
        val_set = WindowDataset(build_windows(val_episodes, t_o, t_a), stats) if val_episodes else None

        policy = build_policy(config, train_cfg.seed)
        if init_encoder is not None:
            load_pretrained(policy.encoder, init_encoder)
        optimizer = build_optimizer(policy.parameters(), train_cfg.lr, train_cfg.betas, train_cfg.eps, train_cfg.weight_decay)
        schedule = make_schedule(config.diffusion.schedule_kind, config.diffusion.k)
        augment_cfg = train_cfg.augment if train_cfg.augment_enabled else None

        shuffle_rng, step_rng, val_rng = Rng(train_cfg.seed).split(3)
        steps_per_epoch = math.ceil(len(train_set) / train_cfg.batch_size)
        total_steps = steps_per_epoch * train_cfg.epochs
        if train_cfg.max_steps is not None:
            total_steps = min(total_steps, train_cfg.max_steps)

        logging.info(f"Training started: {len(train_set)} train windows, {len(val_set) if val_set else 0} val windows, "
                     f"{total_steps} steps, {sum(p.numel() for p in policy.parameters())} parameters")
        step = 0
        best_loss = math.inf
        train_loss = math.nan
        val_loss = None
        for epoch in range(train_cfg.epochs):
            if step >= total_steps:
                break
            order = shuffle_rng.permutation(len(train_set))
            epoch_losses = []
            for start in range(0, len(order), train_cfg.batch_size):
                if step >= total_steps:
                    break
                started = time.perf_counter()
                batch_rng, loss_rng = step_rng.child().split(2)
                batch = train_set.batch(order[start:start + train_cfg.batch_size], batch_rng, augment_cfg)

                policy.train()
                optimizer.zero_grad(set_to_none=True)
                losses = training_loss(policy, batch, schedule, config.diffusion, loss_rng)
                backward(losses.loss, policy.parameters())
                for group in optimizer.param_groups:
                    group["lr"] = learning_rate(step, total_steps, train_cfg.lr, train_cfg.lr_schedule, train_cfg.lr_warmup_steps)
                adamw_step(optimizer)
                step += 1

                epoch_losses.append(losses.loss.item())
                self.metrics_repository.append(self._row(step, epoch, "train", losses, started))
                logging.debug(f"step {step}: loss {losses.loss.item():.6f}")

            train_loss = float(np.mean(epoch_losses))
            if val_set is not None:
                started = time.perf_counter()
                val_losses = self.validate(policy, val_set, config, val_rng.restart())
                val_loss = val_losses.loss.item()
                self.metrics_repository.append(self._row(step, epoch, "val", val_losses, started))
            self.metrics_repository.flush()
            logging.info(f"Epoch {epoch + 1}/{train_cfg.epochs}: step {step}, train loss {train_loss:.6f}"
                         + (f", val loss {val_loss:.6f}" if val_loss is not None else ""))

            monitored = val_loss if val_loss is not None else train_loss
            if monitored < best_loss:
                best_loss = monitored
                self.checkpoint_repository.save("best", policy_to_checkpoint(policy, stats, step, meta={"epoch": epoch, "loss": monitored}))
            if (epoch + 1) % train_cfg.checkpoint_every == 0:
                self.checkpoint_repository.save(f"epoch_{epoch + 1:04d}", policy_to_checkpoint(policy, stats, step, optimizer))

        final = policy_to_checkpoint(policy, stats, step, optimizer, meta={"train_loss": train_loss, "val_loss": val_loss})
        self.checkpoint_repository.save("final", final)
        self.metrics_repository.flush()
        logging.info(f"Training finished after {step} steps, final train loss {train_loss:.6f}")
        return TrainResult(final, step, train_loss, val_loss)

    @torch.no_grad()
    def validate(self, policy: R3DPolicy, dataset: WindowDataset, config: Config, rng: Rng) -> LossBreakdown:
        """Size-weighted mean denoising loss, no augmentation."""
        policy.eval()
        schedule = make_schedule(config.diffusion.schedule_kind, config.diffusion.k)
        totals = torch.zeros(3, dtype=torch.float64)
        batch_size = config.train.batch_size
        for start in range(0, len(dataset), batch_size):
            indices = list(range(start, min(start + batch_size, len(dataset))))
            batch_rng, loss_rng = rng.child().split(2)
            losses = training_loss(policy, dataset.batch(indices, batch_rng), schedule, config.diffusion, loss_rng)
            totals += len(indices) * torch.tensor([losses.loss.item(), losses.loss_joint.item(), losses.loss_ee.item()], dtype=torch.float64)
        mean = totals / len(dataset)
        return LossBreakdown(mean[0], mean[1], mean[2])

    def _row(self, step: int, epoch: int, split: str, losses: LossBreakdown, started: float) -> MetricsRow:
        wall_ms = 0 if self.deterministic else int((time.perf_counter() - started) * 1000)
        return MetricsRow(step=step, epoch=epoch, split=split, loss=float(losses.loss), loss_joint=float(losses.loss_joint),
                          loss_ee=float(losses.loss_ee), wall_ms=wall_ms)


def train(config: Config, data_dir: str, out_dir: str, init_encoder_path: Optional[str] = None, deterministic: bool = False) -> TrainResult:
    """Load demonstrations, train a policy and write checkpoints plus metrics under out_dir."""
    episodes = DemoRepository(data_dir).load()
    init_encoder = load_checkpoint(init_encoder_path) if init_encoder_path else None
    trainer = PolicyTrainer(CheckpointRepository(out_dir), MetricsRepository(os.path.join(out_dir, METRICS_FILE)), deterministic)
    return trainer.train(config, episodes, init_encoder)
