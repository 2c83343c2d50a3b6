import logging
import math
from dataclasses import dataclass
from typing import Any, Optional, Protocol, Tuple, Union

import torch

from models.config import DecoderConfig, DiffusionConfig
from services.decoder import NoisyActions
from services.numerics.functional import ShapeMismatchException
from services.numerics.rng import Rng

COSINE_OFFSET = 0.008
MAX_BETA = 0.999
LINEAR_BETA_START = 1e-4
LINEAR_BETA_END = 0.02


class DiffusionException(ValueError):
    pass


@dataclass
class NoiseSchedule:
    """Per-iteration tables; entry i belongs to diffusion iteration k = i + 1."""
    kind: str
    betas: torch.Tensor
    alphas: torch.Tensor
    alpha_bars: torch.Tensor

    @property
    def K(self) -> int:
        return len(self.betas)

    @classmethod
    def from_alpha_bars(cls, alpha_bars, kind: str = "custom") -> "NoiseSchedule":
        alpha_bars = torch.as_tensor(alpha_bars, dtype=torch.float64)
        previous = torch.cat([torch.ones(1, dtype=torch.float64), alpha_bars[:-1]])
        alphas = torch.where(previous > 0, alpha_bars / previous.clamp_min(1e-300), torch.zeros_like(alpha_bars))
        return cls(kind, 1.0 - alphas, alphas, alpha_bars)


def _cosine_alpha_bar(t: float) -> float:
    return math.cos((t + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * math.pi / 2) ** 2


def make_schedule(kind: str, K: int) -> NoiseSchedule:
    if K < 1:
        raise DiffusionException(f"schedule needs K >= 1, got {K}")
    if kind == "squared_cosine":
        betas = torch.tensor(
            [min(1.0 - _cosine_alpha_bar(k / K) / _cosine_alpha_bar((k - 1) / K), MAX_BETA) for k in range(1, K + 1)],
            dtype=torch.float64,
        )
    elif kind == "linear":
        betas = torch.linspace(LINEAR_BETA_START, LINEAR_BETA_END, K, dtype=torch.float64)
    else:
        raise DiffusionException(f"unknown schedule kind '{kind}'")
    alphas = 1.0 - betas
    return NoiseSchedule(kind, betas, alphas, torch.cumprod(alphas, dim=0))


def _per_sample(values: torch.Tensor, k: Union[int, torch.Tensor], like: torch.Tensor, K: int) -> torch.Tensor:
    k = torch.as_tensor(k, dtype=torch.long)
    if (k < 1).any() or (k > K).any():
        raise DiffusionException(f"diffusion iteration out of range [1, {K}]: {k.tolist()}")
    picked = values[k - 1].to(like.dtype)
    return picked.reshape(picked.shape + (1,) * (like.dim() - picked.dim()))


def add_noise(a0: torch.Tensor, eps: torch.Tensor, k: Union[int, torch.Tensor], schedule: NoiseSchedule) -> torch.Tensor:
    """a_k = sqrt(alpha_bar_k) a0 + sqrt(1 - alpha_bar_k) eps; k may be per-sample."""
    if a0.shape != eps.shape:
        raise ShapeMismatchException(f"clean actions {tuple(a0.shape)} and noise {tuple(eps.shape)} differ")
    alpha_bar = _per_sample(schedule.alpha_bars, k, a0, schedule.K)
    return torch.sqrt(alpha_bar) * a0 + torch.sqrt(1.0 - alpha_bar) * eps


class DenoisingModel(Protocol):
    def encode_context(self, observations: Any, rng: Optional[Rng]) -> Any:
        ...

    def predict_noise(self, context: Any, noisy: NoisyActions) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        ...


@dataclass
class DiffusionBatch:
    observations: Any
    joint: torch.Tensor
    ee: Optional[torch.Tensor]


@dataclass
class LossBreakdown:
    loss: torch.Tensor
    loss_joint: torch.Tensor
    loss_ee: torch.Tensor


def training_loss(model: DenoisingModel, batch: DiffusionBatch, schedule: NoiseSchedule, loss_cfg: DiffusionConfig, rng: Rng) -> LossBreakdown:
    """Noise both branches at a shared per-sample k and regress the injected noise."""
    generator = rng.torch_generator()
    size = batch.joint.shape[0]
    k = torch.randint(1, schedule.K + 1, (size,), generator=generator)
    eps_joint = torch.randn(batch.joint.shape, generator=generator, dtype=batch.joint.dtype)
    eps_ee = torch.randn(batch.ee.shape, generator=generator, dtype=batch.ee.dtype) if batch.ee is not None else None

    noisy = NoisyActions(
        joint=add_noise(batch.joint, eps_joint, k, schedule),
        ee=add_noise(batch.ee, eps_ee, k, schedule) if batch.ee is not None else None,
        k=k,
    )
    context = model.encode_context(batch.observations, rng)
    pred_joint, pred_ee = model.predict_noise(context, noisy)
    if pred_joint.shape != eps_joint.shape:
        raise ShapeMismatchException(f"joint prediction {tuple(pred_joint.shape)} does not match {tuple(eps_joint.shape)}")

    loss_joint = torch.mean((pred_joint - eps_joint) ** 2)
    if pred_ee is not None and eps_ee is not None:
        loss_ee = torch.mean((pred_ee - eps_ee) ** 2)
    else:
        loss_ee = torch.zeros((), dtype=loss_joint.dtype)
    return LossBreakdown(loss_joint + loss_cfg.lambda_ee * loss_ee, loss_joint, loss_ee)


def posterior_mean(a_k: torch.Tensor, eps_hat: torch.Tensor, k: int, schedule: NoiseSchedule) -> torch.Tensor:
    alpha = schedule.alphas[k - 1].item()
    beta = schedule.betas[k - 1].item()
    alpha_bar = schedule.alpha_bars[k - 1].item()
    return (a_k - (beta / math.sqrt(1.0 - alpha_bar)) * eps_hat) / math.sqrt(alpha)


@torch.no_grad()
def sample(model: DenoisingModel, observations: Any, schedule: NoiseSchedule, rng: Rng, cfg: DecoderConfig, batch_size: int = 1,
           dtype: torch.dtype = torch.float32) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
    """Ancestral DDPM sampling from k = K down to 1; returns the k = 0 state."""
    generator = rng.torch_generator()
    context = model.encode_context(observations, None)
    joint = torch.randn((batch_size, cfg.t_a, cfg.n_q), generator=generator, dtype=dtype)
    ee = torch.randn((batch_size, cfg.t_a, 7), generator=generator, dtype=dtype) if cfg.enable_ee_branch else None
    for k in range(schedule.K, 0, -1):
        steps = torch.full((batch_size,), k, dtype=torch.long)
        eps_joint, eps_ee = model.predict_noise(context, NoisyActions(joint, ee, steps))
        joint = posterior_mean(joint, eps_joint, k, schedule)
        if ee is not None:
            ee = posterior_mean(ee, eps_ee, k, schedule)
        if k > 1:
            sigma = math.sqrt(schedule.betas[k - 1].item())
            joint = joint + sigma * torch.randn(joint.shape, generator=generator, dtype=dtype)
            if ee is not None:
                ee = ee + sigma * torch.randn(ee.shape, generator=generator, dtype=dtype)
    logging.debug(f"sampled {batch_size} chunk(s) over {schedule.K} iterations")
    return joint, ee
