import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import torch
from torch import nn

from models.checkpoint import Checkpoint
from models.config import Config, config_from_dict
from services.decoder import ActionDecoder, NoisyActions
from services.encoder import ConfigMismatchException, GeometricTokens, MissingParameterException, PointCloudEncoder
from services.numerics.optim import export_state, import_state
from services.numerics.rng import Rng
from services.policy.dataset import ObservationBatch
from services.policy.normalizer import STATS_PREFIX, NormalizationStats

POLICY_KIND = "policy"


@dataclass
class ObsContext:
    geo: GeometricTokens
    proprio: torch.Tensor


class R3DPolicy(nn.Module):
    """Point-cloud encoder plus diffusion-transformer decoder."""

    def __init__(self, config: Config, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.config = config
        self.encoder = PointCloudEncoder(config.encoder, generator)
        self.decoder = ActionDecoder(config.decoder, config.encoder.d, generator)

    def encode_context(self, observations: ObservationBatch, rng: Optional[Rng]) -> ObsContext:
        geo = self.encoder.encode(observations.clouds, rng)
        return ObsContext(geo, observations.proprio.to(self.decoder.dtype))

    def predict_noise(self, context: ObsContext, noisy: NoisyActions) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        return self.decoder(context.geo, context.proprio, noisy)


def build_policy(config: Config, seed: int = 0) -> R3DPolicy:
    generator = torch.Generator()
    generator.manual_seed(seed)
    return R3DPolicy(config, generator)


def policy_to_checkpoint(policy: R3DPolicy, stats: NormalizationStats, step: int, optimizer: Optional[torch.optim.Optimizer] = None,
                         meta: Optional[Dict[str, Any]] = None) -> Checkpoint:
    tensors = {name: param.detach().to(torch.float32).clone() for name, param in policy.named_parameters()}
    tensors.update(stats.to_tensors())
    if optimizer is not None:
        tensors.update(export_state(optimizer, list(policy.named_parameters())))
    return Checkpoint(config=policy.config.to_dict(), tensors=tensors, step=step, kind=POLICY_KIND, meta=dict(meta or {}))


def load_policy_weights(policy: R3DPolicy, checkpoint: Checkpoint):
    """Copy weights into an existing policy whose architecture must match the checkpoint's."""
    stored = config_from_dict(checkpoint.config)
    for section in ("encoder", "decoder"):
        if getattr(stored, section) != getattr(policy.config, section):
            raise ConfigMismatchException(f"checkpoint {section} config {getattr(stored, section)} does not match {getattr(policy.config, section)}")
    with torch.no_grad():
        for name, param in policy.named_parameters():
            if name not in checkpoint.tensors:
                raise MissingParameterException(f"checkpoint lacks parameter '{name}'")
            tensor = checkpoint.tensors[name]
            if tensor.shape != param.shape:
                raise ConfigMismatchException(f"shape of '{name}' differs: {tuple(tensor.shape)} vs {tuple(param.shape)}")
            param.copy_(tensor.to(param.dtype))


def policy_from_checkpoint(checkpoint: Checkpoint) -> Tuple[R3DPolicy, NormalizationStats]:
    if checkpoint.kind != POLICY_KIND:
        raise ConfigMismatchException(f"expected a {POLICY_KIND} checkpoint, got '{checkpoint.kind}'")
    config = config_from_dict(checkpoint.config).validate()
    policy = R3DPolicy(config)
    load_policy_weights(policy, checkpoint)
    if not any(name.startswith(STATS_PREFIX) for name in checkpoint.tensors):
        raise MissingParameterException("checkpoint has no normalization stats")
    logging.debug(f"restored policy at step {checkpoint.step}")
    return policy, NormalizationStats.from_tensors(checkpoint.tensors)


def restore_optimizer(optimizer: torch.optim.Optimizer, policy: R3DPolicy, checkpoint: Checkpoint):
    import_state(optimizer, list(policy.named_parameters()), checkpoint.tensors)
