import logging
from typing import List, Optional

import numpy as np
import torch

from models.checkpoint import Checkpoint
from models.env_state import EnvState
from models.episode import ActionChunk, Observation
from services.diffusion import make_schedule, sample
from services.numerics.functional import NumericsException, ShapeMismatchException
from services.numerics.rng import Rng
from services.policy.dataset import ObservationBatch
from services.policy.model import policy_from_checkpoint
from services.policy.normalizer import canonical_quaternions

from .base_agent import BaseAgent

ENVELOPE_MARGIN = 0.1


class DiffusionAgent(BaseAgent):

    SUPPORTED_TASKS = ["reach", "push"]

    def __init__(self, checkpoint: Checkpoint):
        self.policy, self.stats = policy_from_checkpoint(checkpoint)
        config = self.policy.config
        super().__init__(config.decoder.t_o, config.decoder.t_a, config.decoder.n_q, config.encoder.n_p)
        self.task_name = config.task.name
        self.schedule = make_schedule(config.diffusion.schedule_kind, config.diffusion.k)
        self.policy.eval()

    def is_task_supported(self, task_name: str) -> bool:
        return task_name == self.task_name

    def act(self, history: List[Observation], rng: Rng, state: Optional[EnvState] = None) -> ActionChunk:
        super().act(history, rng, state)
        for observation in history:
            if len(observation.cloud) != self.n_p:
                raise ShapeMismatchException(f"cloud has {len(observation.cloud)} points, checkpoint expects n_p={self.n_p}")
        clouds = np.stack([o.cloud.as_array(np.float32) for o in history])[None]
        proprio = self.stats.proprio.normalize(np.stack([o.proprio for o in history]))[None]
        observations = ObservationBatch(clouds, torch.as_tensor(proprio))

        joint, ee = sample(self.policy, observations, self.schedule, rng, self.policy.config.decoder)
        joint = self.clamp_to_envelope(self.stats.joint.denormalize(joint[0].numpy()))
        if not np.isfinite(joint).all():
            raise NumericsException("sampled joint chunk is not finite")
        if ee is not None:
            ee = self.stats.ee.denormalize(ee[0].numpy())
            ee[:, 3:] = canonical_quaternions(ee[:, 3:])
        logging.debug(f"act: first joint target {joint[0]}")
        return ActionChunk(joint, ee)

    def clamp_to_envelope(self, joint: np.ndarray) -> np.ndarray:
        """Clip to the dataset min/max range widened by 10% of its span on each side."""
        low, high = self.stats.joint.low, self.stats.joint.high
        margin = ENVELOPE_MARGIN * (high - low)
        return np.clip(joint, low - margin, high + margin)
