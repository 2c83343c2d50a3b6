import numpy as np

from models.config import TaskSpec
from models.env_state import EnvState
from services.numerics.rng import Rng

from .environment import initialize_task

MAX_YAW_STEP = 0.25
JITTER_CLIP_SIGMAS = 3.0


def _wrap(angle: float) -> float:
    return float(np.arctan2(np.sin(angle), np.cos(angle)))


def bounded_jitter(sigma: float, rng: Rng) -> np.ndarray:
    """Isotropic Gaussian xyz jitter with its norm clipped to 3 sigma."""
    jitter = rng.normal(0.0, sigma, size=3)
    norm = float(np.linalg.norm(jitter))
    limit = JITTER_CLIP_SIGMAS * sigma
    if norm > limit:
        jitter *= limit / norm
    return jitter


def scripted_expert(state: EnvState, spec: TaskSpec, rng: Rng) -> np.ndarray:
    """Absolute joint target: a bounded straight-line step toward the task waypoint plus small jitter."""
    task = initialize_task(spec)
    waypoint, bearing = task.expert_waypoint(state)
    position = state.agent[:3]
    offset = waypoint - position
    distance = float(np.linalg.norm(offset))
    if distance > spec.max_step_size:
        offset *= spec.max_step_size / distance

    yaw = float(state.agent[3])
    yaw = _wrap(yaw + float(np.clip(_wrap(bearing - yaw), -MAX_YAW_STEP, MAX_YAW_STEP)))
    action = np.concatenate([position + offset + bounded_jitter(spec.expert_jitter, rng), [yaw]])
    return task.clamp_agent(action)
