from dataclasses import replace
from typing import List, Tuple

import numpy as np

from models.env_state import EnvState
from services.numerics.rng import Rng

from .base_task import BaseTask, home_pose


class ReachTask(BaseTask):
    """Bring the agent point within tolerance of a floating target."""

    NAME = "reach"

    def sample_scene(self, rng: Rng) -> EnvState:
        radius = self.spec.target_radius
        target = rng.uniform(self.box.min + radius, self.box.max - radius)
        return EnvState(agent=home_pose(self.spec), target=target, distractors=self.sample_distractors(rng))

    def placed_points(self, state: EnvState) -> List[np.ndarray]:
        return [state.agent[:3], state.target] + [d.center for d in state.distractors]

    def apply_motion(self, state: EnvState, agent: np.ndarray) -> EnvState:
        return replace(state, agent=self.clamp_agent(agent), step_count=state.step_count + 1)

    def goal_distance(self, state: EnvState) -> float:
        return float(np.linalg.norm(state.agent[:3] - state.target))

    def expert_waypoint(self, state: EnvState) -> Tuple[np.ndarray, float]:
        delta = state.target[:2] - state.agent[:2]
        bearing = float(np.arctan2(delta[1], delta[0])) if np.linalg.norm(delta) > 1e-9 else float(state.agent[3])
        return state.target.copy(), bearing
