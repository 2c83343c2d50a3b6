from dataclasses import replace
from typing import List, Tuple

import numpy as np

from models.env_state import EnvState
from services.numerics.rng import Rng

from .base_task import BaseTask, home_pose

EDGE_MARGIN = 0.1
GOAL_DISTANCE = (0.1, 0.25)
APPROACH_CLEARANCE = 0.015
TRAVEL_CLEARANCE = 0.03
ALIGN_LATERAL = 0.012
PUSH_OVERSHOOT = 0.9


class PushTask(BaseTask):
    """Slide a resting target into a goal region by kinematic contact with the agent."""

    NAME = "push"

    @property
    def contact_distance(self) -> float:
        return self.spec.agent_radius + self.spec.target_radius

    @property
    def push_height(self) -> float:
        return self.box.min[2] + self.spec.target_radius

    @property
    def travel_height(self) -> float:
        return self.box.min[2] + 2 * self.spec.target_radius + self.spec.agent_radius + TRAVEL_CLEARANCE

    def sample_scene(self, rng: Rng) -> EnvState:
        low, high = self.box.min[:2] + EDGE_MARGIN, self.box.max[:2] - EDGE_MARGIN
        target_xy = rng.uniform(low, high)
        goal_xy = target_xy
        for _ in range(100):
            angle = rng.uniform(-np.pi, np.pi)
            goal_xy = target_xy + rng.uniform(*GOAL_DISTANCE) * np.array([np.cos(angle), np.sin(angle)])
            if np.all(goal_xy >= low) and np.all(goal_xy <= high):
                break
        else:
            goal_xy = np.clip(goal_xy, low, high)
        return EnvState(
            agent=home_pose(self.spec),
            target=np.array([target_xy[0], target_xy[1], self.push_height]),
            distractors=self.sample_distractors(rng),
            goal=np.array([goal_xy[0], goal_xy[1], self.push_height]),
        )

    def placed_points(self, state: EnvState) -> List[np.ndarray]:
        return [state.agent[:3], state.target, state.goal] + [d.center for d in state.distractors]

    def displace_target(self, agent_xyz: np.ndarray, target: np.ndarray) -> np.ndarray:
        """Push the target out of overlap along the agent-to-target direction in the table plane."""
        reach = self.contact_distance
        offset = target[:2] - agent_xyz[:2]
        distance = float(np.linalg.norm(offset))
        if distance >= reach or abs(agent_xyz[2] - target[2]) >= reach:
            return target
        direction = offset / distance if distance > 0 else np.array([1.0, 0.0])
        moved = target.copy()
        moved[:2] = target[:2] + direction * (reach - distance)
        radius = self.spec.target_radius
        moved[:2] = np.clip(moved[:2], self.box.min[:2] + radius, self.box.max[:2] - radius)
        return moved

    def apply_motion(self, state: EnvState, agent: np.ndarray) -> EnvState:
        agent = self.clamp_agent(agent)
        return replace(state, agent=agent, target=self.displace_target(agent[:3], state.target), step_count=state.step_count + 1)

    def goal_distance(self, state: EnvState) -> float:
        return float(np.linalg.norm(state.target[:2] - state.goal[:2]))

    def expert_waypoint(self, state: EnvState) -> Tuple[np.ndarray, float]:
        to_goal = state.goal[:2] - state.target[:2]
        if np.linalg.norm(to_goal) < 1e-9:
            return state.agent[:3].copy(), float(state.agent[3])
        direction = to_goal / np.linalg.norm(to_goal)
        bearing = float(np.arctan2(direction[1], direction[0]))
        reach = self.contact_distance

        relative = state.agent[:2] - state.target[:2]
        along = float(relative @ direction)
        lateral = float(np.linalg.norm(relative - along * direction))
        aligned = along < -reach / 2 and lateral < ALIGN_LATERAL
        z = state.agent[2]

        if aligned and z <= self.push_height + 0.01:
            xy = state.goal[:2] - direction * reach * PUSH_OVERSHOOT
            return np.array([xy[0], xy[1], self.push_height]), bearing
        if aligned:
            return np.array([state.agent[0], state.agent[1], self.push_height]), bearing
        if z < self.travel_height - 0.01 and np.linalg.norm(relative) < reach + TRAVEL_CLEARANCE:
            return np.array([state.agent[0], state.agent[1], self.travel_height]), bearing
        behind = state.target[:2] - direction * (reach + APPROACH_CLEARANCE)
        return np.array([behind[0], behind[1], self.travel_height]), bearing
