from abc import ABC, abstractmethod
from typing import List, Tuple

import numpy as np

from models.config import TaskSpec
from models.env_state import Distractor, EnvState
from models.point_cloud import Aabb
from services.numerics.rng import Rng

PLACEMENT_ATTEMPTS = 1000
DISTRACTOR_HALF_EXTENT = (0.02, 0.04)


class PlacementException(Exception):
    pass


def workspace(spec: TaskSpec) -> Aabb:
    return Aabb(np.asarray(spec.workspace_min), np.asarray(spec.workspace_max))


def home_pose(spec: TaskSpec) -> np.ndarray:
    """Fixed start: above the workspace center, yaw 0."""
    low, high = np.asarray(spec.workspace_min, dtype=np.float64), np.asarray(spec.workspace_max, dtype=np.float64)
    center = (low + high) / 2.0
    return np.array([center[0], center[1], low[2] + 0.6 * (high[2] - low[2]), 0.0])


def separated(points: List[np.ndarray], min_distance: float) -> bool:
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            if np.linalg.norm(points[i] - points[j]) < min_distance:
                return False
    return True


class BaseTask(ABC):
    NAME = ""

    def __init__(self, spec: TaskSpec):
        if spec.name != self.NAME:
            raise ValueError(f"task '{self.NAME}' cannot run spec '{spec.name}'")
        self.spec = spec
        self.box = workspace(spec)

    def reset(self, rng: Rng) -> EnvState:
        """Rejection-sample a scene until every placed entity is 2x tolerance from the others."""
        min_distance = 2.0 * self.spec.success_tolerance
        for _ in range(PLACEMENT_ATTEMPTS):
            state = self.sample_scene(rng)
            if separated(self.placed_points(state), min_distance):
                return state
        raise PlacementException(f"could not place a '{self.NAME}' scene after {PLACEMENT_ATTEMPTS} attempts")

    @abstractmethod
    def sample_scene(self, rng: Rng) -> EnvState:
        pass

    @abstractmethod
    def placed_points(self, state: EnvState) -> List[np.ndarray]:
        pass

    @abstractmethod
    def apply_motion(self, state: EnvState, agent: np.ndarray) -> EnvState:
        """Move the agent to its clamped new pose and apply task-specific effects."""
        pass

    @abstractmethod
    def goal_distance(self, state: EnvState) -> float:
        pass

    @abstractmethod
    def expert_waypoint(self, state: EnvState) -> Tuple[np.ndarray, float]:
        """Next xyz the expert heads for and the bearing its yaw turns toward."""
        pass

    def is_success(self, state: EnvState) -> bool:
        return self.goal_distance(state) <= self.spec.success_tolerance

    def sample_distractors(self, rng: Rng) -> List[Distractor]:
        low, high = self.box.min, self.box.max
        distractors = []
        for _ in range(self.spec.n_distractors):
            half = float(rng.uniform(*DISTRACTOR_HALF_EXTENT))
            xy = rng.uniform(low[:2] + half, high[:2] - half)
            distractors.append(Distractor(np.array([xy[0], xy[1], low[2] + half]), half))
        return distractors

    def clamp_agent(self, agent: np.ndarray) -> np.ndarray:
        agent = np.asarray(agent, dtype=np.float64).copy()
        agent[:3] = self.box.clamp(agent[:3])
        agent[3] = np.arctan2(np.sin(agent[3]), np.cos(agent[3]))
        return agent
