import logging
from typing import Dict, List, Tuple, Type

import numpy as np

from models.config import TaskSpec
from models.env_state import EnvState
from models.point_cloud import Aabb, PointCloud
from models.task_type import SegmentClass
from services.numerics.rng import Rng
from services.pointcloud import crop_workspace, resample_to_fixed

from .base_task import BaseTask
from .push_task import PushTask
from .reach_task import ReachTask

DEFAULT_N_P = 1024
RENDER_MARGIN = 0.05
COLOR_JITTER = 0.05
GOAL_MARKER_RADIUS = 0.015
ENTITY_COLORS = {
    SegmentClass.TABLE: (0.6, 0.5, 0.4),
    SegmentClass.TARGET: (0.85, 0.1, 0.1),
    SegmentClass.DISTRACTOR: (0.1, 0.2, 0.85),
    SegmentClass.AGENT: (0.1, 0.8, 0.2),
    SegmentClass.GOAL: (0.9, 0.85, 0.1),
}

TASKS: Dict[str, Type[BaseTask]] = {
    ReachTask.NAME: ReachTask,
    PushTask.NAME: PushTask,
}


def initialize_task(spec: TaskSpec) -> BaseTask:
    if spec.name not in TASKS:
        raise ValueError(f"unknown task '{spec.name}', choose from {sorted(TASKS)}")
    return TASKS[spec.name](spec)


def forward_kinematics(joint: np.ndarray) -> np.ndarray:
    """(x, y, z, yaw) -> (x, y, z, qw, qx, qy, qz), yaw about the base z axis, w >= 0."""
    joint = np.asarray(joint, dtype=np.float64)
    half = joint[3] / 2.0
    quaternion = np.array([np.cos(half), 0.0, 0.0, np.sin(half)])
    quaternion /= np.linalg.norm(quaternion)
    if quaternion[0] < 0:
        quaternion = -quaternion
    return np.concatenate([joint[:3], quaternion])


def reset(spec: TaskSpec, rng: Rng) -> EnvState:
    return initialize_task(spec).reset(rng)


def step(state: EnvState, joint_action: np.ndarray, spec: TaskSpec) -> Tuple[EnvState, bool, bool]:
    joint_action = np.asarray(joint_action, dtype=np.float64)
    if joint_action.shape != (4,) or not np.isfinite(joint_action).all():
        raise ValueError(f"joint action must be a finite 4-vector, got {joint_action}")
    task = initialize_task(spec)
    state = task.apply_motion(state, joint_action)
    success = task.is_success(state)
    return state, success, success or state.step_count >= spec.max_steps


def goal_distance(state: EnvState, spec: TaskSpec) -> float:
    return initialize_task(spec).goal_distance(state)


def _sphere_surface(center: np.ndarray, radius: float, count: int, rng: Rng) -> np.ndarray:
    directions = rng.normal(size=(count, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return center + radius * directions


def _box_surface(center: np.ndarray, half: float, count: int, rng: Rng) -> np.ndarray:
    faces = rng.integers(0, 6, size=count)
    points = rng.uniform(-half, half, size=(count, 3))
    axis = faces // 2
    points[np.arange(count), axis] = np.where(faces % 2 == 0, -half, half)
    return center + points


def _entity(points: np.ndarray, label: SegmentClass, rng: Rng) -> PointCloud:
    color = np.clip(np.asarray(ENTITY_COLORS[label]) + rng.uniform(-COLOR_JITTER, COLOR_JITTER, size=3), 0.0, 1.0)
    return PointCloud(points, np.tile(color, (len(points), 1)), np.full(len(points), label.value))


def render_cloud(state: EnvState, spec: TaskSpec, rng: Rng, n_p: int = DEFAULT_N_P) -> PointCloud:
    """Sampled entity surfaces with per-point class labels, resampled to n_p points."""
    count = spec.cloud_points_per_entity
    low, high = np.asarray(spec.workspace_min, dtype=np.float64), np.asarray(spec.workspace_max, dtype=np.float64)

    table = np.column_stack([rng.uniform(low[0], high[0], count), rng.uniform(low[1], high[1], count), np.full(count, low[2])])
    entities: List[PointCloud] = [
        _entity(table, SegmentClass.TABLE, rng),
        _entity(_sphere_surface(state.target, spec.target_radius, count, rng), SegmentClass.TARGET, rng),
    ]
    for distractor in state.distractors:
        entities.append(_entity(_box_surface(distractor.center, distractor.half_extent, count, rng), SegmentClass.DISTRACTOR, rng))
    entities.append(_entity(_sphere_surface(state.agent[:3], spec.agent_radius, count, rng), SegmentClass.AGENT, rng))
    if state.goal is not None:
        entities.append(_entity(_sphere_surface(state.goal, GOAL_MARKER_RADIUS, count, rng), SegmentClass.GOAL, rng))

    cloud = PointCloud(
        np.concatenate([e.points for e in entities]),
        np.concatenate([e.colors for e in entities]),
        np.concatenate([e.labels for e in entities]),
    )
    cloud = crop_workspace(cloud, Aabb(low - RENDER_MARGIN, high + RENDER_MARGIN))
    logging.debug(f"rendered {len(cloud)} points from {len(entities)} entities")
    return resample_to_fixed(cloud, n_p, rng)
