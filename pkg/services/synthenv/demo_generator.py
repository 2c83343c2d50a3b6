import logging
from dataclasses import replace
from typing import List, Optional, Tuple

import numpy as np

from models.config import TaskSpec
from models.dataset_manifest import DatasetManifest
from models.episode import Episode
from models.point_cloud import PointCloud
from repos import DemoRepository
from services.numerics.rng import Rng

from .environment import DEFAULT_N_P, forward_kinematics, render_cloud, reset, step
from .expert import scripted_expert

MAX_FAILURE_RATE = 0.5


class ExpertFailureException(Exception):
    pass


def rollout_expert(spec: TaskSpec, rng: Rng, n_p: int = DEFAULT_N_P) -> Episode:
    """One expert episode; actions are rounded to f32 before stepping so stored frames replay exactly."""
    scene_rng, render_rng, expert_rng = rng.split(3)
    state = reset(spec, scene_rng)
    clouds, proprio, actions, ee_poses = [], [], [], []
    success = False
    done = False
    while not done:
        cloud = render_cloud(state, spec, render_rng, n_p)
        action = scripted_expert(state, spec, expert_rng).astype(np.float32)
        clouds.append(cloud.as_array(np.float32))
        proprio.append(state.agent.astype(np.float32))
        actions.append(action)
        ee_poses.append(forward_kinematics(action.astype(np.float64)).astype(np.float32))
        state, success, done = step(state, action.astype(np.float64), spec)
    return Episode(np.stack(clouds), np.stack(proprio), np.stack(actions), np.stack(ee_poses), spec.name, success)


class DemoGenerator:
    def __init__(self, demo_repository: DemoRepository, n_p: int = DEFAULT_N_P):
        self.demo_repository = demo_repository
        self.n_p = n_p

    def gen_demos(self, spec: TaskSpec, n_episodes: int, rng: Rng, name: Optional[str] = None) -> DatasetManifest:
        if n_episodes < 1:
            raise ValueError(f"need at least one episode, got {n_episodes}")
        logging.info(f"Demo generation started: {n_episodes} '{spec.name}' episodes")
        episodes: List[Episode] = []
        attempts = 0
        while len(episodes) < n_episodes:
            attempts += 1
            episode = rollout_expert(spec, rng.child(), self.n_p)
            if episode.success:
                episodes.append(episode)
                logging.debug(f"episode {len(episodes)}/{n_episodes}: {len(episode)} frames")
            failures = attempts - len(episodes)
            if attempts >= 2 * n_episodes and failures / attempts > MAX_FAILURE_RATE:
                raise ExpertFailureException(f"expert failed {failures} of {attempts} '{spec.name}' rollouts")
        manifest = self.demo_repository.save(name or spec.name, spec.name, episodes)
        logging.info(f"Demo generation finished: {len(episodes)} episodes after {attempts} rollouts")
        return manifest


def gen_pretrain_scenes(spec: TaskSpec, n_scenes: int, rng: Rng, n_p: int = DEFAULT_N_P) -> List[Tuple[PointCloud, np.ndarray]]:
    """Labeled clouds of random resets with the agent moved to a random pose."""
    low = np.asarray(spec.workspace_min, dtype=np.float64) + spec.agent_radius
    high = np.asarray(spec.workspace_max, dtype=np.float64) - spec.agent_radius
    scenes = []
    for scene_rng in rng.split(n_scenes):
        reset_rng, pose_rng, render_rng = scene_rng.split(3)
        state = reset(spec, reset_rng)
        agent = np.concatenate([pose_rng.uniform(low, high), [pose_rng.uniform(-np.pi, np.pi)]])
        cloud = render_cloud(replace(state, agent=agent), spec, render_rng, n_p)
        scenes.append((cloud, cloud.labels))
    return scenes
