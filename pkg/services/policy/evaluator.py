import logging
from collections import deque
from dataclasses import dataclass
from typing import List

import numpy as np

from models.checkpoint import Checkpoint
from models.config import TaskSpec
from models.env_state import EnvState
from models.episode import ActionChunk, Observation
from models.records import EpisodeRecord
from services.encoder import ConfigMismatchException
from services.numerics.rng import Rng
from services.policy.agents import BaseAgent, DiffusionAgent
from services.synthenv import goal_distance, render_cloud, reset, step

ENV_JOINT_DIM = 4


@dataclass
class EvaluationResult:
    success_rate: float
    records: List[EpisodeRecord]


def act(checkpoint: Checkpoint, history: List[Observation], rng: Rng) -> ActionChunk:
    return DiffusionAgent(checkpoint).act(history, rng)


class PolicyEvaluator:
    def __init__(self, spec: TaskSpec, execute_steps: int):
        self.spec = spec
        self.execute_steps = execute_steps

    def check_agent(self, agent: BaseAgent):
        if not agent.is_task_supported(self.spec.name):
            raise ConfigMismatchException(f"agent does not support task '{self.spec.name}' (supports {agent.supported_tasks})")
        if agent.n_q != ENV_JOINT_DIM:
            raise ConfigMismatchException(f"agent emits {agent.n_q} joint dims, environment takes {ENV_JOINT_DIM}")
        if not 1 <= self.execute_steps <= agent.t_a:
            raise ConfigMismatchException(f"execute_steps {self.execute_steps} outside [1, t_a={agent.t_a}]")

    def observe(self, state: EnvState, agent: BaseAgent, rng: Rng) -> Observation:
        return Observation(render_cloud(state, self.spec, rng, agent.n_p), state.agent.astype(np.float32))

    def run_episode(self, agent: BaseAgent, index: int, rng: Rng) -> EpisodeRecord:
        scene_rng, render_rng, act_rng = rng.split(3)
        state = reset(self.spec, scene_rng)
        first = self.observe(state, agent, render_rng)
        history = deque([first] * agent.t_o, maxlen=agent.t_o)
        success = False
        done = False
        while not done:
            chunk = agent.act(list(history), act_rng.child(), state)
            for action in chunk.joint[:self.execute_steps]:
                state, success, done = step(state, action, self.spec)
                history.append(self.observe(state, agent, render_rng))
                if done:
                    break
        record = EpisodeRecord(episode=index, steps=state.step_count, success=success, final_distance=goal_distance(state, self.spec))
        logging.debug(f"episode {index}: {record}")
        return record

    def evaluate(self, agent: BaseAgent, n_episodes: int, rng: Rng) -> EvaluationResult:
        """Closed-loop success rate with receding-horizon execution of each predicted chunk."""
        if n_episodes < 1:
            raise ValueError(f"need at least one evaluation episode, got {n_episodes}")
        self.check_agent(agent)
        logging.info(f"Evaluation started: {n_episodes} '{self.spec.name}' episodes")
        records = [self.run_episode(agent, index, episode_rng) for index, episode_rng in enumerate(rng.split(n_episodes))]
        success_rate = sum(r.success for r in records) / n_episodes
        logging.info(f"Evaluation finished: success rate {success_rate:.2f}")
        return EvaluationResult(success_rate, records)


def evaluate(checkpoint: Checkpoint, spec: TaskSpec, n_episodes: int, rng: Rng) -> EvaluationResult:
    agent = DiffusionAgent(checkpoint)
    return PolicyEvaluator(spec, agent.policy.config.train.execute_steps).evaluate(agent, n_episodes, rng)
