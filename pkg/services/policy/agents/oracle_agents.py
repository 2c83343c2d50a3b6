from typing import List, Optional

import numpy as np

from models.config import TaskSpec
from models.env_state import EnvState
from models.episode import ActionChunk, Observation
from services.numerics.rng import Rng
from services.synthenv import forward_kinematics, scripted_expert, step

from .base_agent import DEFAULT_N_P, BaseAgent

JOINT_DIM = 4


class ExpertAgent(BaseAgent):
    """Scripted expert planning a chunk ahead from the privileged environment state."""

    SUPPORTED_TASKS = ["reach", "push"]

    def __init__(self, spec: TaskSpec, t_o: int, t_a: int, n_p: int = DEFAULT_N_P):
        super().__init__(t_o, t_a, JOINT_DIM, n_p)
        self.spec = spec

    def act(self, history: List[Observation], rng: Rng, state: Optional[EnvState] = None) -> ActionChunk:
        super().act(history, rng, state)
        if state is None:
            raise ValueError("the expert agent needs the environment state")
        joint = []
        for _ in range(self.t_a):
            action = scripted_expert(state, self.spec, rng)
            joint.append(action)
            state, _, _ = step(state, action, self.spec)
        joint = np.stack(joint)
        return ActionChunk(joint, np.stack([forward_kinematics(a) for a in joint]))


class ZeroAgent(BaseAgent):

    SUPPORTED_TASKS = ["reach", "push"]

    def __init__(self, t_o: int, t_a: int, n_q: int = JOINT_DIM, n_p: int = DEFAULT_N_P):
        super().__init__(t_o, t_a, n_q, n_p)

    def act(self, history: List[Observation], rng: Rng, state: Optional[EnvState] = None) -> ActionChunk:
        super().act(history, rng, state)
        joint = np.zeros((self.t_a, self.n_q))
        return ActionChunk(joint, np.stack([forward_kinematics(a) for a in joint]) if self.n_q == JOINT_DIM else None)
