from abc import ABC, abstractmethod
from typing import List, Optional

from models.env_state import EnvState
from models.episode import ActionChunk, Observation
from services.numerics.functional import ShapeMismatchException
from services.numerics.rng import Rng

DEFAULT_N_P = 1024


class BaseAgent(ABC):
    """Maps the last t_o observations to a chunk of t_a absolute joint targets."""

    SUPPORTED_TASKS = []

    def __init__(self, t_o: int, t_a: int, n_q: int, n_p: int = DEFAULT_N_P):
        if not self.SUPPORTED_TASKS:
            raise NotImplementedError("The SUPPORTED_TASKS list must be populated in the subclass.")
        self.t_o = t_o
        self.t_a = t_a
        self.n_q = n_q
        self.n_p = n_p

    @abstractmethod
    def act(self, history: List[Observation], rng: Rng, state: Optional[EnvState] = None) -> ActionChunk:
        if len(history) != self.t_o:
            raise ShapeMismatchException(f"observation history has {len(history)} entries, agent expects t_o={self.t_o}")
        for observation in history:
            if observation.proprio.shape != (self.n_q,):
                raise ShapeMismatchException(f"proprio has shape {observation.proprio.shape}, agent expects ({self.n_q},)")

    def is_task_supported(self, task_name: str) -> bool:
        return task_name in self.SUPPORTED_TASKS

    @property
    def supported_tasks(self):
        return self.SUPPORTED_TASKS
