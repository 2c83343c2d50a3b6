from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np


@dataclass(frozen=True)
class Distractor:
    center: np.ndarray
    half_extent: float
    label: int = 2


@dataclass(frozen=True)
class EnvState:
    agent: np.ndarray
    target: np.ndarray
    distractors: List[Distractor] = field(default_factory=list)
    goal: Optional[np.ndarray] = None
    step_count: int = 0
