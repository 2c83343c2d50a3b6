from dataclasses import dataclass, field
from typing import Any, Dict

import torch

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: Dict[str, Any]
    tensors: Dict[str, torch.Tensor]
    step: int = 0
    kind: str = "policy"
    version: int = CHECKPOINT_FORMAT_VERSION
    meta: Dict[str, Any] = field(default_factory=dict)

    def subset(self, prefix: str) -> Dict[str, torch.Tensor]:
        return {name[len(prefix):]: tensor for name, tensor in self.tensors.items() if name.startswith(prefix)}
