from typing import Dict, Iterable, List, Tuple

import torch

from .functional import NumericsException


class MissingGradException(NumericsException):
    pass


def build_optimizer(
    params: Iterable[torch.nn.Parameter],
    lr: float = 1e-4,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 1e-4,
) -> torch.optim.AdamW:
    return torch.optim.AdamW(list(params), lr=lr, betas=tuple(betas), eps=eps, weight_decay=weight_decay)


def adamw_step(optimizer: torch.optim.AdamW):
    """One decoupled-weight-decay update; every parameter needs a gradient."""
    for group in optimizer.param_groups:
        for param in group["params"]:
            if param.requires_grad and param.grad is None:
                raise MissingGradException("adamw_step called before gradients were populated")
    optimizer.step()


def export_state(optimizer: torch.optim.AdamW, named_params: List[Tuple[str, torch.nn.Parameter]]) -> Dict[str, torch.Tensor]:
    tensors = {}
    for name, param in named_params:
        state = optimizer.state.get(param)
        if not state:
            continue
        tensors[f"optim.{name}.exp_avg"] = state["exp_avg"].detach().clone()
        tensors[f"optim.{name}.exp_avg_sq"] = state["exp_avg_sq"].detach().clone()
        tensors[f"optim.{name}.step"] = torch.as_tensor(state["step"], dtype=torch.float32).reshape(1)
    return tensors


def import_state(optimizer: torch.optim.AdamW, named_params: List[Tuple[str, torch.nn.Parameter]], tensors: Dict[str, torch.Tensor]):
    for name, param in named_params:
        key = f"optim.{name}.exp_avg"
        if key not in tensors:
            continue
        optimizer.state[param] = {
            "step": torch.tensor(float(tensors[f"optim.{name}.step"].item())),
            "exp_avg": tensors[key].clone().to(param.dtype),
            "exp_avg_sq": tensors[f"optim.{name}.exp_avg_sq"].clone().to(param.dtype),
        }
