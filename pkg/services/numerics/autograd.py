import logging
from typing import Callable, Iterable, Optional

import torch

from .functional import NumericsException
from .rng import Rng


def zero_grads(params: Iterable[torch.Tensor]):
    for param in params:
        param.grad = None


def backward(loss: torch.Tensor, params: Optional[Iterable[torch.Tensor]] = None):
    """Populate `.grad` of every parameter reachable from a scalar loss.

    Gradients accumulate; the caller zeroes them between steps.
    """
    if loss.dim() != 0:
        raise NumericsException(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    if not torch.isfinite(loss):
        raise NumericsException(f"loss is not finite: {loss.item()}")
    loss.backward()
    if params is not None:
        for param in params:
            if param.grad is not None and not torch.isfinite(param.grad).all():
                raise NumericsException("non-finite gradient after backward")


def grad_check(
    f: Callable[[], torch.Tensor],
    params: Iterable[torch.Tensor],
    h: float = 1e-6,
    max_coords: int = 16,
    rng: Optional[Rng] = None,
) -> float:
    """Compare analytic gradients against central differences.

    `f` must be deterministic and evaluate in float64. Each parameter
    contributes at most `max_coords` sampled coordinates. Returns
    max |analytic - fd| / max(1, |fd|).
    """
    params = list(params)
    rng = rng or Rng(0)
    zero_grads(params)
    backward(f(), params)
    analytic = [p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p) for p in params]
    zero_grads(params)

    worst = 0.0
    with torch.no_grad():
        for param, grad in zip(params, analytic):
            flat = param.data.view(-1)
            flat_grad = grad.view(-1)
            if flat.numel() <= max_coords:
                coords = range(flat.numel())
            else:
                coords = sorted(rng.choice(flat.numel(), max_coords, replace=False).tolist())
            for index in coords:
                original = flat[index].item()
                flat[index] = original + h
                plus = f().item()
                flat[index] = original - h
                minus = f().item()
                flat[index] = original
                numeric = (plus - minus) / (2 * h)
                error = abs(flat_grad[index].item() - numeric) / max(1.0, abs(numeric))
                worst = max(worst, error)
    logging.debug(f"grad_check max relative error {worst:.3e} over {len(params)} tensors")
    return worst
