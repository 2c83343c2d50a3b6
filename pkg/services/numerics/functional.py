import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import torch

# tanh approximation of GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
GELU_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
GELU_CUBIC = 0.044715


class NumericsException(Exception):
    pass


class ShapeMismatchException(NumericsException, ValueError):
    pass


class MaskException(NumericsException, ValueError):
    pass


def assert_finite(tensor: torch.Tensor, what: str) -> torch.Tensor:
    if not torch.isfinite(tensor).all():
        raise NumericsException(f"Non-finite values in {what}")
    return tensor


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.dim() < 1 or b.dim() < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchException(f"matmul inner dimensions differ: {tuple(a.shape)} x {tuple(b.shape)}")
    return assert_finite(torch.matmul(a, b), "matmul")


class LayerNormFunction(torch.autograd.Function):
    """Last-axis normalization with a hand-derived backward pass."""

    @staticmethod
    def forward(ctx, x, gamma, beta, eps):
        mean = x.mean(dim=-1, keepdim=True)
        centered = x - mean
        var = (centered * centered).mean(dim=-1, keepdim=True)
        inv_std = torch.rsqrt(var + eps)
        x_hat = centered * inv_std
        ctx.save_for_backward(x_hat, inv_std, gamma)
        return x_hat * gamma + beta

    @staticmethod
    def backward(ctx, grad_out):
        x_hat, inv_std, gamma = ctx.saved_tensors
        width = x_hat.shape[-1]
        grad_gamma = (grad_out * x_hat).reshape(-1, width).sum(dim=0)
        grad_beta = grad_out.reshape(-1, width).sum(dim=0)
        grad_x_hat = grad_out * gamma
        grad_x = inv_std * (
            grad_x_hat
            - grad_x_hat.mean(dim=-1, keepdim=True)
            - x_hat * (grad_x_hat * x_hat).mean(dim=-1, keepdim=True)
        )
        return grad_x, grad_gamma, grad_beta, None


def layer_norm(x: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    width = x.shape[-1]
    if gamma.shape != (width,) or beta.shape != (width,):
        raise ShapeMismatchException(f"layer_norm expects gamma/beta of shape ({width},), got {tuple(gamma.shape)} / {tuple(beta.shape)}")
    if eps < 0:
        raise ValueError(f"layer_norm eps must be non-negative, got {eps}")
    return assert_finite(LayerNormFunction.apply(x, gamma, beta, eps), "layer_norm")


class GeluFunction(torch.autograd.Function):

    @staticmethod
    def forward(ctx, x):
        inner = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x)
        tanh_inner = torch.tanh(inner)
        ctx.save_for_backward(x, tanh_inner)
        return 0.5 * x * (1.0 + tanh_inner)

    @staticmethod
    def backward(ctx, grad_out):
        x, tanh_inner = ctx.saved_tensors
        d_inner = GELU_SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x)
        derivative = 0.5 * (1.0 + tanh_inner) + 0.5 * x * (1.0 - tanh_inner * tanh_inner) * d_inner
        return grad_out * derivative


def gelu(x: torch.Tensor) -> torch.Tensor:
    return assert_finite(GeluFunction.apply(x), "gelu")


class MaskedSoftmaxFunction(torch.autograd.Function):
    """Softmax over the last axis; masked entries are exactly zero."""

    @staticmethod
    def forward(ctx, x, mask):
        if mask is not None:
            x = x.masked_fill(~mask, float("-inf"))
        shifted = x - x.amax(dim=-1, keepdim=True)
        exp = torch.exp(shifted)
        if mask is not None:
            exp = exp.masked_fill(~mask, 0.0)
        y = exp / exp.sum(dim=-1, keepdim=True)
        ctx.save_for_backward(y)
        return y

    @staticmethod
    def backward(ctx, grad_out):
        y, = ctx.saved_tensors
        grad_x = y * (grad_out - (grad_out * y).sum(dim=-1, keepdim=True))
        return grad_x, None


def softmax(x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    if mask is not None:
        mask = mask.to(torch.bool)
        if not mask.any(dim=-1).all():
            raise MaskException("softmax row has no allowed entries")
    return assert_finite(MaskedSoftmaxFunction.apply(x, mask), "softmax")


def linear(x: torch.Tensor, weight: torch.Tensor, bias: Optional[torch.Tensor] = None) -> torch.Tensor:
    """x @ weight + bias with weight laid out (in_features, out_features)."""
    y = matmul(x, weight)
    if bias is not None:
        if bias.shape != (weight.shape[-1],):
            raise ShapeMismatchException(f"linear bias shape {tuple(bias.shape)} does not match {weight.shape[-1]} outputs")
        y = y + bias
    return y


def mlp(x: torch.Tensor, layers: Sequence[Tuple[torch.Tensor, Optional[torch.Tensor]]]) -> torch.Tensor:
    """Chain of linear layers with GELU between consecutive layers."""
    for index, (weight, bias) in enumerate(layers):
        if index > 0:
            x = gelu(x)
        x = linear(x, weight, bias)
    return x


@dataclass
class AttentionWeights:
    wq: torch.Tensor
    wk: torch.Tensor
    wv: torch.Tensor
    wo: torch.Tensor
    bq: Optional[torch.Tensor] = None
    bk: Optional[torch.Tensor] = None
    bv: Optional[torch.Tensor] = None
    bo: Optional[torch.Tensor] = None


def _split_heads(x: torch.Tensor, heads: int) -> torch.Tensor:
    *lead, length, width = x.shape
    return x.reshape(*lead, length, heads, width // heads).transpose(-3, -2)


def _merge_heads(x: torch.Tensor) -> torch.Tensor:
    *lead, heads, length, head_width = x.shape
    return x.transpose(-3, -2).reshape(*lead, length, heads * head_width)


def multi_head_attention(
    q: torch.Tensor,
    k: torch.Tensor,
    v: torch.Tensor,
    heads: int,
    weights: AttentionWeights,
    mask: Optional[torch.Tensor] = None,
    return_weights: bool = False,
) -> Union[torch.Tensor, Tuple[torch.Tensor, torch.Tensor]]:
    """Scaled dot-product attention over (..., L, D) inputs.

    `mask[i][j]` False blocks key j for query i. With `return_weights` the
    per-head attention probabilities (..., heads, Lq, Lk) are returned too.
    """
    width = q.shape[-1]
    if heads < 1 or width % heads != 0:
        raise ShapeMismatchException(f"width {width} is not divisible by {heads} heads")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeMismatchException(f"keys ({k.shape[-2]}) and values ({v.shape[-2]}) differ in length")
    if mask is not None and tuple(mask.shape[-2:]) != (q.shape[-2], k.shape[-2]):
        raise ShapeMismatchException(f"mask shape {tuple(mask.shape)} does not match {q.shape[-2]}x{k.shape[-2]}")

    query = _split_heads(linear(q, weights.wq, weights.bq), heads)
    key = _split_heads(linear(k, weights.wk, weights.bk), heads)
    value = _split_heads(linear(v, weights.wv, weights.bv), heads)

    scores = matmul(query, key.transpose(-2, -1)) / math.sqrt(width // heads)
    probs = softmax(scores, mask)
    out = linear(_merge_heads(matmul(probs, value)), weights.wo, weights.bo)
    if return_weights:
        return out, probs
    return out


def sinusoidal_embedding(
    k: Union[int, torch.Tensor],
    width: int,
    max_period: float = 10000.0,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Half sines then half cosines of k / max_period^(2i/width)."""
    if width % 2 != 0:
        raise ValueError(f"sinusoidal embedding width must be even, got {width}")
    steps = torch.as_tensor(k, dtype=torch.float64)
    if (steps < 0).any():
        raise ValueError("sinusoidal embedding step must be non-negative")
    half = width // 2
    exponents = torch.arange(half, dtype=torch.float64) * 2.0 / width
    angles = steps.unsqueeze(-1) / torch.pow(torch.tensor(max_period, dtype=torch.float64), exponents)
    return torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1).to(dtype)
