from typing import Optional

import torch
from torch import nn

from .functional import AttentionWeights, gelu, layer_norm, linear, multi_head_attention

INIT_STD = 0.02


def trunc_normal(shape, std: float = INIT_STD, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Normal samples truncated to +-2 std by resampling."""
    values = torch.randn(shape, generator=generator) * std
    outside = values.abs() > 2 * std
    while outside.any():
        values[outside] = torch.randn(int(outside.sum()), generator=generator) * std
        outside = values.abs() > 2 * std
    return values


class Linear(nn.Module):
    def __init__(self, in_features: int, out_features: int, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.weight = nn.Parameter(trunc_normal((in_features, out_features), generator=generator))
        self.bias = nn.Parameter(torch.zeros(out_features))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return linear(x, self.weight, self.bias)


class LayerNorm(nn.Module):
    def __init__(self, width: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = nn.Parameter(torch.ones(width))
        self.beta = nn.Parameter(torch.zeros(width))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class Mlp(nn.Module):
    """Two-layer perceptron; `norm=True` puts a LayerNorm before the activation."""

    def __init__(self, in_features: int, hidden: int, out_features: int, norm: bool = False, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.fc1 = Linear(in_features, hidden, generator)
        self.norm = LayerNorm(hidden) if norm else None
        self.fc2 = Linear(hidden, out_features, generator)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.fc1(x)
        if self.norm is not None:
            x = self.norm(x)
        return self.fc2(gelu(x))


class MultiHeadAttention(nn.Module):
    def __init__(self, width: int, heads: int, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.heads = heads
        self.wq = Linear(width, width, generator)
        self.wk = Linear(width, width, generator)
        self.wv = Linear(width, width, generator)
        self.wo = Linear(width, width, generator)

    def weights(self) -> AttentionWeights:
        return AttentionWeights(
            wq=self.wq.weight, wk=self.wk.weight, wv=self.wv.weight, wo=self.wo.weight,
            bq=self.wq.bias, bk=self.wk.bias, bv=self.wv.bias, bo=self.wo.bias,
        )

    def forward(self, q, k, v, mask: Optional[torch.Tensor] = None, return_weights: bool = False):
        return multi_head_attention(q, k, v, self.heads, self.weights(), mask, return_weights)


class SelfAttentionBlock(nn.Module):
    """Pre-LN residual block: x + attn(ln(x)), then x + mlp(ln(x))."""

    def __init__(self, width: int, heads: int, mlp_ratio: int = 4, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.ln_attn = LayerNorm(width)
        self.attn = MultiHeadAttention(width, heads, generator)
        self.ln_mlp = LayerNorm(width)
        self.mlp = Mlp(width, mlp_ratio * width, width, generator=generator)

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        h = self.ln_attn(x)
        x = x + self.attn(h, h, h, mask)
        return x + self.mlp(self.ln_mlp(x))
