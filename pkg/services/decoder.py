from dataclasses import dataclass
from typing import List, Optional, Tuple

import torch
from torch import nn

from models.config import DecoderConfig
from models.episode import EE_POSE_DIM
from services.encoder import GeometricTokens
from services.numerics.functional import MaskException, ShapeMismatchException, sinusoidal_embedding
from services.numerics.modules import LayerNorm, Linear, Mlp, MultiHeadAttention, trunc_normal


@dataclass
class NoisyActions:
    joint: torch.Tensor
    ee: Optional[torch.Tensor]
    k: torch.Tensor


@dataclass
class TokenBundle:
    obs_tokens: torch.Tensor
    query_tokens: torch.Tensor
    self_mask: torch.Tensor


def build_causal_mask(t_a: int, ee_enabled: bool) -> torch.Tensor:
    """Query-over-key mask: [diffusion, t_a joint tokens, t_a EE tokens].

    Diffusion and joint queries see diffusion and joint keys only; EE
    queries see everything.
    """
    if t_a < 1:
        raise ValueError(f"t_a must be at least 1, got {t_a}")
    joint_end = 1 + t_a
    if not ee_enabled:
        return torch.ones(joint_end, joint_end, dtype=torch.bool)
    mask = torch.ones(joint_end + t_a, joint_end + t_a, dtype=torch.bool)
    mask[:joint_end, joint_end:] = False
    return mask


class DecoderBlock(nn.Module):
    """Masked self-attention, cross-attention to context, MLP; all pre-LN residual.

    Joint-group rows (diffusion + joint tokens) and EE rows run as separate
    tensors, so the joint group goes through the same ops with or without
    an EE branch.
    """

    def __init__(self, width: int, heads: int, mlp_ratio: int, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.ln_self = LayerNorm(width)
        self.self_attn = MultiHeadAttention(width, heads, generator)
        self.ln_cross = LayerNorm(width)
        self.ln_context = LayerNorm(width)
        self.cross_attn = MultiHeadAttention(width, heads, generator)
        self.ln_mlp = LayerNorm(width)
        self.mlp = Mlp(width, mlp_ratio * width, width, generator=generator)

    def _cross_and_mlp(self, x: torch.Tensor, context: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        attended, weights = self.cross_attn(self.ln_cross(x), context, context, return_weights=True)
        x = x + attended
        return x + self.mlp(self.ln_mlp(x)), weights

    def forward(
        self,
        joint: torch.Tensor,
        ee: Optional[torch.Tensor],
        context: torch.Tensor,
        mask: torch.Tensor,
        record: Optional[List[torch.Tensor]] = None,
    ) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        joint_end = joint.shape[1]
        h_joint = self.ln_self(joint)
        c = self.ln_context(context)
        if ee is not None:
            h_ee = self.ln_self(ee)
            keys = torch.cat([h_joint, h_ee], dim=1)
            ee = ee + self.self_attn(h_ee, keys, keys, mask[joint_end:])
            ee, ee_weights = self._cross_and_mlp(ee, c)
        joint = joint + self.self_attn(h_joint, h_joint, h_joint, mask[:joint_end, :joint_end])
        joint, weights = self._cross_and_mlp(joint, c)
        if record is not None:
            record.append((weights if ee is None else torch.cat([weights, ee_weights], dim=-2)).detach())
        return joint, ee


class ActionDecoder(nn.Module):
    """Diffusion transformer denoising joint-space and end-effector action tokens."""

    def __init__(self, cfg: DecoderConfig, geo_width: int, generator: Optional[torch.Generator] = None):
        super().__init__()
        self.cfg = cfg
        width = cfg.d
        table_rows = max(cfg.t_o, cfg.t_a)
        self.geo_proj = Linear(geo_width, width, generator)
        self.proprio_embed = Mlp(cfg.n_q, cfg.hidden, width, generator=generator)
        self.joint_embed = Mlp(cfg.n_q, cfg.hidden, width, generator=generator)
        self.step_embed = Mlp(width, cfg.hidden, width, generator=generator)
        self.obs_time = nn.Parameter(trunc_normal((table_rows, width), generator=generator))
        self.act_time = nn.Parameter(trunc_normal((table_rows, width), generator=generator))
        self.blocks = nn.ModuleList([DecoderBlock(width, cfg.heads, cfg.mlp_ratio, generator) for _ in range(cfg.depth)])
        self.ln_final = LayerNorm(width)
        self.joint_head = Mlp(width, cfg.hidden, cfg.n_q, generator=generator)
        if cfg.enable_ee_branch:
            self.ee_embed = Mlp(EE_POSE_DIM, cfg.hidden, width, generator=generator)
            self.ee_head = Mlp(width, cfg.hidden, EE_POSE_DIM, generator=generator)
        self.register_buffer("self_mask", build_causal_mask(cfg.t_a, cfg.enable_ee_branch), persistent=False)

    @property
    def dtype(self) -> torch.dtype:
        return self.ln_final.gamma.dtype

    def embed_proprio(self, q: torch.Tensor) -> torch.Tensor:
        if q.shape[-1] != self.cfg.n_q:
            raise ShapeMismatchException(f"proprio has {q.shape[-1]} dims, decoder expects {self.cfg.n_q}")
        return self.proprio_embed(q)

    def assemble_tokens(self, geo_history: GeometricTokens, proprio_history: torch.Tensor, noisy: NoisyActions) -> TokenBundle:
        """geo_history tokens: B x T_o x N_C x D_enc; proprio_history: B x T_o x N_q."""
        cfg = self.cfg
        geo = geo_history.tokens
        if geo.dim() != 4 or geo.shape[1] != cfg.t_o or proprio_history.shape[1] != cfg.t_o:
            raise ShapeMismatchException(f"observation history must span t_o={cfg.t_o} steps")
        if noisy.joint.shape[1:] != (cfg.t_a, cfg.n_q):
            raise ShapeMismatchException(f"noisy joint actions must be t_a x n_q = {cfg.t_a} x {cfg.n_q}")
        batch, t_o, n_c, _ = geo.shape

        obs_time = self.obs_time[:t_o]
        geo_tokens = (self.geo_proj(geo) + obs_time[None, :, None, :]).reshape(batch, t_o * n_c, cfg.d)
        proprio_tokens = self.embed_proprio(proprio_history) + obs_time[None]
        obs_tokens = torch.cat([geo_tokens, proprio_tokens], dim=1)

        steps = sinusoidal_embedding(noisy.k, cfg.d, dtype=self.dtype).reshape(batch, 1, cfg.d)
        act_time = self.act_time[:cfg.t_a][None]
        parts = [self.step_embed(steps), self.joint_embed(noisy.joint) + act_time]
        if cfg.enable_ee_branch:
            if noisy.ee is None or noisy.ee.shape[1:] != (cfg.t_a, EE_POSE_DIM):
                raise ShapeMismatchException(f"noisy EE actions must be t_a x 7 = {cfg.t_a} x {EE_POSE_DIM}")
            # joint and EE tokens of the same timestep share a temporal embedding
            parts.append(self.ee_embed(noisy.ee) + act_time)
        return TokenBundle(obs_tokens, torch.cat(parts, dim=1), self.self_mask)

    def decode_actions(self, final_joint_tokens: torch.Tensor) -> torch.Tensor:
        return self.joint_head(final_joint_tokens)

    def dit_forward(self, bundle: TokenBundle, record: Optional[List[torch.Tensor]] = None) -> Tuple[torch.Tensor, Optional[torch.Tensor]]:
        t_a = self.cfg.t_a
        joint_end = 1 + t_a
        expected = 1 + t_a * (2 if self.cfg.enable_ee_branch else 1)
        if bundle.query_tokens.shape[1] != expected:
            raise ShapeMismatchException(f"expected {expected} query tokens, got {bundle.query_tokens.shape[1]}")
        if bundle.self_mask[:joint_end, joint_end:].any():
            raise MaskException("joint-group queries must not see EE keys")
        joint = bundle.query_tokens[:, :joint_end].contiguous()
        ee = bundle.query_tokens[:, joint_end:].contiguous() if self.cfg.enable_ee_branch else None
        for block in self.blocks:
            joint, ee = block(joint, ee, bundle.obs_tokens, bundle.self_mask, record)
        joint_pred = self.decode_actions(self.ln_final(joint)[:, 1:])
        ee_pred = self.ee_head(self.ln_final(ee)) if ee is not None else None
        return joint_pred, ee_pred

    def forward(self, geo_history: GeometricTokens, proprio_history: torch.Tensor, noisy: NoisyActions):
        return self.dit_forward(self.assemble_tokens(geo_history, proprio_history, noisy))
