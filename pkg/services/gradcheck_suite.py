import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import torch

from models.config import Config, DecoderConfig, EncoderConfig
from models.records import GradCheckRow
from services.decoder import ActionDecoder, NoisyActions
from services.encoder import GeometricTokens, PointCloudEncoder
from services.numerics.autograd import grad_check
from services.numerics.functional import AttentionWeights, gelu, layer_norm, linear, matmul, mlp, multi_head_attention, softmax
from services.numerics.rng import Rng
from services.policy.dataset import ObservationBatch
from services.policy.model import R3DPolicy

ELEMENTWISE_THRESHOLD = 1e-6
ATTENTION_THRESHOLD = 1e-5


@dataclass
class GradCheckDims:
    width: int
    heads: int
    length: int
    n_p: int
    n_c: int
    k: int
    t_o: int
    t_a: int
    n_q: int
    depth: int


DIMS = {
    "tiny": GradCheckDims(width=8, heads=2, length=5, n_p=48, n_c=6, k=8, t_o=2, t_a=3, n_q=4, depth=1),
    "small": GradCheckDims(width=16, heads=4, length=8, n_p=96, n_c=12, k=8, t_o=2, t_a=4, n_q=4, depth=2),
}

Check = Callable[[GradCheckDims, torch.Generator], Tuple[Callable[[], torch.Tensor], List[torch.Tensor]]]


def _randn(generator: torch.Generator, *shape, requires_grad: bool = True) -> torch.Tensor:
    return torch.randn(*shape, generator=generator, dtype=torch.float64).requires_grad_(requires_grad)


def _projection(out: torch.Tensor, generator: torch.Generator) -> Callable[[torch.Tensor], torch.Tensor]:
    """Scalarize with a fixed random projection so every output entry contributes."""
    weights = torch.randn(out.shape, generator=generator, dtype=torch.float64)
    return lambda y: (y * weights).sum()


def _scalar(forward: Callable[[], torch.Tensor], generator: torch.Generator) -> Callable[[], torch.Tensor]:
    with torch.no_grad():
        projection = _projection(forward(), generator)
    return lambda: projection(forward())


def check_matmul(dims: GradCheckDims, generator: torch.Generator):
    a, b = _randn(generator, dims.length, dims.width), _randn(generator, dims.width, dims.width)
    return _scalar(lambda: matmul(a, b), generator), [a, b]


def check_linear(dims: GradCheckDims, generator: torch.Generator):
    x, w, b = _randn(generator, dims.length, dims.width), _randn(generator, dims.width, dims.width), _randn(generator, dims.width)
    return _scalar(lambda: linear(x, w, b), generator), [x, w, b]


def check_gelu(dims: GradCheckDims, generator: torch.Generator):
    x = _randn(generator, dims.length, dims.width)
    return _scalar(lambda: gelu(x), generator), [x]


def check_layer_norm(dims: GradCheckDims, generator: torch.Generator):
    x, gamma, beta = _randn(generator, dims.length, dims.width), _randn(generator, dims.width), _randn(generator, dims.width)
    return _scalar(lambda: layer_norm(x, gamma, beta), generator), [x, gamma, beta]


def check_softmax(dims: GradCheckDims, generator: torch.Generator):
    x = _randn(generator, dims.length, dims.length)
    return _scalar(lambda: softmax(x), generator), [x]


def check_masked_softmax(dims: GradCheckDims, generator: torch.Generator):
    x = _randn(generator, dims.length, dims.length)
    mask = torch.tril(torch.ones(dims.length, dims.length, dtype=torch.bool))
    return _scalar(lambda: softmax(x, mask), generator), [x]


def check_mlp(dims: GradCheckDims, generator: torch.Generator):
    x = _randn(generator, dims.length, dims.width)
    layers = [(_randn(generator, dims.width, 2 * dims.width), _randn(generator, 2 * dims.width)),
              (_randn(generator, 2 * dims.width, dims.width), _randn(generator, dims.width))]
    params = [x] + [t for layer in layers for t in layer]
    return _scalar(lambda: mlp(x, layers), generator), params


def _attention_weights(dims: GradCheckDims, generator: torch.Generator) -> AttentionWeights:
    scale = dims.width ** -0.5
    tensors = [(_randn(generator, dims.width, dims.width, requires_grad=False) * scale).requires_grad_() for _ in range(4)]
    biases = [_randn(generator, dims.width) for _ in range(4)]
    return AttentionWeights(*tensors, *biases)


def _attention_params(weights: AttentionWeights) -> List[torch.Tensor]:
    return [weights.wq, weights.wk, weights.wv, weights.wo, weights.bq, weights.bk, weights.bv, weights.bo]


def check_attention(dims: GradCheckDims, generator: torch.Generator):
    q, kv = _randn(generator, 2, dims.length, dims.width), _randn(generator, 2, dims.length + 2, dims.width)
    weights = _attention_weights(dims, generator)
    return _scalar(lambda: multi_head_attention(q, kv, kv, dims.heads, weights), generator), [q, kv] + _attention_params(weights)


def check_masked_attention(dims: GradCheckDims, generator: torch.Generator):
    x = _randn(generator, 2, dims.length, dims.width)
    weights = _attention_weights(dims, generator)
    mask = torch.tril(torch.ones(dims.length, dims.length, dtype=torch.bool))
    return _scalar(lambda: multi_head_attention(x, x, x, dims.heads, weights, mask), generator), [x] + _attention_params(weights)


def _model_config(dims: GradCheckDims) -> Config:
    config = Config()
    config.encoder = EncoderConfig(n_p=dims.n_p, n_c=dims.n_c, k=dims.k, d=dims.width, depth=dims.depth, heads=dims.heads, hidden=dims.width, mlp_ratio=2)
    config.decoder = DecoderConfig(d=dims.width, depth=dims.depth, heads=dims.heads, t_o=dims.t_o, t_a=dims.t_a, n_q=dims.n_q, hidden=dims.width, mlp_ratio=2)
    return config


def _clouds(dims: GradCheckDims, generator: torch.Generator, lead: Tuple[int, ...]) -> np.ndarray:
    points = torch.rand(*lead, dims.n_p, 3, generator=generator, dtype=torch.float64) - 0.5
    colors = torch.rand(*lead, dims.n_p, 3, generator=generator, dtype=torch.float64)
    return torch.cat([points, colors], dim=-1).numpy()


def check_encoder(dims: GradCheckDims, generator: torch.Generator):
    encoder = PointCloudEncoder(_model_config(dims).encoder, generator).double()
    clouds = _clouds(dims, generator, (2,))
    return _scalar(lambda: encoder.encode(clouds).tokens, generator), list(encoder.parameters())


def check_decoder(dims: GradCheckDims, generator: torch.Generator):
    decoder = ActionDecoder(_model_config(dims).decoder, dims.width, generator).double()
    geo = GeometricTokens(_randn(generator, 2, dims.t_o, dims.n_c, dims.width, requires_grad=False), torch.zeros(2, dims.t_o, dims.n_c, 3, dtype=torch.float64))
    proprio = _randn(generator, 2, dims.t_o, dims.n_q, requires_grad=False)
    noisy = NoisyActions(_randn(generator, 2, dims.t_a, dims.n_q, requires_grad=False), _randn(generator, 2, dims.t_a, 7, requires_grad=False), torch.tensor([3, 17]))

    def forward():
        joint, ee = decoder(geo, proprio, noisy)
        return torch.cat([joint.reshape(2, -1), ee.reshape(2, -1)], dim=1)
    return _scalar(forward, generator), list(decoder.parameters())


def check_policy(dims: GradCheckDims, generator: torch.Generator):
    policy = R3DPolicy(_model_config(dims), generator).double()
    observations = ObservationBatch(_clouds(dims, generator, (2, dims.t_o)), _randn(generator, 2, dims.t_o, dims.n_q, requires_grad=False))
    noisy = NoisyActions(_randn(generator, 2, dims.t_a, dims.n_q, requires_grad=False), _randn(generator, 2, dims.t_a, 7, requires_grad=False), torch.tensor([1, 50]))

    def forward():
        joint, ee = policy.predict_noise(policy.encode_context(observations, None), noisy)
        return torch.cat([joint.reshape(2, -1), ee.reshape(2, -1)], dim=1)
    return _scalar(forward, generator), list(policy.parameters())


CHECKS: Dict[str, Tuple[Check, float]] = {
    "matmul": (check_matmul, ELEMENTWISE_THRESHOLD),
    "linear": (check_linear, ELEMENTWISE_THRESHOLD),
    "gelu": (check_gelu, ELEMENTWISE_THRESHOLD),
    "layer_norm": (check_layer_norm, ELEMENTWISE_THRESHOLD),
    "softmax": (check_softmax, ELEMENTWISE_THRESHOLD),
    "masked_softmax": (check_masked_softmax, ELEMENTWISE_THRESHOLD),
    "mlp": (check_mlp, ELEMENTWISE_THRESHOLD),
    "attention": (check_attention, ATTENTION_THRESHOLD),
    "masked_attention": (check_masked_attention, ATTENTION_THRESHOLD),
    "encoder": (check_encoder, ATTENTION_THRESHOLD),
    "decoder": (check_decoder, ATTENTION_THRESHOLD),
    "policy": (check_policy, ATTENTION_THRESHOLD),
}


def run_gradcheck(dims_name: str = "tiny", only: Optional[str] = None, seed: int = 0) -> List[GradCheckRow]:
    """Central-difference comparison in float64 for every differentiable op, one row per op."""
    if dims_name not in DIMS:
        raise ValueError(f"unknown gradcheck dims '{dims_name}', choose from {sorted(DIMS)}")
    if only is not None and only not in CHECKS:
        raise ValueError(f"unknown gradcheck op '{only}', choose from {sorted(CHECKS)}")
    dims = DIMS[dims_name]
    rows = []
    for name, (build, threshold) in CHECKS.items():
        if only is not None and name != only:
            continue
        generator = torch.Generator()
        generator.manual_seed(seed)
        f, params = build(dims, generator)
        error = grad_check(f, params, rng=Rng(seed))
        rows.append(GradCheckRow(op=name, max_rel_error=error, threshold=threshold, passed=error < threshold))
        logging.info(f"gradcheck {name}: max relative error {error:.3e} (threshold {threshold:.0e})")
    return rows
