from .autograd import backward, grad_check, zero_grads
from .functional import (AttentionWeights, MaskException, NumericsException, ShapeMismatchException, assert_finite, gelu,
                         layer_norm, linear, matmul, mlp, multi_head_attention, sinusoidal_embedding, softmax)
from .optim import MissingGradException, adamw_step, build_optimizer
from .rng import Rng
