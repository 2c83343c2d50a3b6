import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from services.numerics import (AttentionWeights, MaskException, MissingGradException, NumericsException, Rng, ShapeMismatchException,
                               adamw_step, backward, build_optimizer, gelu, grad_check, layer_norm, linear, matmul, mlp,
                               multi_head_attention, sinusoidal_embedding, softmax)
from services.numerics.optim import export_state, import_state


def test_rng_same_seed_same_children():
    a = [child.uniform(size=3) for child in Rng(7).split(3)]
    b = [child.uniform(size=3) for child in Rng(7).split(3)]
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    assert not np.array_equal(a[0], a[1])


def test_rng_restart_replays_stream():
    rng = Rng(3)
    first = [c.integers(0, 1000) for c in rng.split(2)]
    replay = rng.restart()
    assert replay.uniform() == Rng(3).uniform()
    assert [c.integers(0, 1000) for c in replay.split(2)] == first


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeMismatchException):
        matmul(torch.zeros(2, 3), torch.zeros(4, 2))


def test_matmul_hand_example():
    out = matmul(torch.tensor([[1.0, 2.0], [3.0, 4.0]]), torch.tensor([[1.0], [1.0]]))
    assert torch.equal(out, torch.tensor([[3.0], [7.0]]))


def test_matmul_matches_triple_loop():
    g = torch.Generator().manual_seed(0)
    a, b = torch.rand(5, 7, generator=g) * 2 - 1, torch.rand(7, 3, generator=g) * 2 - 1
    expected = [[sum(a[i, p].item() * b[p, j].item() for p in range(7)) for j in range(3)] for i in range(5)]
    assert (matmul(a, b) - torch.tensor(expected)).abs().max().item() < 1e-6


def test_matmul_rejects_non_finite_result():
    with pytest.raises(NumericsException):
        matmul(torch.tensor([[float("nan"), 1.0]]), torch.ones(2, 1))


def test_layer_norm_matches_torch():
    x = torch.randn(4, 6, dtype=torch.float64)
    gamma, beta = torch.randn(6, dtype=torch.float64), torch.randn(6, dtype=torch.float64)
    torch.testing.assert_close(layer_norm(x, gamma, beta), F.layer_norm(x, (6,), gamma, beta, eps=1e-5))


def test_layer_norm_constant_row_is_beta():
    x = torch.full((2, 5), 3.0, dtype=torch.float64)
    beta = torch.arange(5, dtype=torch.float64)
    assert torch.equal(layer_norm(x, torch.ones(5, dtype=torch.float64), beta), beta.expand(2, 5))


def test_layer_norm_rejects_negative_eps():
    with pytest.raises(ValueError):
        layer_norm(torch.zeros(1, 3), torch.ones(3), torch.zeros(3), eps=-1.0)


def test_gelu_tanh_approximation():
    x = torch.linspace(-5, 5, 101, dtype=torch.float64)
    torch.testing.assert_close(gelu(x), F.gelu(x, approximate="tanh"))
    assert gelu(torch.zeros(1)).item() == 0.0


def test_masked_softmax_zeroes_blocked_entries():
    x = torch.randn(3, 4, dtype=torch.float64)
    mask = torch.tensor([[True, False, True, False]] * 3)
    y = softmax(x, mask)
    assert torch.all(y[:, 1] == 0) and torch.all(y[:, 3] == 0)
    torch.testing.assert_close(y.sum(dim=-1), torch.ones(3, dtype=torch.float64))


def test_softmax_fully_masked_row_raises():
    with pytest.raises(MaskException):
        softmax(torch.zeros(2, 3), torch.tensor([[True, True, True], [False, False, False]]))


def test_softmax_is_shift_invariant():
    x = torch.randn(2, 5, dtype=torch.float64)
    torch.testing.assert_close(softmax(x), softmax(x + 1000.0))


def test_linear_and_mlp():
    x, w, b = torch.randn(3, 4), torch.randn(4, 2), torch.randn(2)
    torch.testing.assert_close(linear(x, w, b), x @ w + b)
    with pytest.raises(ShapeMismatchException):
        linear(x, w, torch.zeros(3))
    w2 = torch.randn(2, 5)
    torch.testing.assert_close(mlp(x, [(w, b), (w2, None)]), gelu(x @ w + b) @ w2)


def _identity_weights(width: int) -> AttentionWeights:
    eye = torch.eye(width, dtype=torch.float64)
    return AttentionWeights(eye, eye, eye, eye)


def test_attention_matches_manual_single_head():
    q, k = torch.randn(1, 3, 4, dtype=torch.float64), torch.randn(1, 5, 4, dtype=torch.float64)
    out, probs = multi_head_attention(q, k, k, 1, _identity_weights(4), return_weights=True)
    expected = torch.softmax(q @ k.transpose(-2, -1) / 2.0, dim=-1)
    torch.testing.assert_close(probs[:, 0], expected)
    torch.testing.assert_close(out, expected @ k)


def test_attention_mask_blocks_keys():
    x = torch.randn(1, 4, 4, dtype=torch.float64)
    mask = torch.tril(torch.ones(4, 4, dtype=torch.bool))
    _, probs = multi_head_attention(x, x, x, 2, _identity_weights(4), mask, return_weights=True)
    assert torch.all(probs[..., ~mask] == 0)


def test_attention_rejects_bad_heads():
    x = torch.zeros(1, 2, 6)
    with pytest.raises(ShapeMismatchException):
        multi_head_attention(x, x, x, 4, _identity_weights(6))


def test_sinusoidal_embedding_values():
    emb = sinusoidal_embedding(0, 8)
    assert torch.equal(emb, torch.tensor([0, 0, 0, 0, 1, 1, 1, 1], dtype=torch.float32))
    emb = sinusoidal_embedding(torch.tensor([1, 2]), 4, dtype=torch.float64)
    assert emb.shape == (2, 4)
    assert emb[0, 0].item() == pytest.approx(math.sin(1.0))
    assert emb[1, 3].item() == pytest.approx(math.cos(2.0 / 100.0))


@pytest.mark.parametrize("width,k", [(7, 1), (8, -1)])
def test_sinusoidal_embedding_rejects(width, k):
    with pytest.raises(ValueError):
        sinusoidal_embedding(k, width)


def test_backward_requires_scalar():
    x = torch.randn(3, requires_grad=True)
    with pytest.raises(NumericsException):
        backward(x * 2)


def test_backward_accumulates():
    x = torch.ones(2, requires_grad=True)
    backward((x * 3).sum(), [x])
    backward((x * 3).sum(), [x])
    assert torch.equal(x.grad, torch.full((2,), 6.0))


def test_grad_check_layer_norm_passes():
    x = torch.randn(3, 5, dtype=torch.float64, requires_grad=True)
    gamma = torch.randn(5, dtype=torch.float64, requires_grad=True)
    beta = torch.randn(5, dtype=torch.float64, requires_grad=True)
    projection = torch.randn(3, 5, dtype=torch.float64)
    assert grad_check(lambda: (layer_norm(x, gamma, beta) * projection).sum(), [x, gamma, beta]) < 1e-6


def test_adamw_step_requires_gradients():
    param = torch.nn.Parameter(torch.ones(3))
    optimizer = build_optimizer([param])
    with pytest.raises(MissingGradException):
        adamw_step(optimizer)


def test_adamw_decoupled_weight_decay():
    param = torch.nn.Parameter(torch.ones(1))
    optimizer = build_optimizer([param], lr=0.1, weight_decay=0.5)
    param.grad = torch.zeros(1)
    adamw_step(optimizer)
    # zero gradient: only the decay term moves the weight
    assert param.item() == pytest.approx(1.0 - 0.1 * 0.5)


def test_optimizer_state_round_trip():
    param = torch.nn.Parameter(torch.randn(4))
    optimizer = build_optimizer([param])
    param.grad = torch.randn(4)
    adamw_step(optimizer)
    tensors = export_state(optimizer, [("w", param)])
    assert set(tensors) == {"optim.w.exp_avg", "optim.w.exp_avg_sq", "optim.w.step"}

    restored = build_optimizer([param])
    import_state(restored, [("w", param)], tensors)
    assert torch.equal(restored.state[param]["exp_avg"], optimizer.state[param]["exp_avg"])
    assert restored.state[param]["step"].item() == 1.0


def test_layer_norm_without_eps_on_unit_variance_row():
    out = layer_norm(torch.tensor([[-1.0, 1.0]], dtype=torch.float64), torch.ones(2, dtype=torch.float64),
                     torch.zeros(2, dtype=torch.float64), eps=0.0)
    assert torch.equal(out, torch.tensor([[-1.0, 1.0]], dtype=torch.float64))


def test_layer_norm_rows_have_zero_mean_unit_variance():
    x = torch.randn(8, 16, dtype=torch.float64, generator=torch.Generator().manual_seed(3)) * 2.0 + 5.0
    out = layer_norm(x, torch.ones(16, dtype=torch.float64), torch.zeros(16, dtype=torch.float64))
    assert out.mean(dim=-1).abs().max().item() < 1e-6
    assert (out.var(dim=-1, unbiased=False) - 1.0).abs().max().item() < 1e-4


def test_attention_forced_onto_one_key_returns_its_value():
    g = torch.Generator().manual_seed(1)
    q, k, v = (torch.randn(1, 3, 4, generator=g, dtype=torch.float64) for _ in range(3))
    mask = torch.zeros(3, 3, dtype=torch.bool)
    mask[:, 2] = True
    out = multi_head_attention(q, k, v, 2, _identity_weights(4), mask)
    torch.testing.assert_close(out[0], v[0, 2].expand(3, 4), rtol=0, atol=1e-15)


def test_grad_check_is_exact_for_linear():
    g = torch.Generator().manual_seed(2)
    x = torch.randn(3, 4, generator=g, dtype=torch.float64)
    weight = torch.randn(4, 2, generator=g, dtype=torch.float64, requires_grad=True)
    bias = torch.randn(2, generator=g, dtype=torch.float64, requires_grad=True)
    projection = torch.randn(3, 2, generator=g, dtype=torch.float64)
    assert grad_check(lambda: (linear(x, weight, bias) * projection).sum(), [weight, bias], h=1e-2) < 1e-10


def test_adamw_loss_decreases_every_step():
    w = torch.nn.Parameter(torch.zeros(1, dtype=torch.float64))
    optimizer = build_optimizer([w], lr=0.1, weight_decay=0.0)
    losses = []
    for _ in range(10):
        optimizer.zero_grad()
        loss = ((w - 3.0) ** 2).sum()
        losses.append(loss.item())
        backward(loss, [w])
        adamw_step(optimizer)
    losses.append(((w - 3.0) ** 2).item())
    assert all(later < earlier for earlier, later in zip(losses, losses[1:]))
    assert 0.0 < w.item() < 3.0
