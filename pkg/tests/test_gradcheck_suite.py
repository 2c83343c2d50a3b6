import pytest

from services.gradcheck_suite import CHECKS, run_gradcheck
from services.numerics.functional import LayerNormFunction


def test_tiny_suite_passes_every_op():
    rows = run_gradcheck("tiny")
    assert [row.op for row in rows] == list(CHECKS)
    failing = {row.op: row.max_rel_error for row in rows if not row.passed}
    assert not failing


def test_only_runs_a_single_op():
    rows = run_gradcheck("tiny", only="gelu")
    assert len(rows) == 1 and rows[0].op == "gelu" and rows[0].passed


@pytest.mark.parametrize("dims,only", [("huge", None), ("tiny", "conv")])
def test_unknown_selection_raises(dims, only):
    with pytest.raises(ValueError):
        run_gradcheck(dims, only)


def test_broken_backward_is_detected(monkeypatch):
    original = LayerNormFunction.backward

    def flipped(ctx, grad_out):
        return tuple(-g if g is not None else None for g in original(ctx, grad_out))

    monkeypatch.setattr(LayerNormFunction, "backward", staticmethod(flipped))
    rows = run_gradcheck("tiny", only="layer_norm")
    assert not rows[0].passed
    assert rows[0].max_rel_error > rows[0].threshold


def test_small_policy_gradients_match_finite_differences():
    rows = run_gradcheck("small", only="policy")
    assert rows[0].passed, rows[0].max_rel_error
    assert rows[0].max_rel_error < 1e-5
