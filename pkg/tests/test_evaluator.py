from dataclasses import replace

import numpy as np
import pytest

from models.config import TASK_PRESETS, TaskSpec
from models.episode import Observation
from repos import CheckpointRepository, MetricsRepository
from services.encoder import ConfigMismatchException
from services.numerics.functional import ShapeMismatchException
from services.numerics.rng import Rng
from services.policy import DiffusionAgent, ExpertAgent, PolicyEvaluator, ZeroAgent, act, evaluate
from services.policy.trainer import METRICS_FILE, PolicyTrainer
from services.synthenv import render_cloud, reset
from tests.factories import make_episode, make_small_config

REACH = TaskSpec(cloud_points_per_entity=12, max_steps=30)


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    out = tmp_path_factory.mktemp("policy")
    trainer = PolicyTrainer(CheckpointRepository(str(out)), MetricsRepository(str(out / METRICS_FILE)), deterministic=True)
    return trainer.train(make_small_config(), [make_episode(6), make_episode(5, seed=1)]).checkpoint


def history(n_p: int = 64, length: int = 2, seed: int = 0):
    state = reset(REACH, Rng(seed))
    cloud = render_cloud(state, REACH, Rng(seed + 1), n_p)
    return [Observation(cloud, state.agent.astype(np.float32))] * length


def test_expert_oracle_solves_reach():
    result = PolicyEvaluator(REACH, 2).evaluate(ExpertAgent(REACH, 2, 4, n_p=64), 3, Rng(0))
    assert result.success_rate == 1.0
    assert [r.episode for r in result.records] == [0, 1, 2]
    assert all(r.final_distance <= REACH.success_tolerance for r in result.records)


def test_zero_oracle_never_succeeds():
    result = PolicyEvaluator(REACH, 2).evaluate(ZeroAgent(2, 4, n_p=64), 2, Rng(0))
    assert result.success_rate == 0.0
    assert all(r.steps == REACH.max_steps and not r.success for r in result.records)


def test_diffusion_agent_chunk_shapes(checkpoint):
    chunk = DiffusionAgent(checkpoint).act(history(), Rng(3))
    assert chunk.joint.shape == (4, 4)
    assert chunk.ee.shape == (4, 7)
    np.testing.assert_allclose(np.linalg.norm(chunk.ee[:, 3:], axis=1), 1.0, atol=1e-9)
    assert np.all(chunk.ee[:, 3] >= 0)


def test_act_is_reproducible_for_fixed_seed(checkpoint):
    a = act(checkpoint, history(), Rng(5))
    b = act(checkpoint, history(), Rng(5))
    assert np.array_equal(a.joint, b.joint)
    assert np.array_equal(a.ee, b.ee)


def test_diffusion_agent_stays_inside_envelope(checkpoint):
    agent = DiffusionAgent(checkpoint)
    low, high = agent.stats.joint.low, agent.stats.joint.high
    margin = 0.1 * (high - low)
    for seed in range(5):
        joint = agent.act(history(seed=seed), Rng(seed)).joint
        assert np.all(joint >= low - margin - 1e-12) and np.all(joint <= high + margin + 1e-12)


def test_diffusion_agent_closed_loop_runs(checkpoint):
    result = evaluate(checkpoint, REACH, 1, Rng(0))
    assert len(result.records) == 1
    assert 0 < result.records[0].steps <= REACH.max_steps


def test_check_agent_rejects_wrong_task(checkpoint):
    push = TaskSpec(name="push", **TASK_PRESETS["push"])
    with pytest.raises(ConfigMismatchException):
        PolicyEvaluator(push, 2).evaluate(DiffusionAgent(checkpoint), 1, Rng(0))


def test_check_agent_rejects_execute_steps_beyond_horizon():
    with pytest.raises(ConfigMismatchException):
        PolicyEvaluator(REACH, 5).evaluate(ZeroAgent(2, 4, n_p=64), 1, Rng(0))


def test_check_agent_rejects_joint_dims():
    with pytest.raises(ConfigMismatchException):
        PolicyEvaluator(REACH, 2).evaluate(ZeroAgent(2, 4, n_q=3, n_p=64), 1, Rng(0))


def test_agents_reject_wrong_history_length(checkpoint):
    with pytest.raises(ShapeMismatchException):
        DiffusionAgent(checkpoint).act(history(length=3), Rng(0))
    with pytest.raises(ShapeMismatchException):
        ZeroAgent(2, 4, n_p=64).act(history(length=1), Rng(0))


def test_diffusion_agent_rejects_wrong_cloud_size(checkpoint):
    with pytest.raises(ShapeMismatchException):
        DiffusionAgent(checkpoint).act(history(n_p=32), Rng(0))


def test_expert_agent_needs_state():
    with pytest.raises(ValueError):
        ExpertAgent(REACH, 2, 4, n_p=64).act(history(), Rng(0))


def test_evaluate_rejects_zero_episodes():
    with pytest.raises(ValueError):
        PolicyEvaluator(REACH, 2).evaluate(ZeroAgent(2, 4, n_p=64), 0, Rng(0))


def test_expert_chunk_is_kinematically_consistent():
    state = reset(REACH, Rng(2))
    chunk = ExpertAgent(replace(REACH, expert_jitter=0.0), 2, 4, n_p=64).act(history(), Rng(0), state)
    assert chunk.joint.shape == (4, 4)
    np.testing.assert_allclose(chunk.ee[:, :3], chunk.joint[:, :3])
