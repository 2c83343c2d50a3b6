import math

import pytest
import torch

from models.records import MetricsRow
from repos import CheckpointRepository, DemoRepository, MetricsRepository, read_records, save_checkpoint
from services.diffusion import LossBreakdown, training_loss
from services.encoder import ConfigMismatchException
from services.numerics.functional import NumericsException
from services.numerics.optim import build_optimizer
from services.policy.model import policy_from_checkpoint, restore_optimizer
from services.policy.trainer import METRICS_FILE, PolicyTrainer, learning_rate, train
from services.pretrainer import pretrain
from tests.factories import make_episode, make_small_config


def make_trainer(tmp_path, deterministic: bool = True) -> PolicyTrainer:
    return PolicyTrainer(CheckpointRepository(str(tmp_path)), MetricsRepository(str(tmp_path / METRICS_FILE)), deterministic)


def test_constant_and_warmup_learning_rate():
    assert learning_rate(0, 100, 1e-3, "constant", 0) == 1e-3
    assert learning_rate(0, 100, 1e-3, "constant", 4) == pytest.approx(2.5e-4)
    assert learning_rate(3, 100, 1e-3, "cosine", 4) == pytest.approx(1e-3)


def test_cosine_learning_rate_decays_to_zero():
    assert learning_rate(0, 100, 1e-3, "cosine", 0) == pytest.approx(1e-3)
    assert learning_rate(50, 100, 1e-3, "cosine", 0) == pytest.approx(5e-4)
    assert learning_rate(100, 100, 1e-3, "cosine", 0) == pytest.approx(0.0, abs=1e-12)


def test_single_window_gives_one_step_per_epoch(tmp_path):
    config = make_small_config()
    config.train.epochs = 3
    result = make_trainer(tmp_path).train(config, [make_episode(1)])
    assert result.steps == 3
    assert result.final_val_loss is None
    assert math.isfinite(result.final_train_loss)


def test_checkpoints_and_metrics_written(tmp_path):
    config = make_small_config()
    config.train.epochs = 2
    make_trainer(tmp_path).train(config, [make_episode(5), make_episode(4, seed=1)])
    for name in ("best", "final", "epoch_0001", "epoch_0002"):
        assert (tmp_path / f"{name}.r3dc").exists(), name
    rows = read_records(str(tmp_path / METRICS_FILE), MetricsRow)
    # 9 windows in batches of 4: three steps per epoch
    assert [row.step for row in rows] == [1, 2, 3, 4, 5, 6]
    assert all(row.split == "train" and row.wall_ms == 0 for row in rows)


def test_validation_rows_once_per_epoch(tmp_path):
    config = make_small_config()
    config.train.epochs = 2
    config.train.val_fraction = 0.5
    result = make_trainer(tmp_path).train(config, [make_episode(5, seed=i) for i in range(4)])
    rows = read_records(str(tmp_path / METRICS_FILE), MetricsRow)
    assert [row.epoch for row in rows if row.split == "val"] == [0, 1]
    assert result.final_val_loss == pytest.approx([r.loss for r in rows if r.split == "val"][-1])


def test_training_is_deterministic(tmp_path):
    config = make_small_config()
    config.train.epochs = 2
    episodes = [make_episode(5), make_episode(4, seed=1)]
    first = make_trainer(tmp_path / "a").train(config, episodes)
    second = make_trainer(tmp_path / "b").train(config, episodes)
    assert first.final_train_loss == second.final_train_loss
    for name, tensor in first.checkpoint.tensors.items():
        assert torch.equal(tensor, second.checkpoint.tensors[name]), name
    assert (tmp_path / "a" / METRICS_FILE).read_bytes() == (tmp_path / "b" / METRICS_FILE).read_bytes()


def test_max_steps_caps_training(tmp_path):
    config = make_small_config()
    config.train.epochs = 5
    config.train.max_steps = 2
    result = make_trainer(tmp_path).train(config, [make_episode(9)])
    assert result.steps == 2


def test_dataset_dimension_mismatch(tmp_path):
    with pytest.raises(ConfigMismatchException):
        make_trainer(tmp_path).train(make_small_config(), [make_episode(3, n_p=32)])


def test_final_checkpoint_restores_policy_and_optimizer(tmp_path):
    config = make_small_config()
    result = make_trainer(tmp_path).train(config, [make_episode(5)])
    policy, stats = policy_from_checkpoint(result.checkpoint)
    optimizer = build_optimizer(policy.parameters())
    restore_optimizer(optimizer, policy, result.checkpoint)
    assert len(optimizer.state) == len(list(policy.parameters()))
    assert stats.joint.low.shape == (4,)


def test_train_from_disk_with_pretrained_encoder(tmp_path):
    config = make_small_config()
    config.pretrain.scenes = 4
    config.pretrain.epochs = 1
    config.pretrain.batch_size = 2
    pretrained = pretrain(config, str(tmp_path / "pre"), deterministic=True)
    encoder_path = str(tmp_path / "encoder.r3dc")
    save_checkpoint(pretrained.checkpoint, encoder_path)

    DemoRepository(str(tmp_path / "demos")).save("unit", "reach", [make_episode(4)])
    result = train(config, str(tmp_path / "demos"), str(tmp_path / "run"), encoder_path, deterministic=True)
    assert result.steps == 1
    assert (tmp_path / "run" / METRICS_FILE).exists()


def test_non_finite_loss_stops_training(tmp_path, monkeypatch):
    def diverged(*args, **kwargs):
        losses = training_loss(*args, **kwargs)
        return LossBreakdown(losses.loss * float("nan"), losses.loss_joint, losses.loss_ee)

    monkeypatch.setattr("services.policy.trainer.training_loss", diverged)
    with pytest.raises(NumericsException):
        make_trainer(tmp_path).train(make_small_config(), [make_episode(3)])
