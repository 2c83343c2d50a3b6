"""Desk-scale training runs; minutes to an hour on CPU, enabled with --runslow."""
import logging
from pathlib import Path

import numpy as np
import pytest

from config_loader import load_config
from models.episode import Observation
from models.point_cloud import PointCloud
from models.records import MetricsRow
from repos import DemoRepository, read_records, save_checkpoint
from services.numerics.rng import Rng
from services.policy import act, evaluate, filter_static_frames, make_windows, train
from services.policy.trainer import METRICS_FILE
from services.pretrainer import pretrain
from services.sweep import SweepRunner
from services.synthenv import DemoGenerator, rollout_expert
from tests.factories import make_episode

pytestmark = pytest.mark.slow

CONFIG_DIR = str(Path(__file__).parent.parent / "config")


def tail_loss(out_dir: Path, count: int = 20) -> float:
    rows = [row for row in read_records(str(out_dir / METRICS_FILE), MetricsRow) if row.split == "train"]
    return float(np.mean([row.loss for row in rows[-count:]]))


def window_history(window) -> list:
    return [Observation(PointCloud.from_array(cloud), proprio) for cloud, proprio in zip(window.clouds, window.proprio)]


@pytest.fixture(scope="module")
def reach_demos(tmp_path_factory):
    out = tmp_path_factory.mktemp("reach_demos")
    config = load_config(overrides=["task.name=reach"], config_dir=CONFIG_DIR)
    DemoGenerator(DemoRepository(str(out)), config.encoder.n_p).gen_demos(config.task, 50, Rng(0))
    return out


def test_constant_action_loss_drops_tenfold(tmp_path):
    config = load_config(overrides=["train.epochs=500", "train.batch_size=1", "train.val_fraction=0", "train.checkpoint_every=500"],
                         config_dir=CONFIG_DIR)
    constant = np.array([0.1, -0.2, 0.15, 0.3], dtype=np.float32)
    episode = make_episode(1, n_p=config.encoder.n_p, actions=[constant])
    DemoRepository(str(tmp_path / "demos")).save("constant", "reach", [episode])
    result = train(config, str(tmp_path / "demos"), str(tmp_path / "run"), deterministic=True)
    assert result.steps == 500

    rows = read_records(str(tmp_path / "run" / METRICS_FILE), MetricsRow)
    first = np.mean([row.loss for row in rows[:10]])
    assert tail_loss(tmp_path / "run", 10) * 10 <= first

    window = make_windows(episode, config.decoder.t_o, config.decoder.t_a)[0]
    chunk = act(result.checkpoint, window_history(window), Rng(1))
    assert np.max(np.abs(chunk.joint - constant)) < 0.05


def test_overfit_five_reach_demos(tmp_path):
    config = load_config(overrides=["train.epochs=2000", "train.batch_size=64", "train.max_steps=2000", "train.val_fraction=0",
                                    "train.checkpoint_every=1000"], config_dir=CONFIG_DIR)
    episodes = [rollout_expert(config.task, Rng(seed), config.encoder.n_p) for seed in range(5)]
    DemoRepository(str(tmp_path / "demos")).save("overfit", "reach", episodes)
    result = train(config, str(tmp_path / "demos"), str(tmp_path / "run"), deterministic=True)
    assert result.steps <= 2000
    assert tail_loss(tmp_path / "run") < 0.02

    window = make_windows(filter_static_frames(episodes[0]), config.decoder.t_o, config.decoder.t_a)[3]
    chunk = act(result.checkpoint, window_history(window), Rng(2))
    assert np.max(np.abs(chunk.joint - window.joint)) < 0.05


def test_closed_loop_reach(tmp_path, reach_demos):
    config = load_config("accept", ["task.name=reach"], CONFIG_DIR)
    result = train(config, str(reach_demos), str(tmp_path / "run"), deterministic=True)
    success = evaluate(result.checkpoint, config.task, 20, Rng(1000)).success_rate
    logging.info(f"reach closed-loop success rate {success:.2f}")
    assert success >= 0.9


def test_closed_loop_push(tmp_path):
    config = load_config("push", config_dir=CONFIG_DIR)
    DemoGenerator(DemoRepository(str(tmp_path / "demos")), config.encoder.n_p).gen_demos(config.task, 50, Rng(0))
    result = train(config, str(tmp_path / "demos"), str(tmp_path / "run"), deterministic=True)
    success = evaluate(result.checkpoint, config.task, 20, Rng(1000)).success_rate
    logging.info(f"push closed-loop success rate {success:.2f}")
    assert success >= 0.6


def test_pretraining_accuracy_and_transfer(tmp_path):
    config = load_config(config_dir=CONFIG_DIR)
    pretrained = pretrain(config, str(tmp_path / "pre"), deterministic=True)
    assert pretrained.accuracy >= 0.95

    encoder_path = str(tmp_path / "encoder.r3dc")
    save_checkpoint(pretrained.checkpoint, encoder_path)
    overrides = ["train.epochs=2000", "train.batch_size=64", "train.max_steps=2000", "train.val_fraction=0", "train.checkpoint_every=1000"]
    config = load_config(overrides=overrides, config_dir=CONFIG_DIR)
    episodes = [rollout_expert(config.task, Rng(seed), config.encoder.n_p) for seed in range(5)]
    DemoRepository(str(tmp_path / "demos")).save("transfer", "reach", episodes)

    steps_to_threshold = {}
    for name, init in (("scratch", None), ("pretrained", encoder_path)):
        train(config, str(tmp_path / "demos"), str(tmp_path / name), init, deterministic=True)
        rows = [row for row in read_records(str(tmp_path / name / METRICS_FILE), MetricsRow) if row.split == "train"]
        steps_to_threshold[name] = next((row.step for row in rows if row.loss < 0.02), None)
    logging.info(f"steps to loss < 0.02: {steps_to_threshold}")


def test_deeper_decoder_fits_no_worse(tmp_path, reach_demos):
    config = load_config("accept", ["task.name=reach", "train.max_steps=5000"], CONFIG_DIR)
    rows = SweepRunner(str(tmp_path / "sweep"), eval_episodes=0, deterministic=True).run(config, str(reach_demos), "decoder_depth", ["1", "4"])
    shallow, deep = rows
    assert deep.final_val_loss <= shallow.final_val_loss
