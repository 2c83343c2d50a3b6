from pathlib import Path

import pytest
import yaml

from cli_controller import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, CliController
from config_loader import RuntimeSettings
from models.records import EpisodeRecord, SweepRow
from repos import DemoRepository, read_records
from tests.factories import make_small_config

CONFIG_DIR = str(Path(__file__).parent.parent / "config")
SMALL_ENV = ["--set", "encoder.n_p=64", "--set", "task.cloud_points_per_entity=12"]


@pytest.fixture
def cli():
    return CliController(RuntimeSettings(threads=1, log_level="INFO", config_dir=CONFIG_DIR))


@pytest.fixture
def small_config_file(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(make_small_config().to_dict()), encoding="utf-8")
    return str(path)


def test_missing_command_is_a_usage_error(cli):
    assert cli.run([]) == EXIT_USAGE


def test_help_exits_cleanly(cli):
    assert cli.run(["--help"]) == EXIT_OK


def test_gen_demos_rejects_zero_episodes(cli, tmp_path):
    assert cli.run(["gen-demos", "--n", "0", "--out", str(tmp_path)]) == EXIT_USAGE


def test_gen_demos_writes_a_dataset(cli, tmp_path, capsys):
    out = tmp_path / "demos"
    assert cli.run(["gen-demos", "--n", "2", "--seed", "3", "--out", str(out)] + SMALL_ENV) == EXIT_OK
    episodes = DemoRepository(str(out)).load()
    assert len(episodes) == 2 and episodes[0].n_p == 64
    assert "2 episodes written" in capsys.readouterr().out


def test_unknown_override_is_a_usage_error(cli, tmp_path):
    assert cli.run(["gen-demos", "--n", "1", "--out", str(tmp_path), "--set", "train.nope=1"]) == EXIT_USAGE


def test_missing_dataset_is_a_failure(cli, tmp_path, small_config_file):
    assert cli.run(["train", "--config", small_config_file, "--data", str(tmp_path / "absent"), "--out", str(tmp_path / "run")]) == EXIT_FAILURE


def test_train_then_evaluate_checkpoint(cli, tmp_path, small_config_file, capsys):
    demos, run = tmp_path / "demos", tmp_path / "run"
    assert cli.run(["gen-demos", "--n", "2", "--out", str(demos), "--config", small_config_file]) == EXIT_OK
    assert cli.run(["train", "--config", small_config_file, "--data", str(demos), "--out", str(run)]) == EXIT_OK
    assert (run / "final.r3dc").exists()
    log = tmp_path / "episodes.csv"
    assert cli.run(["eval", "--checkpoint", str(run / "final.r3dc"), "--episodes", "1", "--out", str(log)]) == EXIT_OK
    assert len(read_records(str(log), EpisodeRecord)) == 1
    assert "success rate" in capsys.readouterr().out


def test_gradcheck_single_op(cli, capsys):
    assert cli.run(["gradcheck", "--only", "layer_norm"]) == EXIT_OK
    assert "PASS" in capsys.readouterr().out


def test_eval_zero_oracle_writes_log(cli, tmp_path, capsys):
    log = tmp_path / "zero.csv"
    assert cli.run(["eval", "--oracle", "zero", "--episodes", "2", "--out", str(log)] + SMALL_ENV) == EXIT_OK
    records = read_records(str(log), EpisodeRecord)
    assert [r.success for r in records] == [False, False]
    assert "success rate 0.00" in capsys.readouterr().out


def test_eval_expert_oracle_succeeds(cli, tmp_path, capsys):
    log = tmp_path / "expert.csv"
    assert cli.run(["eval", "--oracle", "expert", "--episodes", "2", "--out", str(log)] + SMALL_ENV) == EXIT_OK
    assert "success rate 1.00" in capsys.readouterr().out


def test_eval_rejects_zero_episodes(cli, tmp_path):
    assert cli.run(["eval", "--oracle", "zero", "--episodes", "0", "--out", str(tmp_path / "x.csv")]) == EXIT_USAGE


def test_eval_sources_are_exclusive(cli, tmp_path):
    assert cli.run(["eval", "--oracle", "zero", "--checkpoint", str(tmp_path / "c.r3dc")]) == EXIT_USAGE


def test_sweep_over_decoder_depth(cli, tmp_path, small_config_file):
    demos, out = tmp_path / "demos", tmp_path / "sweep"
    assert cli.run(["gen-demos", "--n", "2", "--out", str(demos), "--config", small_config_file]) == EXIT_OK
    args = ["sweep", "--config", small_config_file, "--data", str(demos), "--out", str(out),
            "--axis", "decoder_depth", "--values", "1", "2", "--eval-episodes", "0"]
    assert cli.run(args) == EXIT_OK
    rows = read_records(str(out / "sweep.csv"), SweepRow)
    assert [row.value for row in rows] == ["1", "2"]
    assert all(row.success_rate is None for row in rows)


def test_pretrain_command_writes_checkpoint(cli, tmp_path, small_config_file, capsys):
    out = tmp_path / "pre"
    args = ["pretrain", "--config", small_config_file, "--scenes", "4", "--out", str(out),
            "--set", "pretrain.epochs=1", "--set", "pretrain.batch_size=2"]
    assert cli.run(args) == EXIT_OK
    assert (out / "pretrain.r3dc").exists()
    assert "held-out patch accuracy" in capsys.readouterr().out
