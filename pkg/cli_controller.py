import argparse
import logging
import os
from typing import Callable, Dict, List, Optional

from config_loader import RuntimeSettings, load_config, load_runtime_settings
from models.config import Config, ConfigValidationException
from models.records import EpisodeRecord
from models.task_type import TaskType
from repos import DemoRepository, load_checkpoint, write_records
from services.gradcheck_suite import CHECKS, DIMS, run_gradcheck
from services.numerics.rng import Rng
from services.policy import DiffusionAgent, ExpertAgent, PolicyEvaluator, ZeroAgent, train
from services.pretrainer import pretrain
from services.sweep import SWEEP_AXES, SWEEP_FILE, SweepRunner
from services.synthenv import DemoGenerator

TASK_NAMES = [task.value for task in TaskType]

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageException(Exception):
    pass


class CliController:
    def __init__(self, settings: Optional[RuntimeSettings] = None):
        self.settings = settings or load_runtime_settings()
        self.parser = argparse.ArgumentParser(prog="r3d", description="Point-cloud diffusion policy toolkit")
        self.commands = self.parser.add_subparsers(dest="command", required=True)
        self.handlers: Dict[str, Callable[[argparse.Namespace], int]] = {}

        def command(name: str, help_text: str) -> argparse.ArgumentParser:
            sub = self.commands.add_parser(name, help=help_text)
            sub.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                             help="config override, e.g. train.epochs=2 (repeatable, wins over the file)")
            return sub

        sub = command("gen-demos", "roll out the scripted expert and write an R3DE dataset")
        sub.add_argument("--task", choices=TASK_NAMES, default="reach")
        sub.add_argument("--n", type=int, required=True)
        sub.add_argument("--seed", type=int, default=0)
        sub.add_argument("--out", required=True)
        sub.add_argument("--config")
        self.handlers["gen-demos"] = self.gen_demos

        sub = command("pretrain", "segmentation pretraining of the point-cloud encoder")
        sub.add_argument("--config")
        sub.add_argument("--scenes", type=int)
        sub.add_argument("--out", required=True)
        self.handlers["pretrain"] = self.pretrain

        sub = command("train", "train a policy on a demonstration dataset")
        sub.add_argument("--config")
        sub.add_argument("--data", required=True)
        sub.add_argument("--out", required=True)
        sub.add_argument("--init-encoder", dest="init_encoder")
        self.handlers["train"] = self.train

        sub = command("eval", "closed-loop success rate in the synthetic environment")
        source = sub.add_mutually_exclusive_group(required=True)
        source.add_argument("--checkpoint")
        source.add_argument("--oracle", choices=["expert", "zero"])
        sub.add_argument("--task", choices=TASK_NAMES, default="reach")
        sub.add_argument("--episodes", type=int, default=20)
        sub.add_argument("--seed", type=int, default=0)
        sub.add_argument("--config")
        sub.add_argument("--out", default="eval_episodes.csv", help="per-episode CSV")
        self.handlers["eval"] = self.evaluate

        sub = command("gradcheck", "finite-difference gradient suite in float64")
        sub.add_argument("--dims", choices=sorted(DIMS), default="tiny")
        sub.add_argument("--only", choices=sorted(CHECKS))
        self.handlers["gradcheck"] = self.gradcheck

        sub = command("sweep", "train one model per value of a single config axis")
        sub.add_argument("--config")
        sub.add_argument("--data", required=True)
        sub.add_argument("--out", required=True)
        sub.add_argument("--axis", choices=SWEEP_AXES, required=True)
        sub.add_argument("--values", nargs="+", required=True)
        sub.add_argument("--eval-episodes", dest="eval_episodes", type=int, default=20)
        self.handlers["sweep"] = self.sweep

    def run(self, argv: Optional[List[str]] = None) -> int:
        try:
            args = self.parser.parse_args(argv)
        except SystemExit as e:
            return EXIT_OK if e.code in (0, None) else EXIT_USAGE
        try:
            return self.handlers[args.command](args)
        except (ConfigValidationException, UsageException) as e:
            logging.error(f"{args.command}: {e}")
            return EXIT_USAGE
        except Exception as e:
            logging.error(f"{args.command} failed: {e}")
            logging.debug("traceback", exc_info=True)
            return EXIT_FAILURE

    def load_config(self, args: argparse.Namespace, *extra: str) -> Config:
        return load_config(args.config, list(extra) + list(args.overrides), self.settings.config_dir)

    def gen_demos(self, args: argparse.Namespace) -> int:
        if args.n < 1:
            raise UsageException(f"--n must be at least 1, got {args.n}")
        config = self.load_config(args, f"task.name={args.task}")
        manifest = DemoGenerator(DemoRepository(args.out), config.encoder.n_p).gen_demos(config.task, args.n, Rng(args.seed))
        print(f"{len(manifest.episodes)} episodes written to {args.out}")
        return EXIT_OK

    def pretrain(self, args: argparse.Namespace) -> int:
        extra = [f"pretrain.scenes={args.scenes}"] if args.scenes is not None else []
        config = self.load_config(args, *extra)
        result = pretrain(config, args.out, self.settings.deterministic)
        print(f"held-out patch accuracy {result.accuracy:.4f}")
        return EXIT_OK

    def train(self, args: argparse.Namespace) -> int:
        config = self.load_config(args)
        result = train(config, args.data, args.out, args.init_encoder, self.settings.deterministic)
        val = f"{result.final_val_loss:.6f}" if result.final_val_loss is not None else "n/a"
        print(f"trained {result.steps} steps: train loss {result.final_train_loss:.6f}, val loss {val}; checkpoints in {args.out}")
        return EXIT_OK

    def evaluate(self, args: argparse.Namespace) -> int:
        if args.episodes < 1:
            raise UsageException(f"--episodes must be at least 1, got {args.episodes}")
        if args.checkpoint:
            agent = DiffusionAgent(load_checkpoint(args.checkpoint))
            config = agent.policy.config
            spec, execute_steps = config.task, config.train.execute_steps
            if spec.name != args.task:
                spec = self.load_config(args, f"task.name={args.task}").task
        else:
            config = self.load_config(args, f"task.name={args.task}")
            spec, execute_steps = config.task, config.train.execute_steps
            if args.oracle == "expert":
                agent = ExpertAgent(spec, config.decoder.t_o, config.decoder.t_a, config.encoder.n_p)
            else:
                agent = ZeroAgent(config.decoder.t_o, config.decoder.t_a, config.decoder.n_q, config.encoder.n_p)
        result = PolicyEvaluator(spec, execute_steps).evaluate(agent, args.episodes, Rng(args.seed))
        write_records(args.out, result.records, EpisodeRecord)
        print(f"success rate {result.success_rate:.2f} over {args.episodes} episodes; per-episode log in {args.out}")
        return EXIT_OK

    def gradcheck(self, args: argparse.Namespace) -> int:
        rows = run_gradcheck(args.dims, args.only)
        for row in rows:
            print(f"{row.op:<18} {row.max_rel_error:.3e}  threshold {row.threshold:.0e}  {'PASS' if row.passed else 'FAIL'}")
        failing = [row.op for row in rows if not row.passed]
        if failing:
            logging.error(f"gradcheck failed for: {', '.join(failing)}")
            return EXIT_FAILURE
        return EXIT_OK

    def sweep(self, args: argparse.Namespace) -> int:
        config = self.load_config(args)
        rows = SweepRunner(args.out, args.eval_episodes, self.settings.deterministic).run(config, args.data, args.axis, args.values)
        print(f"{len(rows)} sweep rows written to {os.path.join(args.out, SWEEP_FILE)}")
        return EXIT_OK
