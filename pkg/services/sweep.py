import copy
import logging
import os
from typing import List, Sequence, Tuple

from models.config import ENCODER_PRESETS, Config
from models.records import SweepRow
from repos import write_records
from services.numerics.rng import Rng
from services.policy.evaluator import evaluate
from services.policy.trainer import train

SWEEP_AXES = ("encoder_preset", "decoder_depth")
SWEEP_FILE = "sweep.csv"


def apply_axis(config: Config, axis: str, value: str) -> Config:
    """Copy of config with only the swept axis changed; seeds and data settings are shared."""
    cell = copy.deepcopy(config)
    if axis == "encoder_preset":
        if value not in ENCODER_PRESETS:
            raise ValueError(f"unknown encoder preset '{value}', choose from {sorted(ENCODER_PRESETS)}")
        cell.encoder.preset = value
        for key, preset_value in ENCODER_PRESETS[value].items():
            setattr(cell.encoder, key, preset_value)
    elif axis == "decoder_depth":
        cell.decoder.depth = int(value)
    else:
        raise ValueError(f"unknown sweep axis '{axis}', choose from {SWEEP_AXES}")
    return cell.validate()


def sweep_configs(config: Config, axis: str, values: Sequence[str]) -> List[Tuple[str, Config]]:
    return [(str(value), apply_axis(config, axis, str(value))) for value in values]


class SweepRunner:
    def __init__(self, out_dir: str, eval_episodes: int = 20, deterministic: bool = False):
        self.out_dir = out_dir
        self.eval_episodes = eval_episodes
        self.deterministic = deterministic

    def run(self, config: Config, data_dir: str, axis: str, values: Sequence[str]) -> List[SweepRow]:
        cells = sweep_configs(config, axis, values)
        logging.info(f"Sweep started: {axis} over {[value for value, _ in cells]}")
        rows = []
        for value, cell in cells:
            cell_dir = os.path.join(self.out_dir, f"{axis}_{value}")
            result = train(cell, data_dir, cell_dir, deterministic=self.deterministic)
            success_rate = None
            if self.eval_episodes > 0:
                success_rate = evaluate(result.checkpoint, cell.task, self.eval_episodes, Rng(cell.train.seed)).success_rate
            rows.append(SweepRow(value=value, final_val_loss=result.final_val_loss, success_rate=success_rate))
            logging.info(f"Sweep cell {axis}={value}: val loss {result.final_val_loss}, success rate {success_rate}")
            write_records(os.path.join(self.out_dir, SWEEP_FILE), rows, SweepRow)
        logging.info(f"Sweep finished: {len(rows)} cells")
        return rows
