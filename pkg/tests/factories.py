import numpy as np

from models.config import Config, DecoderConfig, DiffusionConfig, EncoderConfig, TaskSpec, TrainConfig
from models.episode import Episode


def make_small_config() -> Config:
    """Small enough for unit tests: 64-point clouds, width 16, one block each."""
    config = Config(
        encoder=EncoderConfig(n_p=64, n_c=8, k=8, d=16, depth=1, heads=2, hidden=16, mlp_ratio=2),
        decoder=DecoderConfig(d=16, depth=1, heads=2, t_o=2, t_a=4, n_q=4, hidden=16, mlp_ratio=2),
        diffusion=DiffusionConfig(k=10),
        train=TrainConfig(epochs=1, batch_size=4, execute_steps=2, checkpoint_every=1, val_fraction=0.0),
        task=TaskSpec(cloud_points_per_entity=12, max_steps=30),
    )
    return config.validate()


def make_episode(length: int, n_p: int = 64, n_q: int = 4, seed: int = 0, actions=None) -> Episode:
    r = np.random.default_rng(seed)
    clouds = np.concatenate([r.uniform(-0.5, 0.5, (length, n_p, 3)), r.uniform(0, 1, (length, n_p, 3))], axis=2).astype(np.float32)
    proprio = r.uniform(-0.3, 0.3, (length, n_q)).astype(np.float32)
    if actions is None:
        actions = r.uniform(-0.3, 0.3, (length, n_q))
    actions = np.asarray(actions, dtype=np.float32)
    ee = np.zeros((length, 7), dtype=np.float32)
    ee[:, :3] = actions[:, :3]
    ee[:, 3] = 1.0
    return Episode(clouds, proprio, actions, ee, task_id="reach")
