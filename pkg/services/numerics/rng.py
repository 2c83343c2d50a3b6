from typing import List, Optional

import numpy as np
import torch


class Rng:
    """Seedable, splittable random stream.

    Backed by numpy's PCG64 bit generator. `split` derives child streams
    through `SeedSequence.spawn`, so children are statistically independent
    of each other and of the parent, and the same parent seed always yields
    the same children in the same order.
    """

    ALGORITHM = "PCG64"

    def __init__(self, seed: Optional[int] = None, seed_sequence: Optional[np.random.SeedSequence] = None):
        if seed_sequence is None:
            seed_sequence = np.random.SeedSequence(seed)
        self.seed_sequence = seed_sequence
        self.generator = np.random.Generator(np.random.PCG64(seed_sequence))

    def split(self, n: int) -> List["Rng"]:
        return [Rng(seed_sequence=child) for child in self.seed_sequence.spawn(n)]

    def child(self) -> "Rng":
        return self.split(1)[0]

    def torch_generator(self) -> torch.Generator:
        # a fresh torch stream seeded from this stream, consuming one draw
        generator = torch.Generator()
        generator.manual_seed(int(self.generator.integers(0, 2**63 - 1)))
        return generator

    def integers(self, low: int, high: int, size=None):
        return self.generator.integers(low, high, size=size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self.generator.uniform(low, high, size=size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self.generator.normal(loc, scale, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)

    def restart(self) -> "Rng":
        """A stream replaying this one from its initial state, spawn counter included."""
        seq = self.seed_sequence
        return Rng(seed_sequence=np.random.SeedSequence(seq.entropy, spawn_key=seq.spawn_key, pool_size=seq.pool_size))
