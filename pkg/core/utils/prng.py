# Seeded random streams

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np


@dataclass(frozen=True)
class Prng:
    """
    A reproducible random stream identified by (seed, stream_id).

    Child streams are derived through numpy SeedSequence spawn keys, so two
    streams never share state and the same (seed, stream path, draw sequence)
    always reproduces the same numbers bit-for-bit.
    """

    seed: int
    stream_id: int = 0
    parents: Tuple[int, ...] = ()
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream_id must be non-negative")
        sequence = np.random.SeedSequence(
            entropy=self.seed, spawn_key=self.parents + (self.stream_id,)
        )
        object.__setattr__(self, "generator", np.random.Generator(np.random.PCG64(sequence)))

    def child(self, stream_id: int) -> "Prng":
        return Prng(self.seed, stream_id, self.parents + (self.stream_id,))

    def normal(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, size=None):
        return self.generator.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self.generator.choice(n, size=size, replace=replace)
