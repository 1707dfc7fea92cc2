"""
Counter-keyed random streams.

Every consumer asks for a generator keyed by (seed, purpose, ...) so that
results do not depend on scheduling or thread count: the same key always
yields the same Philox stream.
"""
from typing import Tuple

import numpy as np

from src.models.errors import ConfigError

STREAM_RG = 1
STREAM_MCMC = 2
STREAM_DIRECT = 3


class StreamFactory:
    """
    Deterministic Philox generators keyed by integer tuples.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ConfigError(f"Seed must be >= 0, got {seed}")
        self.seed = int(seed)

    def key(self, *parts: int) -> Tuple[int, ...]:
        return tuple(int(p) for p in parts)

    def generator(self, *parts: int) -> np.random.Generator:
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key(*parts))
        return np.random.Generator(np.random.Philox(sequence))

    def rg(self, replica: int, scale: int) -> np.random.Generator:
        """Stream of one exact-RG step; shared by every grid point."""
        return self.generator(STREAM_RG, replica, scale)

    def chain(self, chain: int) -> np.random.Generator:
        return self.generator(STREAM_MCMC, chain)

    def direct(self, batch: int) -> np.random.Generator:
        return self.generator(STREAM_DIRECT, batch)
