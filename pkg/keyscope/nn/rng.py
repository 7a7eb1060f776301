from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RNG_ALGORITHM = "pcg64"


@dataclass
class RngStream:
    """Seeded PCG64 stream; identical seeds give identical draws on every platform."""

    seed: int
    algorithm: str = RNG_ALGORITHM
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.algorithm != RNG_ALGORITHM:
            raise ValueError(f"unsupported rng algorithm {self.algorithm!r}")
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, *keys: int) -> "RngStream":
        """Independent child stream keyed by e.g. (epoch, item index)."""
        sequence = np.random.SeedSequence([self.seed, *[int(key) for key in keys]])
        child_seed = int(sequence.generate_state(1, dtype=np.uint64)[0])
        return RngStream(seed=child_seed, algorithm=self.algorithm)

    def integers(self, low: int, high: int, size=None):
        """Uniform integers on the closed range [low, high]."""
        return self.generator.integers(low, high, size=size, endpoint=True)

    def random(self, size=None):
        return self.generator.random(size)

    def uniform(self, low: float, high: float, size=None):
        return self.generator.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)
