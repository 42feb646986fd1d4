"""Named random streams derived from one 64-bit seed with splitmix64."""
from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("dataset", "data", "init", "timesteps", "noise", "dropout", "triplets", "sampling")
_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def stream_seed(seed: int, name: str) -> int:
    return splitmix64(splitmix64(seed & _MASK) ^ zlib.crc32(name.encode()))


class RngStreams:
    """Independent generators keyed by stream name.

    Each stream is isolated, so enabling or disabling a code path that draws
    from one stream never shifts the draws seen by another.
    """

    def __init__(self, seed: int, names=STREAMS):
        self.seed = int(seed)
        self._gens = {n: np.random.Generator(np.random.PCG64(stream_seed(self.seed, n))) for n in names}

    def __getitem__(self, name: str) -> np.random.Generator:
        return self._gens[name]

    def state(self) -> dict:
        return {n: g.bit_generator.state for n, g in self._gens.items()}

    def set_state(self, state: dict) -> None:
        for n, s in state.items():
            self._gens[n].bit_generator.state = s
