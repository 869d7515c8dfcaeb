from __future__ import annotations

import math

import numpy as np


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an integer seed, a SeedSequence or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def derive_seed_sequence(root_seed: int, replicate: int, role: int = 0) -> np.random.SeedSequence:
    """Stream for (root seed, replicate index, stream role).

    The SeedSequence hash makes the stream independent of the order in which
    replicates are executed.
    """
    return np.random.SeedSequence(entropy=int(root_seed), spawn_key=(int(replicate), int(role)))


class Draws:
    """Block-buffered scalar draws from a numpy Generator.

    Scalar calls on a Generator cost about a microsecond each; pure-Python
    simulators that need millions of draws pull them from a buffer instead.
    The sequence is a deterministic function of the generator state.
    """

    __slots__ = ("_rng", "_buf", "_pos", "_block")

    def __init__(self, rng, block: int = 4096):
        self._rng = as_generator(rng)
        self._block = block
        self._buf = self._rng.random(block)
        self._pos = 0

    def uniform(self) -> float:
        if self._pos == self._block:
            self._buf = self._rng.random(self._block)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)

    def exponential(self, rate: float) -> float:
        # 1 - u lies in (0, 1]
        return -math.log(1.0 - self.uniform()) / rate
