"""Deterministic random streams for sequential and kernel-side sampling.

Streams are derived from a 64-bit experiment seed plus an integer key path
(e.g. trial index) through ``numpy.random.SeedSequence``, so any worker can
reconstruct its stream independently of scheduling order or thread count.
Each stream carries two decoupled sources seeded from sibling children of
the same sequence:

* ``generator`` -- a ``numpy.random.Generator`` for Python-side sampling,
* ``kernel_state`` -- a 4-word xoshiro256++ state consumed (and mutated in
  place) by the numba kernels in :mod:`arwsim._kernels`.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RandomStream", "spawn_streams"]


class RandomStream:
    """One reproducible stream identified by (seed, *key)."""

    def __init__(self, seed_seq: np.random.SeedSequence):
        self.seed_seq = seed_seq
        gen_child, kernel_child = seed_seq.spawn(2)
        self.generator = np.random.Generator(np.random.PCG64(gen_child))
        state = kernel_child.generate_state(4, np.uint64)
        if not state.any():  # xoshiro must not start from the all-zero state
            state[0] = np.uint64(0x9E3779B97F4A7C15)
        self.kernel_state = state

    @classmethod
    def from_seed(cls, seed: int, *key: int) -> "RandomStream":
        return cls(np.random.SeedSequence([int(seed), *(int(k) for k in key)]))

    def random(self) -> float:
        return float(self.generator.random())

    def split(self, n: int) -> list["RandomStream"]:
        """n child streams; deterministic given this stream's spawn history."""
        return [RandomStream(ss) for ss in self.seed_seq.spawn(n)]

    def __repr__(self) -> str:
        return f"RandomStream(entropy={self.seed_seq.entropy!r})"


def spawn_streams(seed: int, n: int, *key: int) -> list[RandomStream]:
    """Streams for trials 0..n-1; stream i is RandomStream.from_seed(seed, *key, i)."""
    return [RandomStream.from_seed(seed, *key, i) for i in range(n)]
