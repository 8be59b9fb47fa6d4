"""Reproducible replicate streams.

Replicates are grouped in fixed blocks of ``BLOCK`` consecutive indices.
Block ``b`` of stream ``s`` draws from a Philox (counter-based) generator
keyed by ``SeedSequence(seed, spawn_key=(s, b))``, so a replicate's draws
depend only on (seed, replicate index, stream) and never on how blocks are
shared between workers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BLOCK = 256

TYPE0_STREAM = 0
TYPES_STREAM = 1
CONSTANT_STREAM = 2


@dataclass(frozen=True)
class ReplicateStreams:
    seed: int

    def generator(self, stream: int, block: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(stream), int(block)))
        return np.random.Generator(np.random.Philox(ss))

    def blocks(self, reps: int) -> list[tuple[int, int]]:
        """(block index, replicate count) pairs covering ``reps`` replicates."""
        full, rest = divmod(int(reps), BLOCK)
        out = [(b, BLOCK) for b in range(full)]
        if rest:
            out.append((full, rest))
        return out


def as_streams(seed) -> ReplicateStreams:
    if isinstance(seed, ReplicateStreams):
        return seed
    if seed is None:
        raise ValueError("a seed is required; there is no wall-clock default")
    return ReplicateStreams(int(seed))
