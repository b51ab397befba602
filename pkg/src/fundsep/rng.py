"""Counter-based normal streams keyed by (seed, block of paths).

Paths are grouped in fixed blocks of ``BLOCK_LANES``; block ``k`` draws
from a Philox generator whose key is hashed from (seed, k) by
``SeedSequence``. Each block always draws a full row of lanes, so the
values seen by path i do not depend on how many paths were requested, on
how the work is split into chunks, or on the number of worker threads.
"""
from __future__ import annotations

import os

import numpy as np

__all__ = ["BLOCK_LANES", "NoiseSource", "block_generator", "worker_count"]

BLOCK_LANES = 256


def block_generator(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed) & (2 ** 64 - 1), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


def worker_count(default: int = 1) -> int:
    """Worker threads from FUNDSEP_THREADS; never changes results."""
    raw = os.environ.get("FUNDSEP_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return default
    return max(1, n)


class NoiseSource:
    """Standard normals for paths [first, first + count), drawn step-chunk by step-chunk.

    ``first`` must be a multiple of BLOCK_LANES. With ``antithetic`` the
    paths come in pairs (2j, 2j+1) whose draws are exact negations.
    """

    def __init__(self, seed: int, first: int, count: int, dim: int = 1, antithetic: bool = True):
        if first % BLOCK_LANES:
            raise ValueError("first path must start a block")
        self.count = count
        self.dim = dim
        self.antithetic = antithetic
        n_blocks = -(-count // BLOCK_LANES)
        b0 = first // BLOCK_LANES
        self._gens = [block_generator(seed, b0 + k) for k in range(n_blocks)]
        self.sum = 0.0
        self.sumsq = 0.0

    def draw(self, steps: int) -> np.ndarray:
        """Array of shape (steps, count, dim)."""
        lanes = BLOCK_LANES // 2 if self.antithetic else BLOCK_LANES
        parts = []
        for g in self._gens:
            x = g.standard_normal((steps, lanes, self.dim))
            if self.antithetic:
                y = np.empty((steps, BLOCK_LANES, self.dim))
                y[:, 0::2] = x
                y[:, 1::2] = -x
                x = y
            parts.append(x)
        out = np.concatenate(parts, axis=1)[:, : self.count]
        self.sum += float(out.sum())
        self.sumsq += float(np.square(out).sum())
        return out
