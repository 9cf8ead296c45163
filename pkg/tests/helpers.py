"""Shared test models: hand-built and randomly generated conditional LMs."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from constrainlab.models import ConditionalLM
from constrainlab.rng import uniform


class TreeModel(ConditionalLM):
    """Explicit next-token distributions keyed by target prefix.

    `table` maps prefix tuples to probability vectors; prefixes not listed
    fall back to `default` (or a point mass on EOS when no default is given).
    """

    def __init__(self, vocab_size: int, table: dict, eos_id: int = 0, default=None):
        self.vocab_size = vocab_size
        self.eos_id = eos_id
        self._table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        if default is None:
            default = np.zeros(vocab_size)
            default[eos_id] = 1.0
        self._default = np.asarray(default, dtype=np.float64)

    def next_dist(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        return self._table.get(tuple(prefix), self._default)


class RandomTableModel(ConditionalLM):
    """Deterministic pseudo-random model: each prefix gets its own distribution.

    Distributions are derived from the counter rng keyed by (seed, prefix
    hash), so the model is reproducible and prefix-dependent but otherwise
    arbitrary; useful as an adversarial instance for search oracles.
    """

    def __init__(self, vocab_size: int, seed: int, eos_id: int = 0, min_eos: float = 0.0):
        self.vocab_size = vocab_size
        self.eos_id = eos_id
        self.seed = seed
        self.min_eos = min_eos
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    def next_dist(self, source: Sequence[int], prefix: Sequence[int]) -> np.ndarray:
        key = tuple(prefix)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        stream = hash(key) & ((1 << 62) - 1)
        raw = np.array(
            [uniform(self.seed, stream, j) for j in range(self.vocab_size)], dtype=np.float64
        )
        raw += 0.01  # keep every token reachable
        dist = raw / raw.sum()
        if self.min_eos > 0.0 and dist[self.eos_id] < self.min_eos:
            dist = dist * (1.0 - self.min_eos) / (dist.sum() - dist[self.eos_id])
            dist[self.eos_id] = self.min_eos
            dist = dist / dist.sum()
        self._cache[key] = dist
        return dist


def random_unigram(vocab_size: int, seed: int, eos_floor: float = 0.02) -> np.ndarray:
    """A random unigram probability vector with P(EOS) at least eos_floor."""
    raw = np.array([uniform(seed, 0, j) for j in range(vocab_size)]) + 0.02
    dist = raw / raw.sum()
    if dist[0] < eos_floor:
        dist = dist * (1.0 - eos_floor) / (dist.sum() - dist[0])
        dist[0] = eos_floor
        dist = dist / dist.sum()
    return dist
