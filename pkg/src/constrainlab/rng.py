"""Counter-based random streams shared by every stochastic component.

All randomness in the toolkit flows through one portable generator so that
reports are byte-identical across machines and worker counts.  The generator
is the splitmix64 finalizer applied three times, keyed by
``(seed, stream, step)``:

    h0 = mix(seed + G0)
    h1 = mix(h0 ^ (stream + G1))
    h2 = mix(h1 ^ (step + G2))
    uniform = (h2 >> 11) / 2**53

where ``mix`` is the standard splitmix64 avalanche and G0..G2 are odd
constants.  A draw therefore depends only on its coordinates, never on how
many draws happened before it or on which thread asked.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK = (1 << 64) - 1
_G0 = 0x9E3779B97F4A7C15
_G1 = 0xBF58476D1CE4E5B9
_G2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


def uniform(seed: int, stream: int, step: int) -> float:
    """One uniform draw in [0, 1) at integer coordinates (seed, stream, step)."""
    h = _mix((seed + _G0) & _MASK)
    h = _mix((h ^ ((stream + _G1) & _MASK)) & _MASK)
    h = _mix((h ^ ((step + _G2) & _MASK)) & _MASK)
    return (h >> 11) * 2.0**-53


def uniform_array(seed: int, streams: np.ndarray, step: int) -> np.ndarray:
    """Vectorized `uniform` over an array of stream indices (same seed/step)."""
    with np.errstate(over="ignore"):
        s = np.uint64((seed + _G0) & _MASK)
        h = _mix_np(s)
        h = _mix_np(h ^ ((streams.astype(np.uint64) + np.uint64(_G1)) & np.uint64(_MASK)))
        h = _mix_np(h ^ np.uint64((step + _G2) & _MASK))
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _mix_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class CounterRng:
    """Sequential-looking facade over the counter generator.

    Used where code wants an rng object (toy-corpus templates); draws are
    still pure functions of (seed, stream, call index).
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = seed
        self.stream = stream
        self._step = 0

    def random(self) -> float:
        u = uniform(self.seed, self.stream, self._step)
        self._step += 1
        return u

    def randint(self, low: int, high: int) -> int:
        """Integer in [low, high] inclusive."""
        return low + int(self.random() * (high - low + 1))

    def choice(self, items):
        return items[self.randint(0, len(items) - 1)]

    def weighted_choice(self, items, weights):
        total = float(sum(weights))
        u = self.random() * total
        acc = 0.0
        for item, w in zip(items, weights):
            acc += w
            if u < acc:
                return item
        return items[-1]


def derive_seed(master_seed: int, *parts) -> int:
    """Collision-resistant deterministic seed derivation.

    SHA-256 over the canonical string ``"clab1|<master>|<part>|..."``,
    truncated to the top 63 bits.  Independent of execution order and worker
    count by construction.
    """
    text = "clab1|" + "|".join(str(p) for p in (master_seed, *parts))
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)
