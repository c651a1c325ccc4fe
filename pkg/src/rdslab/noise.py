"""Seeded, counter-addressable iid uniform noise on [-sigma, sigma].

Built on numpy's Philox generator: sample i is a pure function of
(seed, offset + i), so shifted views, random access, and replica streams are
all exact and schedule-independent.  Philox emits 64-bit words in blocks of
four; ``advance(q)`` skips q blocks, so addressing word ``n`` means advancing
``n // 4`` blocks and discarding ``n % 4`` words.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_U64 = np.uint64
_INV53 = 2.0 ** -53
_MASK64 = (1 << 64) - 1


def mix_seed(*parts: int) -> tuple[int, int]:
    """Deterministically combine integers into a 2-word Philox key (splitmix64)."""
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h = (h ^ (p & _MASK64)) & _MASK64
        h = (h * 0xBF58476D1CE4E5B9) & _MASK64
        h ^= h >> 31
    lo = h
    h = (h * 0x94D049BB133111EB) & _MASK64
    h ^= h >> 29
    return lo, h


def _raw_words(key: tuple[int, int], start: int, count: int) -> np.ndarray:
    q, off = divmod(start, 4)
    bg = np.random.Philox(key=key)
    if q:
        bg.advance(q)
    return bg.random_raw(off + count)[off:]


@dataclass(frozen=True)
class NoiseStream:
    """The omega of the skew product: iid uniform draws on [-sigma, sigma].

    Same (seed, index) always yields the same sample.  ``shifted(k)`` is the
    noise shift theta^k omega as an O(1) view.
    """

    sigma: float
    seed: int | tuple[int, ...]
    offset: int = 0

    def __post_init__(self):
        if not (self.sigma > 0.0):
            raise ConfigError("noise half-width sigma must be positive")
        if self.offset < 0:
            raise ConfigError("noise offset must be non-negative")

    @property
    def key(self) -> tuple[int, int]:
        if isinstance(self.seed, tuple):
            return mix_seed(*self.seed)
        return mix_seed(self.seed)

    def block(self, start: int, count: int) -> np.ndarray:
        """Samples omega_{start}, ..., omega_{start+count-1} as an array."""
        if count < 0 or start < 0:
            raise ConfigError("block indices must be non-negative")
        raw = _raw_words(self.key, self.offset + start, count)
        u = (raw >> _U64(11)) * _INV53  # uniform [0, 1)
        return (2.0 * u - 1.0) * self.sigma

    def sample(self, i: int) -> float:
        return float(self.block(i, 1)[0])

    def shifted(self, k: int) -> "NoiseStream":
        return NoiseStream(self.sigma, self.seed, self.offset + k)

    def uniform01_block(self, start: int, count: int) -> np.ndarray:
        """Raw uniform [0,1) view of the same stream (for state sampling)."""
        raw = _raw_words(self.key, self.offset + start, count)
        return (raw >> _U64(11)) * _INV53
