"""Seedable, splittable random streams.

Every stream is identified by a master seed plus a path of integer keys, so
``RandomStream(7).substream(3).substream("contexts")`` always yields the same
Philox sequence no matter which other streams were created before it.
"""

from __future__ import annotations

import zlib
from typing import Union

import numpy as np

Label = Union[int, str]


def _label_key(label: Label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer stream labels must be non-negative")
        return int(label)
    # offset keeps string labels disjoint from small integer labels
    return (1 << 32) + zlib.crc32(label.encode("utf-8"))


class RandomStream:
    """A single-owner random number stream (Philox counter-based generator)."""

    def __init__(self, seed: int, key: tuple[int, ...] = ()) -> None:
        self.seed = int(seed)
        self.key = tuple(key)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def substream(self, label: Label) -> "RandomStream":
        """Independent child stream; does not consume from this stream."""
        return RandomStream(self.seed, self.key + (_label_key(label),))

    def standard_normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self.generator.random(size)

    def integers(self, high: int, size=None):
        return self.generator.integers(0, high, size=size)

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, key={self.key})"


def as_stream(rng: RandomStream | int) -> RandomStream:
    return rng if isinstance(rng, RandomStream) else RandomStream(rng)
