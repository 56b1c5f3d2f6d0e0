"""Counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, stream_id)``; the
Philox counter plays the role of the draw index.  Work split into chunks
uses one stream id per chunk, so results never depend on how many workers
process the chunks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "RngStream":
        # Children of different parents must not collide; mix the parent id
        # into the high bits.
        return RngStream(self.seed, ((self.stream_id + 1) << 32) ^ int(index))


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a Generator, or an int seed."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")
