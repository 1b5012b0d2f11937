from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Reproducibility key for a counter-based (Philox) generator.

    The pair ``(seed, stream_id)`` fully determines the draw sequence.
    Sub-streams are addressed by extra integers, e.g. ``generator(3)``.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) <= _MASK64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer, got {v!r}")

    def generator(self, *sub: int) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id), *sub))
        return np.random.Generator(np.random.Philox(seq))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def as_generator(rng) -> np.random.Generator:
    """Accept an ``RngStream`` (fresh generator) or a live ``Generator``."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")
