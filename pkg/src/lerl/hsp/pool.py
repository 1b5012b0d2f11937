from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from lerl.errors import DomainError
from lerl.numeric import as_generator, softmax

DEFAULT_CAPACITY = 200
DEFAULT_SAMPLES = 3


@dataclass(frozen=True)
class ReflectionEntry:
    text: str
    score: float
    source_user: int
    session_length: int
    seq: int = -1  # insertion order, assigned by the pool

    @classmethod
    def from_rewards(cls, text: str, rewards: Sequence[float], source_user: int) -> "ReflectionEntry":
        return cls(text, math.fsum(rewards), source_user, len(rewards))


@dataclass
class ReflectionPool:
    """Capacity-bounded reflection memory.

    Over capacity, the lowest-scoring entry is evicted (ties: oldest first).
    Insertions are serialized by a lock; reads see a consistent list.
    """

    capacity: int = DEFAULT_CAPACITY
    entries: list[ReflectionEntry] = field(default_factory=list)
    _counter: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if self.capacity < 1:
            raise DomainError("pool capacity must be >= 1")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def scores(self) -> np.ndarray:
        return np.array([e.score for e in self.entries], dtype=np.float64)

    def snapshot(self) -> "ReflectionPool":
        with self._lock:
            return ReflectionPool(self.capacity, list(self.entries), self._counter)


def insert_reflection(pool: ReflectionPool, entry: ReflectionEntry) -> ReflectionPool:
    if entry.session_length < 1:
        raise DomainError("reflection source session must have at least one step")
    with pool._lock:
        stamped = ReflectionEntry(entry.text, entry.score, entry.source_user,
                                  entry.session_length, pool._counter)
        pool._counter += 1
        pool.entries.append(stamped)
        if len(pool.entries) > pool.capacity:
            victim = min(range(len(pool.entries)),
                         key=lambda i: (pool.entries[i].score, pool.entries[i].seq))
            del pool.entries[victim]
    return pool


def sampling_probabilities(pool: ReflectionPool, alpha: float) -> np.ndarray:
    return softmax(pool.scores, alpha)


def draw_indices(pool: ReflectionPool, alpha: float, n: int, rng) -> np.ndarray:
    """``n`` independent draws (with replacement) from the score softmax."""
    if n < 0:
        raise DomainError("number of draws must be >= 0")
    if not pool.entries or n == 0:
        return np.zeros(0, dtype=np.int64)
    return as_generator(rng).choice(len(pool.entries), size=n, p=sampling_probabilities(pool, alpha))


def sample_reflections(pool: ReflectionPool, alpha: float, n_samples: int, rng) -> list[str]:
    """Draw ``n_samples`` entries with replacement, then de-duplicate in draw order."""
    out, seen = [], set()
    for i in draw_indices(pool, alpha, n_samples, rng):
        if i not in seen:
            seen.add(i)
            out.append(pool.entries[i].text)
    return out
