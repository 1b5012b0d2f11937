"""Session simulator with a diversity-aware quit mechanism.

Each step consumes one unit of the user's interaction budget, plus one more
when the new list shares a category with the previous list.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from lerl.catalog import Catalog, ItemRecord
from lerl.errors import DomainError, StateError
from lerl.numeric import as_generator


@dataclass(frozen=True)
class EnvConfig:
    max_session_length: int = 20
    list_length: int = 6
    click_sharpness: float = 3.0
    item_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.max_session_length < 1 or self.list_length < 1:
            raise DomainError("max_session_length and list_length must be >= 1")


@dataclass(frozen=True)
class UserProfile:
    user_id: int
    category_affinity: tuple[float, ...]
    item_noise_seed: int = 0


@dataclass(frozen=True)
class SessionState:
    user: UserProfile
    t: int
    remaining_budget: int
    previous_list_categories: frozenset[int] = frozenset()
    item_history: tuple[tuple[tuple[int, ...], float], ...] = ()
    category_history: tuple[tuple[frozenset[int], float], ...] = ()
    done: bool = False

    @property
    def user_id(self) -> int:
        return self.user.user_id


@dataclass(frozen=True)
class StepResult:
    clicks: tuple[int, ...]
    reward: float
    state: SessionState
    quit_penalty_applied: bool
    log: dict = field(default_factory=dict)


def generate_population(n_users: int, catalog: Catalog, rng) -> list[UserProfile]:
    if n_users < 1:
        raise DomainError("n_users must be >= 1")
    gen = as_generator(rng)
    aff = gen.uniform(-1.0, 1.0, size=(n_users, catalog.n_categories))
    seeds = gen.integers(0, 2**63, size=n_users)
    return [
        UserProfile(u, tuple(float(a) for a in aff[u]), int(seeds[u]))
        for u in range(n_users)
    ]


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


@lru_cache(maxsize=4096)
def _item_noise(seed: int, n_items: int) -> np.ndarray:
    return np.random.default_rng(seed).standard_normal(n_items)


def click_probability(
    user: UserProfile, item: ItemRecord, sharpness: float, item_noise: float = 0.0, n_items: int = 0
) -> float:
    """``logistic(sharpness * affinity[category])``; optional per-item perturbation."""
    x = user.category_affinity[item.category_id]
    if item_noise:
        x += item_noise * float(_item_noise(user.item_noise_seed, n_items)[item.item_id])
    if math.isinf(sharpness):
        return 1.0 if x > 0 else (0.0 if x < 0 else 0.5)
    return _logistic(sharpness * x)


def reset(config: EnvConfig, user: UserProfile) -> SessionState:
    return SessionState(user=user, t=0, remaining_budget=config.max_session_length)


def step(
    state: SessionState,
    rec_list: Sequence[int],
    catalog: Catalog,
    config: EnvConfig,
    rng,
) -> StepResult:
    if state.done:
        raise StateError("session already terminated")
    rec_list = tuple(int(i) for i in rec_list)
    k = config.list_length
    if len(rec_list) != k:
        raise DomainError(f"list has {len(rec_list)} items, expected {k}")
    if len(set(rec_list)) != k:
        raise DomainError("recommendation list contains duplicate items")
    if any(not 0 <= i < catalog.n_items for i in rec_list):
        raise DomainError("unknown item id in recommendation list")
    if len(state.user.category_affinity) != catalog.n_categories:
        raise DomainError("user affinity length does not match the catalog")

    gen = as_generator(rng)
    probs = [
        click_probability(state.user, catalog.items[i], config.click_sharpness,
                          config.item_noise, catalog.n_items)
        for i in rec_list
    ]
    u = gen.random(k)
    clicks = tuple(int(u[j] < probs[j]) for j in range(k))
    reward = sum(clicks) / k

    cats = catalog.categories_of(rec_list)
    penalty = state.t >= 1 and bool(cats & state.previous_list_categories)
    budget = state.remaining_budget - 1 - int(penalty)
    t = state.t + 1
    done = budget <= 0 or t >= config.max_session_length
    nxt = replace(
        state,
        t=t,
        remaining_budget=budget,
        previous_list_categories=cats,
        item_history=state.item_history + ((rec_list, reward),),
        category_history=state.category_history + ((cats, reward),),
        done=done,
    )
    log = {
        "t": state.t,
        "item_ids": list(rec_list),
        "category_ids": [int(catalog.item_category[i]) for i in rec_list],
        "clicks": list(clicks),
        "reward": reward,
        "penalty_applied": penalty,
        "remaining_budget": budget,
    }
    return StepResult(clicks=clicks, reward=reward, state=nxt, quit_penalty_applied=penalty, log=log)


def step_log_line(log: dict) -> str:
    return json.dumps(log, sort_keys=False, separators=(",", ":"))


def session_metrics(rewards: Sequence[float]) -> tuple[int, Fraction, Fraction]:
    """``(T_int, R_cum, R_sin)`` from a terminated session's per-step rewards.

    Sums are exact rationals of the float rewards so that
    ``R_sin * T_int == R_cum`` holds without rounding; call ``float()`` for display.
    """
    rewards = list(rewards)
    if not rewards:
        raise DomainError("empty trajectory")
    t_int = len(rewards)
    r_cum = sum((Fraction(r) for r in rewards), Fraction(0))
    return t_int, r_cum, r_cum / t_int
