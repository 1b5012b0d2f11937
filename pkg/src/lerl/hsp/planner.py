from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from lerl.catalog import Catalog
from lerl.errors import ConfigError, DomainError, LerlError
from lerl.hsp.pool import ReflectionEntry, ReflectionPool, insert_reflection
from lerl.hsp.prompts import (
    CategoryHistory,
    ParseFailure,
    PlannerContext,
    parse_category_response,
    render_actor_prompt,
    render_critic_prompt,
)

log = logging.getLogger(__name__)

DEFAULT_ATTEMPTS = 3
SYSTEM_PROMPT = "You are a careful assistant that follows output formats exactly."


class Completer(Protocol):
    def complete(self, messages: Sequence[tuple[str, str]]) -> str: ...


def heuristic_ranking(history: CategoryHistory, n_categories: int) -> list[int]:
    """Least recently exposed first; ties by reward-weighted exposure, then id."""
    last = [-1] * n_categories
    weighted = [0.0] * n_categories
    for step, (cats, reward) in enumerate(history):
        for c in cats:
            last[c] = step
            weighted[c] += reward
    return sorted(range(n_categories), key=lambda c: (last[c], weighted[c], c))


def heuristic_plan(history: CategoryHistory, catalog: Catalog, m: int) -> frozenset[int]:
    if not 1 <= m <= catalog.n_categories:
        raise DomainError(f"m={m} must lie in [1, {catalog.n_categories}]")
    return frozenset(heuristic_ranking(history, catalog.n_categories)[:m])


@dataclass
class HeuristicPlanner:
    incidents: list[dict] = field(default_factory=list)

    def plan(self, ctx: PlannerContext, catalog: Catalog) -> frozenset[int]:
        return heuristic_plan(ctx.history, catalog, ctx.m)


@dataclass
class LLMPlanner:
    client: Completer
    attempts: int = DEFAULT_ATTEMPTS
    incidents: list[dict] = field(default_factory=list)

    def plan(self, ctx: PlannerContext, catalog: Catalog) -> frozenset[int]:
        prompt = render_actor_prompt(ctx)
        messages = [("system", SYSTEM_PROMPT), ("user", prompt)]
        for attempt in range(self.attempts):
            try:
                text = self.client.complete(messages)
            except ConfigError:
                raise
            except LerlError as exc:
                self._incident("transport", str(exc), attempt)
                continue
            parsed = parse_category_response(text, catalog, ctx.m)
            if isinstance(parsed, ParseFailure):
                self._incident("parse", parsed.reason, attempt)
                continue
            return _pad(parsed, ctx, catalog)
        self._incident("fallback", "using heuristic plan", self.attempts)
        return heuristic_plan(ctx.history, catalog, ctx.m)

    def _incident(self, kind: str, detail: str, attempt: int) -> None:
        self.incidents.append({"kind": kind, "detail": detail, "attempt": attempt})
        log.warning("planner %s incident (attempt %d): %s", kind, attempt, detail)


def _pad(chosen: frozenset[int], ctx: PlannerContext, catalog: Catalog) -> frozenset[int]:
    # short answers are topped up from the heuristic ranking so |c_t| == m
    if len(chosen) >= ctx.m:
        return chosen
    out = set(chosen)
    for c in heuristic_ranking(ctx.history, catalog.n_categories):
        if len(out) == ctx.m:
            break
        out.add(c)
    return frozenset(out)


def plan_categories(backend, ctx: PlannerContext, catalog: Catalog) -> frozenset[int]:
    if len(ctx.categories) != catalog.n_categories:
        raise DomainError("planner context and catalog disagree on the category set")
    return backend.plan(ctx, catalog)


@dataclass(frozen=True)
class SessionStats:
    interaction_length: int
    cumulative_reward: float

    def __post_init__(self):
        if self.interaction_length < 1:
            raise DomainError("interaction_length must be >= 1")


def _overexposed(trajectory: CategoryHistory) -> list[int]:
    repeated = set()
    for (prev, _), (cur, _) in zip(trajectory, trajectory[1:]):
        repeated |= set(prev) & set(cur)
    if repeated:
        return sorted(repeated)
    counts: dict[int, int] = {}
    for cats, _ in trajectory:
        for c in cats:
            counts[c] = counts.get(c, 0) + 1
    top = max(counts.values(), default=0)
    return sorted(c for c, n in counts.items() if n == top and n > 1)


def _best_rewarded(trajectory: CategoryHistory, limit: int = 2) -> list[int]:
    total: dict[int, float] = {}
    seen: dict[int, int] = {}
    for cats, reward in trajectory:
        for c in cats:
            total[c] = total.get(c, 0.0) + reward
            seen[c] = seen.get(c, 0) + 1
    ranked = sorted(total, key=lambda c: (-total[c] / seen[c], c))
    return ranked[:limit]


@dataclass
class TemplateCritic:
    """Deterministic stand-in for the language critic."""

    def reflect(self, catalog: Catalog, trajectory: CategoryHistory, stats: SessionStats) -> str:
        names = catalog.categories
        over = _overexposed(trajectory)
        best = _best_rewarded(trajectory)
        parts = [
            f"Session lasted {stats.interaction_length} rounds with cumulative reward "
            f"{stats.cumulative_reward:g}."
        ]
        if over:
            parts.append("Over-exposed categories: " + ", ".join(names[c] for c in over)
                         + "; avoid showing them in consecutive rounds.")
        else:
            parts.append("No category repeated across consecutive rounds; keep rotating.")
        if best:
            parts.append("Best-rewarded categories: " + ", ".join(names[c] for c in best)
                         + "; revisit them after a gap.")
        return " ".join(parts)


@dataclass
class LLMCritic:
    client: Completer

    def reflect(self, catalog: Catalog, trajectory: CategoryHistory, stats: SessionStats) -> str:
        prompt = render_critic_prompt(catalog, trajectory, stats.interaction_length, stats.cumulative_reward)
        text = self.client.complete([("system", SYSTEM_PROMPT), ("user", prompt)]).strip()
        if not text:
            raise DomainError("critic returned an empty reflection")
        return text


def generate_reflection(
    critic,
    catalog: Catalog,
    trajectory: CategoryHistory,
    rewards: Sequence[float],
    source_user: int,
    pool: ReflectionPool,
    incidents: list[dict] | None = None,
) -> ReflectionPool:
    """Ask ``critic`` for a reflection on a finished session and store it.

    The stored score is the session's cumulative reward. Critic failures are
    recorded in ``incidents`` and leave the pool unchanged.
    """
    if not trajectory or len(trajectory) != len(rewards):
        raise DomainError("trajectory must be non-empty and aligned with its rewards")
    entry = ReflectionEntry.from_rewards("", rewards, source_user)
    stats = SessionStats(entry.session_length, entry.score)
    try:
        text = critic.reflect(catalog, trajectory, stats)
    except ConfigError:
        raise
    except LerlError as exc:
        if incidents is not None:
            incidents.append({"kind": "critic", "detail": str(exc), "attempt": 0})
        log.warning("critic failed, reflection skipped: %s", exc)
        return pool
    return insert_reflection(pool, ReflectionEntry(text, entry.score, source_user, entry.session_length))
