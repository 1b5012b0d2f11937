"""Prompt templates for the category planner and the reflective critic."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Sequence

from lerl.catalog import Catalog
from lerl.errors import DomainError

CategoryHistory = Sequence[tuple[frozenset[int], float]]

ACTOR_ROLE = (
    "You are the category planner of an interactive recommender system. "
    "Each round you choose which content categories the next recommendation list may draw from. "
    "Users leave early when consecutive lists repeat categories, so keep exposure diverse "
    "while favouring categories that earned clicks."
)

CRITIC_ROLE = (
    "You are reviewing a finished recommendation session at the category level. "
    "Write a short, actionable reflection (at most 80 words) on how the category plan "
    "could keep a user engaged longer and collect more clicks."
)


@dataclass(frozen=True)
class PlannerContext:
    categories: tuple[str, ...]
    history: tuple[tuple[frozenset[int], float], ...]
    reflections: tuple[str, ...]
    m: int

    def __post_init__(self):
        if not 1 <= self.m <= len(self.categories):
            raise DomainError(f"m={self.m} must lie in [1, {len(self.categories)}]")


def format_output_instruction(m: int) -> str:
    return (
        f"Answer with a JSON array of exactly {m} category names taken from the list above, "
        'for example ["name1", ...]. Output nothing else.'
    )


def _names(categories: Sequence[str], ids) -> str:
    return ", ".join(categories[c] for c in sorted(ids)) or "(none)"


def render_actor_prompt(ctx: PlannerContext) -> str:
    lines = [ACTOR_ROLE, "", "Available categories (id: name):"]
    lines += [f"{i}: {name}" for i, name in enumerate(ctx.categories)]
    lines += ["", "Interaction history (step, categories, reward):"]
    if ctx.history:
        for step, (cats, reward) in enumerate(ctx.history, 1):
            lines.append(f"{step}, [{_names(ctx.categories, cats)}], {reward:.4g}")
    else:
        lines.append("(none)")
    lines += ["", "Lessons from past users:"]
    if ctx.reflections:
        lines += [f"- {text}" for text in ctx.reflections]
    else:
        lines.append("(none)")
    lines += ["", format_output_instruction(ctx.m)]
    return "\n".join(lines)


def render_critic_prompt(catalog: Catalog, trajectory: CategoryHistory, length: int, cumulative_reward: float) -> str:
    if not trajectory:
        raise DomainError("cannot reflect on an empty trajectory")
    lines = [CRITIC_ROLE, "", "Categories: " + ", ".join(catalog.categories), "",
             "Trajectory (step, categories, reward):"]
    for step, (cats, reward) in enumerate(trajectory, 1):
        lines.append(f"{step}, [{_names(catalog.categories, cats)}], {reward:.4g}")
    lines += [
        "",
        f"Interaction length: {length}",
        f"Cumulative reward: {cumulative_reward:g}",
        "",
        "Reflection:",
    ]
    return "\n".join(lines)


@dataclass(frozen=True)
class ParseFailure:
    reason: str


_decoder = json.JSONDecoder()


def _first_string_array(text: str):
    for match in re.finditer(r"\[", text):
        try:
            value, _ = _decoder.raw_decode(text, match.start())
        except ValueError:
            continue
        if isinstance(value, list) and value and all(isinstance(v, str) for v in value):
            return value
    return None


def parse_category_response(text, catalog: Catalog, m: int) -> frozenset[int] | ParseFailure:
    """Ids of the known category names in the first JSON string array, truncated to ``m``."""
    if not isinstance(text, str):
        return ParseFailure("response is not text")
    names = _first_string_array(text)
    if names is None:
        return ParseFailure("no JSON array of strings found")
    lookup = {name.lower(): i for i, name in enumerate(catalog.categories)}
    chosen: list[int] = []
    for name in names:
        cid = lookup.get(name.strip().lower())
        if cid is not None and cid not in chosen:
            chosen.append(cid)
    chosen = chosen[:m]
    if not chosen:
        return ParseFailure("no known category names in response")
    return frozenset(chosen)
