"""High-level category planner: reflection memory, prompts, planner and critic back-ends."""

from lerl.hsp.llm import ChatClient, TransportError
from lerl.hsp.planner import (
    HeuristicPlanner,
    LLMCritic,
    LLMPlanner,
    SessionStats,
    TemplateCritic,
    generate_reflection,
    heuristic_plan,
    heuristic_ranking,
    plan_categories,
)
from lerl.hsp.pool import (
    DEFAULT_CAPACITY,
    DEFAULT_SAMPLES,
    ReflectionEntry,
    ReflectionPool,
    draw_indices,
    insert_reflection,
    sample_reflections,
    sampling_probabilities,
)
from lerl.hsp.prompts import (
    ParseFailure,
    PlannerContext,
    parse_category_response,
    render_actor_prompt,
    render_critic_prompt,
)

__all__ = [
    "ChatClient",
    "TransportError",
    "HeuristicPlanner",
    "LLMCritic",
    "LLMPlanner",
    "SessionStats",
    "TemplateCritic",
    "generate_reflection",
    "heuristic_plan",
    "heuristic_ranking",
    "plan_categories",
    "DEFAULT_CAPACITY",
    "DEFAULT_SAMPLES",
    "ReflectionEntry",
    "ReflectionPool",
    "draw_indices",
    "insert_reflection",
    "sample_reflections",
    "sampling_probabilities",
    "ParseFailure",
    "PlannerContext",
    "parse_category_response",
    "render_actor_prompt",
    "render_critic_prompt",
]
