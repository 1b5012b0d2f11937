"""Low-level item policy: encoder, Gaussian actor, critic and PPO training."""

from lerl.lpl.checkpoint import load_checkpoint, save_checkpoint
from lerl.lpl.networks import (
    encode_histories,
    actor_head,
    critic,
    embed_history,
    encode,
    gaussian_log_prob,
    score_and_select,
)
from lerl.lpl.params import CRITIC_KEYS, PolicyConfig, PolicyParams, init_params
from lerl.lpl.policy import ActionSample, act, gaussian_params, sample_virtual_item
from lerl.lpl.ppo import (
    Adam,
    PPOBatch,
    Transition,
    apply_update,
    clipped_surrogate,
    critic_value,
    ppo_losses,
    ppo_update,
    prepare_batch,
    state_values,
    target_sync,
    td_targets,
)

__all__ = [
    "load_checkpoint",
    "save_checkpoint",
    "actor_head",
    "critic",
    "embed_history",
    "encode",
    "encode_histories",
    "gaussian_log_prob",
    "score_and_select",
    "CRITIC_KEYS",
    "PolicyConfig",
    "PolicyParams",
    "init_params",
    "ActionSample",
    "act",
    "gaussian_params",
    "sample_virtual_item",
    "Adam",
    "PPOBatch",
    "Transition",
    "apply_update",
    "clipped_surrogate",
    "critic_value",
    "ppo_losses",
    "ppo_update",
    "prepare_batch",
    "state_values",
    "target_sync",
    "td_targets",
]
