"""Clipped-surrogate PPO updates for the Gaussian hyper-action policy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from lerl.errors import DomainError, NumericalError
from lerl.lpl.networks import ItemHistory, actor_head, critic, encode_histories, gaussian_log_prob
from lerl.lpl.params import CRITIC_KEYS, PolicyConfig, PolicyParams
from lerl.numeric import GradTape, Tensor, ad


@dataclass(frozen=True)
class Transition:
    state: tuple
    categories: frozenset[int]
    action: np.ndarray
    old_log_prob: float
    reward: float
    next_state: tuple
    done: bool

    def __post_init__(self):
        if not np.isfinite(self.old_log_prob):
            raise NumericalError("old log-probability must be finite")


@dataclass
class PPOBatch:
    """Transitions with TD targets and advantages frozen at collection time."""

    histories: list[ItemHistory]
    actions: np.ndarray
    old_log_prob: np.ndarray
    advantages: np.ndarray
    targets: np.ndarray

    @property
    def size(self) -> int:
        return len(self.histories)


def state_values(histories: Sequence[ItemHistory], params: PolicyParams, which: str = "online") -> np.ndarray:
    """Critic values for a list of histories, without recording a graph."""
    if which not in ("online", "target"):
        raise DomainError("which must be 'online' or 'target'")
    P = ad.tensors(params.online)
    C = P if which == "online" else ad.tensors(params.target)
    return critic(encode_histories(histories, P), C).data.copy()


def critic_value(history: ItemHistory, params: PolicyParams, which: str = "online") -> float:
    return float(state_values([history], params, which)[0])


def td_targets(transitions: Sequence[Transition], gamma: float, params: PolicyParams) -> np.ndarray:
    """``r + gamma * V_target(s') * (1 - done)``; no gradient flows through the target."""
    if not 0.0 <= gamma <= 1.0:
        raise DomainError("gamma must lie in [0, 1]")
    rewards = np.array([t.reward for t in transitions], dtype=np.float64)
    live = [i for i, t in enumerate(transitions) if not t.done]
    boot = np.zeros(len(transitions))
    if live and gamma > 0:
        boot[live] = state_values([transitions[i].next_state for i in live], params, "target")
    return rewards + gamma * boot


def prepare_batch(transitions: Sequence[Transition], params: PolicyParams, gamma: float) -> PPOBatch:
    """Freeze TD targets and one-step advantages under the current critics.

    Advantages are constants for every epoch run on this batch.
    """
    if not transitions:
        raise DomainError("empty batch")
    targets = td_targets(transitions, gamma, params)
    values = state_values([t.state for t in transitions], params, "online")
    return PPOBatch(
        histories=[t.state for t in transitions],
        actions=np.stack([t.action for t in transitions]),
        old_log_prob=np.array([t.old_log_prob for t in transitions]),
        advantages=targets - values,
        targets=targets,
    )


def clipped_surrogate(ratio, advantage, eps: float) -> Tensor:
    """Per-transition ``min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)``."""
    if eps <= 0:
        raise DomainError("clip epsilon must be positive")
    return ad.minimum(ratio * advantage, ad.clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage)


def ppo_losses(
    batch: PPOBatch,
    P: Mapping[str, Tensor],
    eps: float,
    value_coef: float,
    log_sigma_bounds: tuple[float, float],
) -> tuple[Tensor, Tensor, Tensor]:
    """``(L_actor, L_value, L_actor + value_coef * L_value)`` as tensors."""
    e = encode_histories(batch.histories, P)
    mu, log_sigma = actor_head(e, P, log_sigma_bounds)
    log_prob = gaussian_log_prob(batch.actions, mu, log_sigma)
    try:
        ratio = ad.exp(log_prob - batch.old_log_prob)
    except NumericalError as exc:
        raise NumericalError("probability ratio is not finite") from exc
    actor_loss = -ad.mean(clipped_surrogate(ratio, batch.advantages, eps))
    err = critic(e, P) - batch.targets
    value_loss = ad.mean(err * err)
    return actor_loss, value_loss, actor_loss + value_coef * value_loss


@dataclass
class Adam:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def apply_update(params: PolicyParams, grads: Mapping[str, np.ndarray], lr: float, opt: Adam) -> PolicyParams:
    """Adaptive-moment step on the online parameters; the target critic is untouched."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name}")
    opt.step_count += 1
    t = opt.step_count
    for name, g in grads.items():
        m = opt.m.get(name)
        if m is None:
            m = opt.m[name] = np.zeros_like(g)
            opt.v[name] = np.zeros_like(g)
        v = opt.v[name]
        m *= opt.beta1
        m += (1 - opt.beta1) * g
        v *= opt.beta2
        v += (1 - opt.beta2) * g * g
        m_hat = m / (1 - opt.beta1**t)
        v_hat = v / (1 - opt.beta2**t)
        params.online[name] = params.online[name] - lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return params


def target_sync(params: PolicyParams, update_count: int, interval: int) -> PolicyParams:
    """Hard-copy the online critic into the target every ``interval`` updates."""
    if interval < 1:
        raise DomainError("sync interval must be >= 1")
    if update_count % interval == 0:
        for k in CRITIC_KEYS:
            params.target[k] = params.online[k].copy()
    return params


@dataclass
class UpdateStats:
    actor_loss: float
    value_loss: float
    total_loss: float


def ppo_update(
    params: PolicyParams,
    transitions: Sequence[Transition],
    cfg: PolicyConfig,
    opt: Adam,
    clip_eps: float | None = None,
) -> list[UpdateStats]:
    """Run ``cfg.epochs`` full-batch epochs on one collected batch."""
    eps = cfg.clip_eps if clip_eps is None else clip_eps
    batch = prepare_batch(transitions, params, cfg.gamma)
    history = []
    for _ in range(cfg.epochs):
        leaves = ad.tensors(params.online)
        with GradTape() as tape:
            la, lv, total = ppo_losses(batch, leaves, eps, cfg.value_coef, cfg.log_sigma_bounds)
        grads = tape.gradient(total, leaves)
        apply_update(params, grads, cfg.lr, opt)
        target_sync(params, opt.step_count, cfg.target_sync)
        history.append(UpdateStats(la.item(), lv.item(), total.item()))
    params.check_finite()
    return history
