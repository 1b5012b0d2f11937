from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lerl.lpl.networks import ItemHistory, actor_head, encode_histories, score_and_select
from lerl.lpl.params import PolicyConfig, PolicyParams
from lerl.numeric import ad, gaussian_log_density, gaussian_sample


@dataclass(frozen=True)
class ActionSample:
    virtual_item: np.ndarray
    log_prob: float
    rec_list: tuple[int, ...]
    scores: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray


def sample_virtual_item(mu, sigma, rng, deterministic: bool = False) -> tuple[np.ndarray, float]:
    """Draw the hyper-action; in deterministic mode return the mean."""
    if deterministic:
        mu = np.asarray(mu, dtype=np.float64)
        return mu.copy(), gaussian_log_density(mu, mu, sigma)
    return gaussian_sample(mu, sigma, rng)


def gaussian_params(history: ItemHistory, params: PolicyParams, cfg: PolicyConfig) -> tuple[np.ndarray, np.ndarray]:
    P = ad.tensors(params.online)
    e = encode_histories([history], P)
    mu, log_sigma = actor_head(e, P, cfg.log_sigma_bounds)
    return mu.data[0].copy(), np.exp(log_sigma.data[0])


def act(
    history: ItemHistory,
    mask: np.ndarray,
    k: int,
    params: PolicyParams,
    cfg: PolicyConfig,
    rng,
    deterministic: bool = False,
) -> ActionSample:
    mu, sigma = gaussian_params(history, params, cfg)
    p, log_prob = sample_virtual_item(mu, sigma, rng, deterministic)
    scores, rec_list = score_and_select(p, params.online["item_emb"], mask, k)
    return ActionSample(p, log_prob, tuple(rec_list), scores, mu, sigma)
