"""Sequence encoder, Gaussian actor head, critic and masked top-k selection.

Network functions take a dict of tensors so the same code serves rollouts
(no tape) and training (inside a ``GradTape``). Histories of different
lengths share one left-padded batch: ``(B, T, d)`` for sequences and
``(B, d)`` after encoding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from lerl.errors import DomainError, InfeasibleMaskError
from lerl.numeric import LOG_2PI, Tensor, ad

ItemHistory = Sequence[tuple[Sequence[int], float]]

_NEG = -1e9


@dataclass(frozen=True)
class HistoryBatch:
    """Left-padded model inputs for a batch of histories of any lengths.

    Row ``b`` occupies the last ``n_b`` positions, where ``n_b`` is its history
    length (or 1 for the start token of an empty history).
    """

    counts: np.ndarray  # (B, T, |I|) item-averaging weights
    rewards: np.ndarray  # (B, T, 1)
    real: np.ndarray  # (B, T, 1) 1 on interaction tokens
    start: np.ndarray  # (B, T, 1) 1 on start tokens
    positions: np.ndarray  # (B, T, P) one-hot position of each token
    bias: np.ndarray  # (B, T, T) additive attention mask
    lengths: np.ndarray  # (B,) token count per row


def history_inputs(histories: Sequence[ItemHistory], n_items: int, n_positions: int) -> HistoryBatch:
    if not histories:
        raise DomainError("empty history batch")
    ntok = [max(len(h), 1) for h in histories]
    B, T = len(histories), max(ntok)
    if T > n_positions:
        raise DomainError(f"sequence length {T} exceeds {n_positions} positions")
    counts = np.zeros((B, T, n_items))
    rewards = np.zeros((B, T, 1))
    real = np.zeros((B, T, 1))
    start = np.zeros((B, T, 1))
    positions = np.zeros((B, T, n_positions))
    bias = np.tile(causal_bias(T), (B, 1, 1))
    for b, hist in enumerate(histories):
        off = T - ntok[b]
        bias[b, :, :off] = _NEG
        positions[b, np.arange(off, T), np.arange(ntok[b])] = 1.0
        if not hist:
            start[b, off, 0] = 1.0
            continue
        for t, (items, reward) in enumerate(hist):
            if len(items) == 0:
                raise DomainError("empty item list in history")
            for i in items:
                if not 0 <= i < n_items:
                    raise DomainError(f"unknown item id {i}")
                counts[b, off + t, i] += 1.0 / len(items)
            rewards[b, off + t, 0] = reward
            real[b, off + t, 0] = 1.0
    return HistoryBatch(counts, rewards, real, start, positions, bias, np.array(ntok))


def embed_history(histories: Sequence[ItemHistory], P: Mapping[str, Tensor]) -> tuple[Tensor, HistoryBatch]:
    """Per-step inputs ``v_1..v_t``: projected mean item embedding plus reward.

    An empty history becomes a single learned start token. Padding slots are zero.
    """
    n_items = P["item_emb"].shape[0]
    hb = history_inputs(histories, n_items, P["pos"].shape[0])
    mean_emb = Tensor(hb.counts) @ P["item_emb"]
    V = mean_emb @ P["in_w"] + Tensor(hb.rewards) * P["in_r"] + Tensor(hb.real) * P["in_b"] \
        + Tensor(hb.start) * P["start"]
    return V, hb


def causal_bias(T: int) -> np.ndarray:
    return np.triu(np.full((T, T), _NEG), k=1)


def encode(V: Tensor, P: Mapping[str, Tensor], hb: HistoryBatch | None = None, return_attention: bool = False):
    """Single-head causal self-attention block; returns the final position.

    Without ``hb`` every row is taken as unpadded with positions ``0..T-1``.
    """
    B, T, d = V.shape
    n_pos = P["pos"].shape[0]
    if T < 1:
        raise DomainError("cannot encode an empty sequence")
    if T > n_pos:
        raise DomainError(f"sequence length {T} exceeds {n_pos} positions")
    if hb is None:
        X = V + P["pos"][:T]
        bias = causal_bias(T)
    else:
        X = V + Tensor(hb.positions) @ P["pos"]
        bias = hb.bias
    Q, K, Vv = X @ P["wq"], X @ P["wk"], X @ P["wv"]
    scores = (Q @ K.T) * (1.0 / math.sqrt(d)) + bias
    A = ad.softmax(scores, axis=-1)
    H = X + (A @ Vv) @ P["wo"]
    O = H + ad.tanh(H @ P["ff1"] + P["ff1_b"]) @ P["ff2"] + P["ff2_b"]
    if return_attention:
        return O, A
    return O[:, T - 1, :]


def encode_histories(histories: Sequence[ItemHistory], P: Mapping[str, Tensor]) -> Tensor:
    V, hb = embed_history(histories, P)
    return encode(V, P, hb)


def actor_head(e: Tensor, P: Mapping[str, Tensor], log_sigma_bounds: tuple[float, float]):
    """Gaussian parameters ``(mu, log_sigma)``; sigma = exp(log_sigma) after clamping."""
    h = ad.tanh(e @ P["act1"] + P["act1_b"])
    mu = h @ P["mu_w"] + P["mu_b"]
    log_sigma = ad.clamp(h @ P["sig_w"] + P["sig_b"], *log_sigma_bounds)
    return mu, log_sigma


def gaussian_log_prob(x, mu: Tensor, log_sigma: Tensor) -> Tensor:
    """Row-wise diagonal Gaussian log-density, differentiable in mu and log_sigma."""
    z = (x - mu) * ad.exp(-log_sigma)
    per_dim = -0.5 * LOG_2PI - log_sigma - 0.5 * (z * z)
    return ad.sum_(per_dim, axis=-1)


def critic(e: Tensor, C: Mapping[str, Tensor]) -> Tensor:
    """State value per row, shape ``(B,)``."""
    h = ad.tanh(e @ C["crit1"] + C["crit1_b"])
    v = h @ C["crit2"] + C["crit2_b"]
    return ad.reshape(v, (v.shape[0],))


def score_and_select(p, item_embeddings: np.ndarray, mask: np.ndarray, k: int):
    """Top-``k`` eligible items by dot product, ties to the lower id.

    Returns the literal masked score vector (similarity times mask) and the
    selected ids. Masked-out items are never selected.
    """
    p = np.asarray(p, dtype=np.float64)
    mask = np.asarray(mask)
    if k < 1:
        raise DomainError("k must be >= 1")
    eligible = np.flatnonzero(mask > 0)
    if eligible.size < k:
        raise InfeasibleMaskError(f"only {eligible.size} eligible items for a list of {k}")
    sim = item_embeddings @ p
    order = np.lexsort((eligible, -sim[eligible]))
    return sim * mask, [int(i) for i in eligible[order[:k]]]
