from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from lerl.catalog import Catalog
from lerl.errors import DomainError, NumericalError
from lerl.numeric import as_generator

CRITIC_KEYS = ("crit1", "crit1_b", "crit2", "crit2_b")


@dataclass(frozen=True)
class PolicyConfig:
    dim: int = 16
    hidden: int = 32
    sigma_min: float = 1e-3
    sigma_max: float = 2.0
    gamma: float = 0.9
    clip_eps: float = 0.2
    value_coef: float = 0.5
    lr: float = 3e-3
    epochs: int = 4
    target_sync: int = 10

    def __post_init__(self):
        if self.dim < 1 or self.hidden < 1:
            raise DomainError("dim and hidden must be >= 1")
        if not 0 < self.sigma_min < self.sigma_max:
            raise DomainError("need 0 < sigma_min < sigma_max")
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError("gamma must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise DomainError("clip_eps must be positive")
        if self.epochs < 1 or self.target_sync < 1:
            raise DomainError("epochs and target_sync must be >= 1")

    @property
    def log_sigma_bounds(self) -> tuple[float, float]:
        return math.log(self.sigma_min), math.log(self.sigma_max)


@dataclass
class PolicyParams:
    """Learnable arrays of the actor, online critic and target critic."""

    online: dict[str, np.ndarray]
    target: dict[str, np.ndarray]
    max_positions: int
    n_items: int = field(init=False)
    dim: int = field(init=False)

    def __post_init__(self):
        self.n_items, self.dim = self.online["item_emb"].shape
        for name in CRITIC_KEYS:
            if self.target[name].shape != self.online[name].shape:
                raise DomainError(f"target critic {name} shape mismatch")
        self.check_finite()

    def check_finite(self) -> None:
        for group in (self.online, self.target):
            for name, arr in group.items():
                if not np.all(np.isfinite(arr)):
                    raise NumericalError(f"parameter {name} is not finite")

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            {k: v.copy() for k, v in self.online.items()},
            {k: v.copy() for k, v in self.target.items()},
            self.max_positions,
        )

    def named_arrays(self) -> dict[str, np.ndarray]:
        out = {f"online/{k}": v for k, v in self.online.items()}
        out.update({f"target/{k}": v for k, v in self.target.items()})
        return out

    def checksum(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for name, arr in sorted(self.named_arrays().items()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


def _dense(gen: np.random.Generator, fan_in: int, fan_out: int, scale: float = 1.0) -> np.ndarray:
    return gen.normal(0.0, scale / math.sqrt(fan_in), size=(fan_in, fan_out))


def init_params(catalog: Catalog, cfg: PolicyConfig, max_session_length: int, rng) -> PolicyParams:
    """Fresh parameters; item embeddings start from the catalog's initial table."""
    if catalog.embedding_dim != cfg.dim:
        raise DomainError(
            f"catalog embeddings have dim {catalog.embedding_dim}, policy expects {cfg.dim}")
    gen = as_generator(rng)
    d, h = cfg.dim, cfg.hidden
    online = {
        "item_emb": catalog.item_embeddings.copy(),
        "in_w": _dense(gen, d, d),
        "in_r": gen.normal(0.0, 1.0, size=(1, d)),
        "in_b": np.zeros(d),
        "start": gen.normal(0.0, 0.1, size=(1, d)),
        "pos": gen.normal(0.0, 0.1, size=(max_session_length + 1, d)),
        "wq": _dense(gen, d, d),
        "wk": _dense(gen, d, d),
        "wv": _dense(gen, d, d),
        "wo": _dense(gen, d, d),
        "ff1": _dense(gen, d, h),
        "ff1_b": np.zeros(h),
        "ff2": _dense(gen, h, d),
        "ff2_b": np.zeros(d),
        "act1": _dense(gen, d, h),
        "act1_b": np.zeros(h),
        "mu_w": _dense(gen, h, d, 0.1),
        "mu_b": np.zeros(d),
        "sig_w": _dense(gen, h, d, 0.1),
        "sig_b": np.zeros(d),
        "crit1": _dense(gen, d, h),
        "crit1_b": np.zeros(h),
        "crit2": _dense(gen, h, 1, 0.1),
        "crit2_b": np.zeros(1),
    }
    target = {k: online[k].copy() for k in CRITIC_KEYS}
    return PolicyParams(online, target, max_session_length + 1)
