"""Run configuration: TOML file with one section per subsystem."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from lerl.errors import ConfigError, LerlError
from lerl.lpl.params import PolicyConfig
from lerl.simenv import EnvConfig


@dataclass(frozen=True)
class EnvSection:
    max_session_length: int = 20
    list_length: int = 6
    click_sharpness: float = 3.0
    item_noise: float = 0.0
    n_users: int = 100


@dataclass(frozen=True)
class CatalogSection:
    source: str = "synthetic"
    path: str = ""
    n_items: int = 64
    n_categories: int = 8


@dataclass(frozen=True)
class PlannerSection:
    backend: str = "heuristic"
    critic: str = "template"
    m: int = 3
    pool_size: int = 200
    n_samples: int = 3
    alpha: float = 1.0
    attempts: int = 3
    endpoint: str = ""
    model: str = ""
    timeout: float = 30.0
    temperature: float = 0.2
    api_key_env: str = "LERL_API_KEY"


@dataclass(frozen=True)
class PolicySection:
    dim: int = 16
    hidden: int = 32
    sigma_min: float = 1e-3
    sigma_max: float = 2.0
    gamma: float = 0.9
    clip_eps: float = 0.2
    baseline_clip_eps: float = 0.8
    value_coef: float = 0.5
    lr: float = 3e-3
    epochs: int = 4
    target_sync: int = 10


@dataclass(frozen=True)
class TrainingSection:
    seed: int
    iterations: int = 50
    batch_episodes: int = 8
    workers: int = 1
    eval_sessions: int = 200
    eval_seed: int = -1  # -1: derive from seed


@dataclass(frozen=True)
class RunConfig:
    env: EnvSection
    catalog: CatalogSection
    planner: PlannerSection
    policy: PolicySection
    training: TrainingSection
    output_dir: str = "runs/default"
    fingerprint: str = field(default="", compare=False)

    def env_config(self) -> EnvConfig:
        e = self.env
        return EnvConfig(e.max_session_length, e.list_length, e.click_sharpness, e.item_noise, self.training.seed)

    def policy_config(self) -> PolicyConfig:
        p = self.policy
        return PolicyConfig(p.dim, p.hidden, p.sigma_min, p.sigma_max, p.gamma, p.clip_eps,
                            p.value_coef, p.lr, p.epochs, p.target_sync)

    @property
    def eval_seed(self) -> int:
        s = self.training.eval_seed
        return self.training.seed + 1_000_003 if s < 0 else s

    def to_dict(self) -> dict[str, Any]:
        out = {"output_dir": self.output_dir}
        for name in SECTIONS:
            out[name] = dataclasses.asdict(getattr(self, name))
        return out

    def replace(self, **sections) -> "RunConfig":
        """Return a copy with section fields overridden, e.g. ``training={"seed": 3}``."""
        data = self.to_dict()
        for name, values in sections.items():
            if name == "output_dir":
                data["output_dir"] = values
            else:
                data[name].update(values)
        return build_config(data)


SECTIONS = {
    "env": EnvSection,
    "catalog": CatalogSection,
    "planner": PlannerSection,
    "policy": PolicySection,
    "training": TrainingSection,
}


def _coerce(path: str, value, type_name: str):
    expected = _TYPES[type_name]
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, bool) != (expected is bool) or not isinstance(value, expected):
        raise ConfigError(f"{path}: expected {expected.__name__}, got {type(value).__name__}")
    return value


_TYPES = {"int": int, "float": float, "str": str, "bool": bool}


def build_config(data: dict[str, Any]) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a table")
    unknown = set(data) - set(SECTIONS) - {"output_dir"}
    if unknown:
        raise ConfigError(f"unknown key: {sorted(unknown)[0]}")
    built = {}
    for name, cls in SECTIONS.items():
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError(f"{name}: expected a table")
        known = {f.name: f for f in fields(cls)}
        for key in raw:
            if key not in known:
                raise ConfigError(f"unknown key: {name}.{key}")
        kwargs = {}
        for key, f in known.items():
            if key in raw:
                kwargs[key] = _coerce(f"{name}.{key}", raw[key], f.type)
            elif f.default is dataclasses.MISSING:
                raise ConfigError(f"missing required key: {name}.{key}")
        built[name] = cls(**kwargs)
    output_dir = data.get("output_dir", "runs/default")
    if not isinstance(output_dir, str):
        raise ConfigError("output_dir: expected str")
    cfg = RunConfig(output_dir=output_dir, **built)
    validate(cfg)
    return dataclasses.replace(cfg, fingerprint=fingerprint(cfg))


# execution-only settings that cannot change results
_NOT_FINGERPRINTED = {("training", "workers"), ("output_dir", None)}


def fingerprint(cfg: RunConfig) -> str:
    data = cfg.to_dict()
    for section, key in _NOT_FINGERPRINTED:
        if key is None:
            data.pop(section, None)
        else:
            data[section].pop(key, None)
    return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()[:16]


def validate(cfg: RunConfig) -> None:
    if cfg.catalog.source not in ("synthetic", "file"):
        raise ConfigError("catalog.source must be 'synthetic' or 'file'")
    if cfg.catalog.source == "file" and not cfg.catalog.path:
        raise ConfigError("missing required key: catalog.path")
    if cfg.planner.backend not in ("heuristic", "llm"):
        raise ConfigError("planner.backend must be 'heuristic' or 'llm'")
    if cfg.planner.critic not in ("template", "llm"):
        raise ConfigError("planner.critic must be 'template' or 'llm'")
    if "llm" in (cfg.planner.backend, cfg.planner.critic) and not (cfg.planner.endpoint and cfg.planner.model):
        raise ConfigError("llm back-ends need planner.endpoint and planner.model")
    if cfg.training.iterations < 1 or cfg.training.batch_episodes < 1 or cfg.training.workers < 1:
        raise ConfigError("training.iterations, batch_episodes and workers must be >= 1")
    if cfg.planner.pool_size < 1 or cfg.planner.n_samples < 0 or cfg.planner.attempts < 1:
        raise ConfigError("planner.pool_size/attempts must be >= 1 and n_samples >= 0")
    if cfg.planner.m < 1 or cfg.planner.m > cfg.catalog.n_categories and cfg.catalog.source == "synthetic":
        raise ConfigError("planner.m must lie in [1, number of categories]")
    if cfg.env.n_users < 1:
        raise ConfigError("env.n_users must be >= 1")
    try:
        cfg.env_config()
        cfg.policy_config()
    except LerlError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def parse_config_text(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    return build_config(data)


def dumps_config(cfg: RunConfig) -> str:
    header = f"# resolved configuration, fingerprint {cfg.fingerprint}\n"
    return header + tomli_w.dumps(cfg.to_dict())


def default_config(seed: int = 0, **sections) -> RunConfig:
    data: dict[str, Any] = {"training": {"seed": seed}}
    for name, values in sections.items():
        if name == "output_dir":
            data[name] = values
        else:
            data.setdefault(name, {}).update(values)
    return build_config(data)
