"""Episode rollout, PPO training, evaluation and the ablation matrix."""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from lerl.catalog import Catalog, category_mask, load_catalog, synthetic_catalog
from lerl.config import RunConfig
from lerl.errors import ConfigError, DomainError, InfeasibleMaskError, IoError, NumericalError
from lerl.hsp import (
    ChatClient,
    HeuristicPlanner,
    LLMCritic,
    LLMPlanner,
    PlannerContext,
    ReflectionPool,
    TemplateCritic,
    generate_reflection,
    plan_categories,
    sample_reflections,
)
from lerl.lpl import Adam, PolicyConfig, PolicyParams, Transition, act, init_params, ppo_update, save_checkpoint
from lerl.numeric import RngStream
from lerl.simenv import EnvConfig, UserProfile, generate_population, reset, session_metrics, step

log = logging.getLogger(__name__)

VARIANTS = ("full", "wo_hsp", "wo_hc", "ppo_only")
METRICS = ("T_int", "R_cum", "R_sin")

# dedicated stream ids, far above any episode index
CATALOG_STREAM = 1 << 40
POPULATION_STREAM = (1 << 40) + 1
INIT_STREAM = (1 << 40) + 2

# sub-streams inside one episode
_ENV, _POLICY, _PLANNER, _USER = range(4)


def check_variant(name: str) -> str:
    if name not in VARIANTS:
        raise ConfigError(f"unknown variant {name!r}; expected one of {', '.join(VARIANTS)}")
    return name


def uses_planner(variant: str) -> bool:
    return variant in ("full", "wo_hc")


@dataclass
class Trajectory:
    user_id: int
    variant: str
    transitions: list[Transition] = field(default_factory=list)
    category_sets: list[frozenset[int]] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    contexts: list[PlannerContext] = field(default_factory=list)
    widened_steps: list[int] = field(default_factory=list)
    terminated: bool = False

    @property
    def rewards(self) -> list[float]:
        return [t.reward for t in self.transitions]

    @property
    def category_history(self) -> list[tuple[frozenset[int], float]]:
        return list(zip(self.category_sets, self.rewards))

    def metrics(self) -> tuple[int, Fraction, Fraction]:
        if not self.terminated:
            raise DomainError("trajectory has not terminated")
        return session_metrics(self.rewards)

    def consecutive_overlaps(self) -> int:
        """Rounds whose listed categories intersect the previous round's."""
        cats = [set(s["category_ids"]) for s in self.steps]
        return sum(bool(a & b) for a, b in zip(cats, cats[1:]))


@dataclass
class Setup:
    """Everything an episode needs besides the user and its random streams."""

    catalog: Catalog
    env: EnvConfig
    policy: PolicyConfig
    planner: object
    critic: object
    m: int
    alpha: float
    n_samples: int


def run_episode(
    setup: Setup,
    user: UserProfile,
    params: PolicyParams,
    variant: str,
    rng: RngStream,
    pool: ReflectionPool | None = None,
    deterministic: bool = False,
    reflect: bool = True,
) -> Trajectory:
    """Roll out one session.

    Planner variants pick ``c_t`` each step (``wo_hc`` without reflections);
    ``wo_hsp``/``ppo_only`` use all categories. When a plan leaves fewer than
    ``k`` eligible items, the step falls back to all categories and is logged.
    With ``reflect``, the full variant adds a reflection to ``pool`` at the end.
    """
    check_variant(variant)
    cat, env = setup.catalog, setup.env
    pool = pool if pool is not None else ReflectionPool()
    env_gen, pol_gen, plan_gen = (rng.generator(s) for s in (_ENV, _POLICY, _PLANNER))
    all_cats = frozenset(range(cat.n_categories))
    traj = Trajectory(user.user_id, variant)
    state = reset(env, user)
    history: list[tuple[frozenset[int], float]] = []
    while not state.done:
        if uses_planner(variant):
            refl = sample_reflections(pool, setup.alpha, setup.n_samples, plan_gen) if variant == "full" else []
            ctx = PlannerContext(cat.categories, tuple(history), tuple(refl), setup.m)
            traj.contexts.append(ctx)
            c_t = plan_categories(setup.planner, ctx, cat)
        else:
            c_t = all_cats
        mask = category_mask(cat, c_t)
        try:
            action = act(state.item_history, mask, env.list_length, params, setup.policy, pol_gen, deterministic)
        except InfeasibleMaskError:
            log.info("step %d: plan %s too narrow, widening to all categories", state.t, sorted(c_t))
            traj.widened_steps.append(state.t)
            c_t = all_cats
            mask = category_mask(cat, c_t)
            action = act(state.item_history, mask, env.list_length, params, setup.policy, pol_gen, deterministic)
        res = step(state, action.rec_list, cat, env, env_gen)
        traj.transitions.append(Transition(
            state=state.item_history,
            categories=c_t,
            action=action.virtual_item,
            old_log_prob=action.log_prob,
            reward=res.reward,
            next_state=res.state.item_history,
            done=res.state.done,
        ))
        traj.category_sets.append(c_t)
        traj.steps.append(res.log)
        history.append((c_t, res.reward))
        state = res.state
    traj.terminated = True
    if reflect and variant == "full":
        add_reflection(setup, traj, pool)
    return traj


def add_reflection(setup: Setup, traj: Trajectory, pool: ReflectionPool) -> None:
    incidents = getattr(setup.planner, "incidents", None)
    generate_reflection(setup.critic, setup.catalog, traj.category_history, traj.rewards,
                        traj.user_id, pool, incidents)


# setup ----------------------------------------------------------------------

def build_catalog_for(cfg: RunConfig) -> Catalog:
    seed = cfg.training.seed
    emb_rng = RngStream(seed, CATALOG_STREAM).generator(1)
    if cfg.catalog.source == "file":
        cat = load_catalog(cfg.catalog.path, cfg.policy.dim, emb_rng)
    else:
        cat = synthetic_catalog(cfg.catalog.n_items, cfg.catalog.n_categories, cfg.policy.dim,
                                RngStream(seed, CATALOG_STREAM))
    if cat.n_items < cfg.env.list_length:
        raise ConfigError(f"catalog has {cat.n_items} items, fewer than list_length {cfg.env.list_length}")
    if cfg.planner.m > cat.n_categories:
        raise ConfigError(f"planner.m={cfg.planner.m} exceeds {cat.n_categories} categories")
    return cat


def build_backends(cfg: RunConfig):
    p = cfg.planner
    client = None
    if "llm" in (p.backend, p.critic):
        client = ChatClient(p.endpoint, p.model, p.timeout, p.temperature, p.api_key_env)
    planner = LLMPlanner(client, p.attempts) if p.backend == "llm" else HeuristicPlanner()
    critic = LLMCritic(client) if p.critic == "llm" else TemplateCritic()
    return planner, critic


def build_setup(cfg: RunConfig, catalog: Catalog | None = None, planner=None, critic=None) -> Setup:
    catalog = catalog or build_catalog_for(cfg)
    default_planner, default_critic = build_backends(cfg)
    return Setup(
        catalog=catalog,
        env=cfg.env_config(),
        policy=cfg.policy_config(),
        planner=planner or default_planner,
        critic=critic or default_critic,
        m=cfg.planner.m,
        alpha=cfg.planner.alpha,
        n_samples=cfg.planner.n_samples,
    )


def clip_eps_for(cfg: RunConfig, variant: str) -> float:
    return cfg.policy.baseline_clip_eps if variant == "ppo_only" else cfg.policy.clip_eps


# training -------------------------------------------------------------------

@dataclass
class TrainResult:
    params: PolicyParams
    curve: list[float]
    pool: ReflectionPool
    variant: str
    fingerprint: str
    seeds: dict
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)


def collect(
    setup: Setup,
    users: Sequence[UserProfile],
    params: PolicyParams,
    variant: str,
    seed: int,
    episode_ids: Iterable[int],
    pool: ReflectionPool,
    workers: int = 1,
    deterministic: bool = False,
    pick_user=None,
) -> list[Trajectory]:
    """Run episodes against a read-only pool snapshot, results in episode order."""
    snapshot = pool.snapshot()
    pick_user = pick_user or (lambda e: users[int(RngStream(seed, e).generator(_USER).integers(len(users)))])

    def one(e: int) -> Trajectory:
        return run_episode(setup, pick_user(e), params, variant, RngStream(seed, e), snapshot,
                           deterministic=deterministic, reflect=False)

    ids = list(episode_ids)
    if workers <= 1:
        trajs = [one(e) for e in ids]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            trajs = list(ex.map(one, ids))
    if variant == "full":
        for t in trajs:
            add_reflection(setup, t, pool)
    return trajs


def train(
    cfg: RunConfig,
    variant: str = "full",
    workers: int | None = None,
    checkpoint_path=None,
    setup: Setup | None = None,
    keep_trajectories: bool = False,
) -> TrainResult:
    """PPO training over ``iterations`` batches of ``batch_episodes`` sessions.

    Deterministic under the seed for the heuristic planner, whatever ``workers``.
    On a numerical failure the last good parameters are written to
    ``checkpoint_path`` (if given) before the error propagates.
    """
    check_variant(variant)
    setup = setup or build_setup(cfg)
    tr = cfg.training
    workers = tr.workers if workers is None else workers
    seed = tr.seed
    users = generate_population(cfg.env.n_users, setup.catalog, RngStream(seed, POPULATION_STREAM))
    params = init_params(setup.catalog, setup.policy, cfg.env.max_session_length, RngStream(seed, INIT_STREAM))
    opt = Adam()
    pool = ReflectionPool(cfg.planner.pool_size)
    seeds = {"seed": seed, "eval_seed": cfg.eval_seed}
    eps = clip_eps_for(cfg, variant)
    curve: list[float] = []
    kept: list[Trajectory] = []
    for it in range(tr.iterations):
        ids = range(it * tr.batch_episodes, (it + 1) * tr.batch_episodes)
        trajs = collect(setup, users, params, variant, seed, ids, pool, workers)
        curve.append(statistics.fmean(float(t.metrics()[1]) for t in trajs))
        if keep_trajectories:
            kept.extend(trajs)
        transitions = [x for t in trajs for x in t.transitions]
        last_good = params.copy()
        try:
            ppo_update(params, transitions, setup.policy, opt, clip_eps=eps)
        except NumericalError:
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, last_good, cfg.fingerprint, seeds,
                                {"variant": variant, "aborted_at_iteration": it})
            raise
        log.info("iter %d variant %s mean R_cum %.3f", it, variant, curve[-1])
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, params, cfg.fingerprint, seeds, {"variant": variant})
    return TrainResult(params, curve, pool, variant, cfg.fingerprint, seeds, kept)


# evaluation -----------------------------------------------------------------

@dataclass(frozen=True)
class SessionRow:
    user_id: int
    t_int: int
    r_cum: Fraction
    r_sin: Fraction

    def value(self, metric: str) -> float:
        return float({"T_int": self.t_int, "R_cum": self.r_cum, "R_sin": self.r_sin}[metric])


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    if not values:
        raise DomainError("no values")
    mean = statistics.fmean(values)
    return mean, (statistics.stdev(values) if len(values) > 1 else 0.0)


@dataclass
class MetricsReport:
    variant: str
    seed: int
    fingerprint: str
    rows: list[SessionRow]
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)

    def aggregate(self, metric: str) -> tuple[float, float]:
        return mean_std([r.value(metric) for r in self.rows])

    def summary(self) -> dict[str, tuple[float, float]]:
        return {m: self.aggregate(m) for m in METRICS}


def evaluate(
    checkpoint,
    cfg: RunConfig,
    n_sessions: int | None = None,
    variant: str = "full",
    seed: int | None = None,
    setup: Setup | None = None,
    pool: ReflectionPool | None = None,
) -> MetricsReport:
    """Deterministic-action evaluation on a fresh user population.

    ``checkpoint`` is a ``PolicyParams`` or a checkpoint path. Parameters are
    never modified.
    """
    from lerl.lpl import load_checkpoint

    check_variant(variant)
    params = checkpoint if isinstance(checkpoint, PolicyParams) else load_checkpoint(checkpoint)[0]
    setup = setup or build_setup(cfg)
    n_sessions = cfg.training.eval_sessions if n_sessions is None else n_sessions
    seed = cfg.eval_seed if seed is None else seed
    if n_sessions < 1:
        raise DomainError("n_sessions must be >= 1")
    if params.n_items != setup.catalog.n_items or params.dim != setup.policy.dim:
        raise ConfigError(
            f"checkpoint is for {params.n_items} items x dim {params.dim}, "
            f"config has {setup.catalog.n_items} x {setup.policy.dim}")
    if params.max_positions < cfg.env.max_session_length + 1:
        raise ConfigError("checkpoint supports shorter sessions than the config")
    users = generate_population(n_sessions, setup.catalog, RngStream(seed, POPULATION_STREAM))
    pool = pool if pool is not None else ReflectionPool(cfg.planner.pool_size)
    trajs = []
    for i, user in enumerate(users):
        trajs += collect(setup, users, params, variant, seed, [i], pool, deterministic=True,
                         pick_user=lambda e, u=user: u)
    rows = [SessionRow(t.user_id, *t.metrics()) for t in trajs]
    return MetricsReport(variant, seed, cfg.fingerprint, rows, trajs)


# reports --------------------------------------------------------------------

CSV_COLUMNS = ("variant", "metric", "mean", "std", "n_sessions", "seed")


def report_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        for m in METRICS:
            mean, std = r.aggregate(m)
            w.writerow([r.variant, m, repr(mean), repr(std), len(r.rows), r.seed])
    return buf.getvalue()


def report_text(reports: Sequence[MetricsReport]) -> str:
    header = ["variant"] + list(METRICS) + ["n"]
    body = []
    for r in reports:
        cells = [r.variant]
        for m in METRICS:
            mean, std = r.aggregate(m)
            cells.append(f"{mean:.3f} ± {std:.3f}")
        cells.append(str(len(r.rows)))
        body.append(cells)
    widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
    fmt = lambda row: "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip()
    lines = [fmt(header), fmt(["-" * w for w in widths])] + [fmt(b) for b in body]
    return "\n".join(lines) + "\n"


def trajectory_records(traj: Trajectory) -> list[dict]:
    return [{"variant": traj.variant, "user_id": traj.user_id, **s} for s in traj.steps]


def write_jsonl(path, records: Iterable[dict]) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_reports(out_dir, reports: Sequence[MetricsReport]) -> None:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(report_csv(reports), encoding="utf-8")
        (out / "report.txt").write_text(report_text(reports), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write reports to {out}: {exc}") from exc
    write_jsonl(out / "trajectories.jsonl",
                (rec for r in reports for t in r.trajectories for rec in trajectory_records(t)))


def case_study_export(traj: Trajectory, path) -> None:
    """Per-round item and category ids of one session, as JSON lines."""
    if not traj.terminated:
        raise DomainError("trajectory has not terminated")
    write_jsonl(path, (
        {"variant": traj.variant, "user_id": traj.user_id, "round": s["t"] + 1,
         "item_ids": s["item_ids"], "category_ids": s["category_ids"]}
        for s in traj.steps
    ))


def read_case_study(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ablation -------------------------------------------------------------------

@dataclass
class AblationResult:
    reports: dict[str, MetricsReport]
    training: dict[str, TrainResult]

    def table(self) -> str:
        return report_text([self.reports[v] for v in self.reports])


def ablate(cfg: RunConfig, variants: Sequence[str] = VARIANTS, n_sessions: int | None = None,
           workers: int | None = None) -> AblationResult:
    """Train and evaluate every variant under the same seed and evaluation users."""
    setup = build_setup(cfg)
    reports, trained = {}, {}
    for v in variants:
        res = train(cfg, v, workers=workers, setup=setup)
        trained[v] = res
        reports[v] = evaluate(res.params, cfg, n_sessions, v, setup=setup)
    return AblationResult(reports, trained)
