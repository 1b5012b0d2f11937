"""Self-contained oracle suite behind ``lerl check``.

Every check compares the implementation against a brute-force or closed-form
reference written independently here. Sizes are parameters so the same code
runs quick from the CLI and at full size from the acceptance tests.
"""

from __future__ import annotations

import json
import logging
import math
import string
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from lerl.catalog import build_catalog, category_mask, synthetic_catalog
from lerl.errors import InfeasibleMaskError
from lerl.harness import Setup, run_episode
from lerl.hsp import (
    LLMPlanner,
    PlannerContext,
    ReflectionEntry,
    ReflectionPool,
    draw_indices,
    insert_reflection,
    plan_categories,
)
from lerl.lpl import PolicyConfig, Transition, init_params, ppo_losses, prepare_batch, score_and_select
from lerl.lpl.networks import actor_head, encode_histories, gaussian_log_prob
from lerl.lpl.ppo import clipped_surrogate
from lerl.numeric import RngStream, Tensor, ad, finite_diff_check
from lerl.simenv import EnvConfig, UserProfile, generate_population, reset, session_metrics, step

# chi-square 0.99 quantile for 4 degrees of freedom
CHI2_99_DF4 = 13.276704135987622


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<12} {self.detail}  ({self.seconds:.2f}s)"


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    ok, detail = fn()
    return CheckResult(name, bool(ok), detail, time.perf_counter() - t0)


# gradient -------------------------------------------------------------------

def random_ppo_problem(seed: int, d: int = 4, n_items: int = 8, batch: int = 4, max_len: int = 5, k: int = 2):
    """Random parameters (scaled up so every path is active) and a random batch."""
    cfg = PolicyConfig(dim=d, hidden=4)
    cat = synthetic_catalog(n_items, 2, d, RngStream(seed, 1))
    params = init_params(cat, cfg, max_len, RngStream(seed, 2))
    gen = RngStream(seed, 3).generator()
    for store in (params.online, params.target):
        for name in store:
            store[name] = gen.normal(0.0, 0.5, size=store[name].shape)

    def hist(n):
        return tuple((tuple(int(i) for i in gen.choice(n_items, k, replace=False)),
                      float(gen.integers(0, k + 1)) / k) for _ in range(n))

    P = ad.tensors(params.online)
    trs = []
    for _ in range(batch):
        state, nxt = hist(int(gen.integers(0, max_len))), hist(1)
        mu, ls = actor_head(encode_histories([state], P), P, cfg.log_sigma_bounds)
        a = mu.data[0] + np.exp(ls.data[0]) * gen.standard_normal(d)
        lp = gaussian_log_prob(a[None, :], mu, ls).item() + 0.3 * gen.standard_normal()
        trs.append(Transition(state, frozenset({0}), a, lp, nxt[0][1], state + nxt, bool(gen.random() < 0.3)))
    return cfg, params, prepare_batch(trs, params, cfg.gamma)


def check_gradients(n_seeds: int = 20, tol: float = 1e-4) -> CheckResult:
    def run():
        worst = 0.0
        for s in range(n_seeds):
            cfg, params, batch = random_ppo_problem(s)
            rep = finite_diff_check(
                lambda P: ppo_losses(batch, P, cfg.clip_eps, cfg.value_coef, cfg.log_sigma_bounds)[2],
                params.online, 1e-5, tol)
            worst = max(worst, rep.worst)
            if not rep.passed:
                return False, f"seed {s}: {rep.flagged[:3]}"
        return True, f"{n_seeds} seeds, max rel error {worst:.2e}"
    return _timed("gradients", run)


# selection ------------------------------------------------------------------

def brute_force_select(p, emb, mask, k):
    elig = [j for j in range(len(mask)) if mask[j] > 0]
    if len(elig) < k:
        return None
    elig.sort(key=lambda j: (-float(np.dot(p, emb[j])), j))
    return elig[:k]


def check_selection(n: int = 10_000, max_items: int = 30, seed: int = 0) -> CheckResult:
    def run():
        gen = RngStream(seed, 7).generator()
        infeasible = 0
        for i in range(n):
            n_items = int(gen.integers(2, max_items + 1))
            n_cats = int(gen.integers(2, min(n_items, 6) + 1))
            cats = list(range(n_cats)) + [int(c) for c in gen.integers(0, n_cats, n_items - n_cats)]
            d = int(gen.integers(1, 5))
            cat = build_catalog(cats, [f"c{j}" for j in range(n_cats)], dim=d, rng=gen)
            # integer-valued embeddings exercise exact ties
            if gen.random() < 0.3:
                cat = cat.__class__(cat.items, cat.categories, cat.W,
                                    gen.integers(-2, 3, size=(n_items, d)).astype(float))
            p = gen.normal(size=d) if gen.random() < 0.7 else gen.integers(-2, 3, size=d).astype(float)
            c_t = {int(c) for c in np.flatnonzero(gen.random(n_cats) < 0.5)}
            mask = category_mask(cat, c_t)
            eligible = int(mask.sum())
            k = int(gen.integers(1, n_items + 1)) if gen.random() < 0.1 or eligible == 0 else int(
                gen.integers(1, eligible + 1))
            expect = brute_force_select(p, cat.item_embeddings, mask, k)
            try:
                _, got = score_and_select(p, cat.item_embeddings, mask, k)
            except InfeasibleMaskError:
                if expect is not None:
                    return False, f"instance {i}: spurious InfeasibleMaskError"
                infeasible += 1
                continue
            got = [int(j) for j in got]
            if expect is None or got != expect or any(mask[j] == 0 for j in got):
                return False, f"instance {i}: got {got}, expected {expect}"
        return True, f"{n} instances ({infeasible} infeasible)"
    return _timed("selection", run)


# reflection sampling --------------------------------------------------------

def chi_square(counts: np.ndarray, probs: np.ndarray) -> float:
    expected = probs * counts.sum()
    return float(((counts - expected) ** 2 / expected).sum())


def check_sampling(draws: int = 100_000, seed: int = 0) -> CheckResult:
    def run():
        scores = [0.0, 1.0, 2.0, 3.0, 4.0]
        pool = ReflectionPool()
        for s in scores:
            insert_reflection(pool, ReflectionEntry(f"s{s}", s, 0, 1))
        parts = []
        for alpha in (0.5, 0.0):
            w = [math.exp(alpha * s) for s in scores]
            probs = np.array(w) / sum(w)
            idx = draw_indices(pool, alpha, draws, RngStream(seed, 11).generator())
            stat = chi_square(np.bincount(idx, minlength=5).astype(float), probs)
            parts.append((alpha, stat))
        ok = all(stat < CHI2_99_DF4 for _, stat in parts)
        return ok, ", ".join(f"alpha={a}: chi2={s:.2f}" for a, s in parts) + f" (crit {CHI2_99_DF4:.2f})"
    return _timed("sampling", run)


# quit mechanism -------------------------------------------------------------

def simulate_scripted(max_len: int, fresh: bool) -> int:
    n_items = max_len + 1
    cat = build_catalog(list(range(n_items)) if fresh else [0] * n_items + [1],
                        [f"c{j}" for j in range(n_items if fresh else 2)], dim=2)
    cfg = EnvConfig(max_session_length=max_len, list_length=1)
    state = reset(cfg, UserProfile(0, tuple([0.0] * cat.n_categories)))
    gen = RngStream(0).generator()
    t = 0
    while not state.done:
        state = step(state, [t if fresh else 0], cat, cfg, gen).state
        t += 1
    return t


def check_quit(max_len_max: int = 20) -> CheckResult:
    def run():
        for L in range(1, max_len_max + 1):
            fresh, same = simulate_scripted(L, True), simulate_scripted(L, False)
            if fresh != L or same != math.ceil((L + 1) / 2):
                return False, f"max_len={L}: fresh {fresh}, same {same}"
        return True, f"max_len 1..{max_len_max} exact"
    return _timed("quit", run)


# metrics --------------------------------------------------------------------

def check_metrics(n: int = 1000, seed: int = 0) -> CheckResult:
    def run():
        cfg = EnvConfig()
        # one item per category: "fresh" lists avoid the previous round's categories
        cat = synthetic_catalog(24, 24, 2, RngStream(seed, 1))
        users = generate_population(50, cat, RngStream(seed, 2))
        gen = RngStream(seed, 3).generator()
        longest = 0
        for i in range(n):
            state = reset(cfg, users[i % len(users)])
            rewards = []
            p_fresh = gen.random()
            prev: set[int] = set()
            while not state.done:
                pool = [j for j in range(cat.n_items) if j not in prev] if gen.random() < p_fresh else range(cat.n_items)
                rec = [int(j) for j in gen.choice(list(pool), cfg.list_length, replace=False)]
                prev = set(rec)
                res = step(state, rec, cat, cfg, gen)
                rewards.append(res.reward)
                state = res.state
            t_int, r_cum, r_sin = session_metrics(rewards)
            exact = sum(Fraction(r) for r in rewards)
            if r_sin * t_int != r_cum or r_cum != exact or t_int > cfg.max_session_length:
                return False, f"trajectory {i}: T={t_int} R_cum={r_cum} R_sin={r_sin}"
            longest = max(longest, t_int)
        return True, f"{n} trajectories, longest {longest}"
    return _timed("metrics", run)


# clip algebra ---------------------------------------------------------------

def check_clip(seed: int = 0) -> CheckResult:
    def run():
        per = (-clipped_surrogate(Tensor([1.0, 2.0, 0.5]), np.array([1.0, 1.0, -1.0]), 0.2).data).tolist()
        if per != [-1.0, -1.2, 0.8]:
            return False, f"worked cases gave {per}"
        gen = np.random.default_rng(seed)
        rho, adv = np.exp(gen.normal(size=64)), gen.normal(size=64)
        la = -clipped_surrogate(Tensor(rho), adv, 1e9).data.mean()
        gap = abs(la - (-np.mean(rho * adv)))
        return gap <= 1e-12, f"worked cases exact, unclipped gap {gap:.1e}"
    return _timed("clip", run)


# planner fallback -----------------------------------------------------------

class _ScriptedClient:
    def __init__(self, replies):
        self.replies = iter(replies)

    def complete(self, messages):
        return next(self.replies)


def malformed_reply(gen: np.random.Generator, names: list[str]) -> str:
    kind = int(gen.integers(6))
    if kind == 0:
        alphabet = string.printable + "[]{}\"'"
        return "".join(gen.choice(list(alphabet), size=int(gen.integers(0, 40))))
    if kind == 1:
        return json.dumps([str(gen.choice(names + ["bogus", "", "NEWS"])) for _ in range(int(gen.integers(0, 7)))])
    if kind == 2:
        return json.dumps({"categories": names[:2]})
    if kind == 3:
        return json.dumps([int(x) for x in gen.integers(-3, 9, size=int(gen.integers(1, 5)))])
    if kind == 4:
        return "[" + ", ".join(f'"{n}"' for n in names[: int(gen.integers(1, 4))])
    return json.dumps(names * 2)


def check_fallback(n: int = 1000, seed: int = 0) -> CheckResult:
    def run():
        names = ["sports", "music", "news", "food", "games", "travel"]
        cat = build_catalog([j % 6 for j in range(24)], names, dim=2)
        gen = RngStream(seed, 13).generator()
        planner_log = logging.getLogger("lerl.hsp.planner")
        level = planner_log.level
        planner_log.setLevel(logging.ERROR)  # every reply is malformed on purpose
        try:
            return _fuzz(gen, names, cat)
        finally:
            planner_log.setLevel(level)

    def _fuzz(gen, names, cat):
        for i in range(n):
            m = int(gen.integers(1, 7))
            h_len = int(gen.integers(0, 4))
            history = tuple((frozenset(int(c) for c in gen.choice(6, m, replace=False)), float(gen.random()))
                            for _ in range(h_len))
            ctx = PlannerContext(tuple(names), history, (), m)
            planner = LLMPlanner(_ScriptedClient(malformed_reply(gen, names) for _ in range(3)))
            out = plan_categories(planner, ctx, cat)
            if len(out) != m or not out <= set(range(6)):
                return False, f"reply {i}: plan {sorted(out)} for m={m}"
        sessions = _garbage_sessions(gen, names, cat)
        return True, f"{n} malformed replies, all plans valid; {sessions} garbage-planner sessions completed"
    return _timed("fallback", run)


def _garbage_sessions(gen, names, cat, n_sessions: int = 5) -> int:
    class Garbage:
        def complete(self, messages):
            return malformed_reply(gen, names)

    env = EnvConfig(max_session_length=8, list_length=2)
    pcfg = PolicyConfig(dim=2, hidden=4)
    setup = Setup(cat, env, pcfg, LLMPlanner(Garbage()), None, 2, 1.0, 3)
    params = init_params(cat, pcfg, env.max_session_length, RngStream(0, 1))
    for u in generate_population(n_sessions, cat, RngStream(0, 2)):
        traj = run_episode(setup, u, params, "wo_hc", RngStream(0, u.user_id))
        assert traj.terminated and len(traj.steps) >= 1
    return n_sessions


# pool capacity --------------------------------------------------------------

def check_pool(n: int = 1000, capacity: int = 200, seed: int = 0) -> CheckResult:
    def run():
        gen = RngStream(seed, 17).generator()
        scores = [float(s) for s in gen.integers(0, 300, size=n) / 10]
        pool = ReflectionPool(capacity)
        for i, s in enumerate(scores):
            insert_reflection(pool, ReflectionEntry(f"e{i}", s, i, 1))
        # sort-and-truncate, ties resolved towards the later insertion
        keep = sorted(range(n), key=lambda i: (scores[i], i), reverse=True)[:capacity]
        got = sorted(e.source_user for e in pool.entries)
        ok = len(pool) == capacity and got == sorted(keep)
        return ok, f"{n} inserts -> {len(pool)} entries"
    return _timed("pool", run)


CHECKS: dict[str, Callable[[], CheckResult]] = {
    "gradients": lambda: check_gradients(5),
    "selection": lambda: check_selection(2000),
    "sampling": lambda: check_sampling(),
    "quit": lambda: check_quit(),
    "metrics": lambda: check_metrics(200),
    "clip": lambda: check_clip(),
    "fallback": lambda: check_fallback(300),
    "pool": lambda: check_pool(),
}


def run_checks(names=None) -> list[CheckResult]:
    return [CHECKS[n]() for n in (names or CHECKS)]
