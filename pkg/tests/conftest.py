import numpy as np
import pytest

from lerl.catalog import synthetic_catalog
from lerl.lpl import PolicyConfig, Transition, init_params
from lerl.lpl.networks import actor_head, encode_histories, gaussian_log_prob
from lerl.numeric import RngStream, ad


def random_history(gen, length, n_items, k):
    return tuple(
        (tuple(int(i) for i in gen.choice(n_items, size=k, replace=False)), float(gen.integers(0, k + 1)) / k)
        for _ in range(length)
    )


def tiny_setup(seed, d=4, n_items=8, n_cats=2, hidden=4, max_len=5, scale=0.5):
    cfg = PolicyConfig(dim=d, hidden=hidden)
    cat = synthetic_catalog(n_items, n_cats, d, RngStream(seed, 1))
    params = init_params(cat, cfg, max_len, RngStream(seed, 2))
    gen = RngStream(seed, 3).generator()
    for name in params.online:
        params.online[name] = gen.normal(0.0, scale, size=params.online[name].shape)
    for name in params.target:
        params.target[name] = gen.normal(0.0, scale, size=params.target[name].shape)
    return cfg, cat, params, gen


def random_transitions(gen, params, cfg, n, n_items, max_len, k=2, logp_noise=0.3):
    out = []
    P = ad.tensors(params.online)
    for _ in range(n):
        T = int(gen.integers(0, max_len))
        state = random_history(gen, T, n_items, k)
        step = random_history(gen, 1, n_items, k)
        e = encode_histories([state], P)
        mu, ls = actor_head(e, P, cfg.log_sigma_bounds)
        action = mu.data[0] + np.exp(ls.data[0]) * gen.standard_normal(cfg.dim)
        lp = gaussian_log_prob(action[None, :], mu, ls).item()
        out.append(Transition(state, frozenset({0}), action, lp + logp_noise * gen.standard_normal(),
                              step[0][1], state + step, bool(gen.random() < 0.3)))
    return out


@pytest.fixture
def tiny():
    return tiny_setup(0)


# acceptance summary ---------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        ACCEPTANCE[crit] = f"criterion {crit:>2}: {'PASS' if report.passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[crit])
