import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lerl.errors import DomainError, InfeasibleMaskError, NumericalError
from lerl.lpl import (
    CRITIC_KEYS,
    Adam,
    PolicyConfig,
    act,
    actor_head,
    apply_update,
    clipped_surrogate,
    critic_value,
    embed_history,
    encode,
    encode_histories,
    gaussian_params,
    init_params,
    load_checkpoint,
    ppo_losses,
    ppo_update,
    prepare_batch,
    sample_virtual_item,
    save_checkpoint,
    score_and_select,
    state_values,
    target_sync,
    td_targets,
)
from lerl.lpl.checkpoint import dumps_checkpoint, loads_checkpoint
from lerl.numeric import GradTape, RngStream, Tensor, ad, finite_diff_check, gaussian_log_density

from conftest import random_transitions, tiny_setup


def select_oracle(p, emb, mask, k):
    """Brute force: sort eligible ids by (-<p, i_j>, j)."""
    elig = [j for j in range(len(mask)) if mask[j]]
    elig.sort(key=lambda j: (-sum(a * b for a, b in zip(p, emb[j])), j))
    return elig[:k]


# encoder --------------------------------------------------------------------

def test_embed_history_shapes(tiny):
    cfg, cat, params, gen = tiny
    P = ad.tensors(params.online)
    V, _ = embed_history([()], P)
    np.testing.assert_array_equal(V.data[0, 0], params.online["start"][0])
    h = (((0, 1), 1.0), ((2, 3), 0.0), ((4, 5), 0.5))
    assert embed_history([h], P)[0].shape == (1, 3, cfg.dim)
    with pytest.raises(DomainError):
        embed_history([(((99,), 1.0),)], P)


def test_embed_history_reward_matters(tiny):
    _, _, params, _ = tiny
    P = ad.tensors(params.online)
    a = embed_history([(((0, 1), 1.0),)], P)[0].data
    b = embed_history([(((0, 1), 0.0),)], P)[0].data
    assert not np.allclose(a, b)


def test_encode_shapes_and_attention_rows(tiny):
    cfg, _, params, gen = tiny
    P = ad.tensors(params.online)
    for T in range(1, 7):
        V = Tensor(gen.normal(size=(2, T, cfg.dim)))
        assert encode(V, P).shape == (2, cfg.dim)
        _, A = encode(V, P, return_attention=True)
        np.testing.assert_allclose(A.data.sum(axis=-1), 1.0, atol=1e-10)
    with pytest.raises(DomainError):
        encode(Tensor(gen.normal(size=(1, 7, cfg.dim))), P)


def test_encode_is_causal(tiny):
    cfg, _, params, gen = tiny
    P = ad.tensors(params.online)
    V = gen.normal(size=(1, 5, cfg.dim))
    W = V.copy()
    W[0, 3:] += gen.normal(size=(2, cfg.dim))
    O1, _ = encode(Tensor(V), P, return_attention=True)
    O2, _ = encode(Tensor(W), P, return_attention=True)
    np.testing.assert_array_equal(O1.data[0, :3], O2.data[0, :3])
    assert not np.allclose(O1.data[0, 3:], O2.data[0, 3:])


def test_actor_head_sigma_clamp(tiny):
    cfg, _, params, _ = tiny
    P = ad.tensors(params.online)
    P["sig_w"] = Tensor(np.zeros_like(params.online["sig_w"]))
    for raw, expected in [(0.0, 1.0), (-100.0, 1e-3), (100.0, 2.0)]:
        P["sig_b"] = Tensor(np.full(cfg.dim, raw))
        mu, ls = actor_head(Tensor(np.ones((1, cfg.dim))), P, cfg.log_sigma_bounds)
        assert mu.shape == ls.shape == (1, cfg.dim)
        np.testing.assert_allclose(np.exp(ls.data), expected, rtol=1e-12)


def test_sample_virtual_item_modes():
    mu, sigma = np.array([0.5, -1.0]), np.array([0.3, 2.0])
    p, lp = sample_virtual_item(mu, sigma, RngStream(1), deterministic=True)
    np.testing.assert_array_equal(p, mu)
    assert lp == pytest.approx(gaussian_log_density(mu, mu, sigma), abs=1e-12)
    p, lp = sample_virtual_item(mu, sigma, RngStream(1))
    assert lp == pytest.approx(gaussian_log_density(p, mu, sigma), abs=1e-12)


# selection ------------------------------------------------------------------

def test_select_examples():
    emb = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
    p = np.array([1.0, 0.0])
    assert score_and_select(p, emb, np.array([1, 1, 1]), 1)[1] == [0]
    scores, a = score_and_select(p, emb, np.array([0, 1, 1]), 1)
    assert a == [1]
    np.testing.assert_array_equal(scores, [0.0, 0.0, -1.0])
    _, a = score_and_select(p, emb, np.ones(3), 3)
    assert a == [0, 1, 2]
    with pytest.raises(InfeasibleMaskError):
        score_and_select(p, emb, np.array([0, 0, 1]), 2)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 30).flatmap(lambda n: st.tuples(
    st.just(n),
    st.lists(st.booleans(), min_size=n, max_size=n),
    st.integers(0, 2**32),
)))
def test_select_matches_oracle(case):
    n, mask, seed = case
    if sum(mask) == 0:
        return
    gen = np.random.default_rng(seed)
    emb = gen.integers(-2, 3, size=(n, 3)).astype(float)  # integer grid forces ties
    p = gen.integers(-2, 3, size=3).astype(float)
    k = int(gen.integers(1, sum(mask) + 1))
    _, a = score_and_select(p, emb, np.array(mask, dtype=float), k)
    assert a == select_oracle(p, emb, mask, k)
    assert all(mask[i] for i in a)


def test_act_respects_mask(tiny):
    cfg, cat, params, gen = tiny
    mask = np.array([1, 0, 1, 0, 1, 0, 1, 0], dtype=float)
    s = act((), mask, 3, params, cfg, gen)
    assert len(set(s.rec_list)) == 3 and all(mask[i] for i in s.rec_list)
    d = act((), mask, 3, params, cfg, gen, deterministic=True)
    np.testing.assert_array_equal(d.virtual_item, d.mu)


# critic / targets -----------------------------------------------------------

def test_critic_value_and_sync(tiny):
    cfg, _, params, gen = tiny
    h = (((0, 1), 1.0),)
    assert math.isfinite(critic_value(h, params))
    target_sync(params, 10, 10)
    assert critic_value(h, params, "online") == pytest.approx(critic_value(h, params, "target"), abs=1e-12)
    before = {k: params.target[k].copy() for k in CRITIC_KEYS}
    params.online["crit2_b"] = params.online["crit2_b"] + 1.0
    target_sync(params, 11, 10)
    assert all(np.array_equal(before[k], params.target[k]) for k in CRITIC_KEYS)
    target_sync(params, 11, 1)
    assert np.array_equal(params.online["crit2_b"], params.target["crit2_b"])


def test_zero_weight_critic_is_bias(tiny):
    _, _, params, _ = tiny
    params.online["crit2"] = np.zeros_like(params.online["crit2"])
    params.online["crit2_b"] = np.array([0.37])
    assert critic_value((), params) == 0.37


def test_td_target_arithmetic(tiny):
    cfg, _, params, gen = tiny
    params.target["crit2"] = np.zeros_like(params.target["crit2"])
    params.target["crit2_b"] = np.array([2.0])
    trs = random_transitions(gen, params, cfg, 3, 8, 4)
    trs = [trs[0].__class__(t.state, t.categories, t.action, t.old_log_prob, 1.0, t.next_state, d)
           for t, d in zip(trs, [False, True, False])]
    np.testing.assert_allclose(td_targets(trs, 0.9, params), [2.8, 1.0, 2.8])
    np.testing.assert_allclose(td_targets(trs, 0.0, params), [1.0, 1.0, 1.0])
    with pytest.raises(DomainError):
        td_targets(trs, 1.5, params)


# losses ---------------------------------------------------------------------

def test_clip_worked_cases():
    per = clipped_surrogate(Tensor([1.0, 2.0, 0.5]), np.array([1.0, 1.0, -1.0]), 0.2)
    assert (-per.data).tolist() == [-1.0, -1.2, 0.8]


def test_unclipped_limit_and_ratio_one(tiny):
    cfg, _, params, gen = tiny
    trs = random_transitions(gen, params, cfg, 6, 8, 5)
    batch = prepare_batch(trs, params, cfg.gamma)
    P = ad.tensors(params.online)
    la, _, _ = ppo_losses(batch, P, 1e9, 0.5, cfg.log_sigma_bounds)
    ratios = []
    for h, a, old in zip(batch.histories, batch.actions, batch.old_log_prob):
        mu, sigma = gaussian_params(h, params, cfg)
        ratios.append(math.exp(gaussian_log_density(a, mu, sigma) - old))
    assert la.item() == pytest.approx(-np.mean(np.array(ratios) * batch.advantages), abs=1e-12)

    fresh = random_transitions(gen, params, cfg, 6, 8, 5, logp_noise=0.0)
    b2 = prepare_batch(fresh, params, cfg.gamma)
    la2, _, _ = ppo_losses(b2, P, 0.2, 0.5, cfg.log_sigma_bounds)
    assert la2.item() == pytest.approx(-b2.advantages.mean(), abs=1e-10)


def test_value_loss_definition(tiny):
    cfg, _, params, gen = tiny
    trs = random_transitions(gen, params, cfg, 5, 8, 5)
    batch = prepare_batch(trs, params, cfg.gamma)
    _, lv, total = ppo_losses(batch, ad.tensors(params.online), 0.2, 0.5, cfg.log_sigma_bounds)
    v = state_values([t.state for t in trs], params)
    assert lv.item() == pytest.approx(np.mean((v - batch.targets) ** 2), abs=1e-12)


def test_ppo_loss_gradcheck_small(tiny):
    cfg, _, params, gen = tiny
    batch = prepare_batch(random_transitions(gen, params, cfg, 4, 8, 5), params, cfg.gamma)
    rep = finite_diff_check(
        lambda P: ppo_losses(batch, P, 0.2, 0.5, cfg.log_sigma_bounds)[2], params.online, 1e-5, 1e-4)
    assert rep.passed, rep.flagged[:5]


# optimiser ------------------------------------------------------------------

def test_zero_gradient_update_is_noop(tiny):
    cfg, _, params, _ = tiny
    before = params.copy()
    apply_update(params, {k: np.zeros_like(v) for k, v in params.online.items()}, 0.01, Adam())
    assert params.checksum() == before.checksum()


def test_adam_scalar_quadratic_converges():
    from lerl.lpl.params import PolicyParams

    x = {"x": np.array([1.5])}
    opt = Adam()
    holder = type("H", (), {"online": x})()
    for step in range(1000):
        if 0.5 * x["x"][0] ** 2 < 1e-6:
            break
        apply_update(holder, {"x": x["x"].copy()}, 0.01, opt)
    assert 0.5 * x["x"][0] ** 2 < 1e-6 and step <= 1000


def test_update_never_touches_target(tiny):
    cfg, _, params, gen = tiny
    cfg = PolicyConfig(dim=4, hidden=4, target_sync=1000)
    trs = random_transitions(gen, params, cfg, 4, 8, 5)
    before = {k: v.copy() for k, v in params.target.items()}
    ppo_update(params, trs, cfg, Adam())
    assert all(np.array_equal(before[k], params.target[k]) for k in before)


def test_non_finite_gradient_rejected(tiny):
    _, _, params, _ = tiny
    with pytest.raises(NumericalError):
        apply_update(params, {"in_b": np.full(4, np.nan)}, 0.01, Adam())


# checkpoint -----------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, tiny):
    _, _, params, _ = tiny
    save_checkpoint(tmp_path / "c.bin", params, "abc", {"seed": 1})
    loaded, header = load_checkpoint(tmp_path / "c.bin")
    assert loaded.checksum() == params.checksum()
    assert header["fingerprint"] == "abc" and header["seeds"] == {"seed": 1}
    assert dumps_checkpoint(params, "abc", {"seed": 1}) == (tmp_path / "c.bin").read_bytes()


def test_checkpoint_rejects_garbage():
    from lerl.errors import FormatError

    with pytest.raises(FormatError):
        loads_checkpoint(b"hello")


def test_padded_batch_matches_single_rows(tiny):
    cfg, _, params, gen = tiny
    from conftest import random_history

    P = ad.tensors(params.online)
    hists = [random_history(gen, T, 8, 2) for T in (0, 3, 1, 5, 2)]
    batched = encode_histories(hists, P).data
    for b, h in enumerate(hists):
        np.testing.assert_allclose(batched[b], encode_histories([h], P).data[0], atol=1e-12)
