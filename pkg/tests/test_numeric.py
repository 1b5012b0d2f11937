import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lerl.errors import DomainError, NumericalError
from lerl.numeric import (
    GradTape,
    RngStream,
    Tensor,
    ad,
    finite_diff_check,
    gaussian_log_density,
    gaussian_sample,
    softmax,
)

# mpmath at 30 digits: e/(e + e^2), -ln(2*pi), one-sigma point at sigma=2
SOFTMAX_12 = (0.268941421369995120748840758178, 0.731058578630004879251159241822)
NEG_LOG_2PI = -1.83787706640934548356065947281
ONE_SIGMA_AT_2 = -2.11208571376461805119756185786


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0, 0], 1.0), [0.5, 0.5])
    np.testing.assert_allclose(softmax([1, 2, 3], 0.0), [1 / 3] * 3)
    np.testing.assert_allclose(softmax([1, 2], 1.0), SOFTMAX_12, atol=1e-12)


def test_softmax_empty_raises():
    with pytest.raises(DomainError):
        softmax([], 1.0)


def test_softmax_overflow_safe():
    p = softmax([1000.0, 1001.0], 1.0)
    np.testing.assert_allclose(p, SOFTMAX_12, atol=1e-12)


finite = st.floats(min_value=-50, max_value=50, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.lists(finite, min_size=1, max_size=12), finite, st.floats(-3, 3))
def test_softmax_shift_invariant_and_normalized(v, shift, alpha):
    p = softmax(v, alpha)
    q = softmax(np.asarray(v) + shift, alpha)
    assert abs(p.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(p, q, atol=1e-9)


def test_gaussian_log_density_examples():
    assert gaussian_log_density([0.3, -1.0], [0.3, -1.0], [1.0, 1.0]) == pytest.approx(NEG_LOG_2PI, abs=1e-12)
    assert gaussian_log_density([2.0 + 2.0], [2.0], [2.0]) == pytest.approx(ONE_SIGMA_AT_2, abs=1e-12)


def test_gaussian_sample_deterministic_per_stream():
    a, la = gaussian_sample([0.0], [1.0], RngStream(7, 0))
    b, lb = gaussian_sample([0.0], [1.0], RngStream(7, 0))
    c, _ = gaussian_sample([0.0], [1.0], RngStream(7, 1))
    assert a[0] == b[0] and la == lb
    assert a[0] != c[0]


def test_gaussian_sample_rejects_bad_sigma():
    with pytest.raises(DomainError):
        gaussian_sample([0.0, 0.0], [1.0, 0.0], RngStream(1))
    with pytest.raises(DomainError):
        gaussian_sample([0.0], [1.0, 1.0], RngStream(1))


def test_gaussian_sample_moments():
    g = RngStream(11).generator()
    xs = np.array([gaussian_sample([0.0], [1.0], g)[0][0] for _ in range(100_000)])
    assert abs(xs.mean()) < 0.02
    assert abs(xs.var() - 1.0) < 0.05


def test_sample_log_density_consistent():
    mu, sigma = np.array([0.5, -1.0, 2.0]), np.array([0.1, 1.0, 1.5])
    x, lp = gaussian_sample(mu, sigma, RngStream(3))
    assert lp == pytest.approx(gaussian_log_density(x, mu, sigma), abs=1e-12)


def test_tensor_rejects_non_finite():
    with pytest.raises(NumericalError):
        Tensor([1.0, np.nan])
    with pytest.raises(NumericalError):
        Tensor([np.inf])
    t = Tensor([1.0, 2.0])
    assert t.shape == (2,) and list(t.values) == [1.0, 2.0]


def test_ops_cannot_store_nan():
    with pytest.raises(NumericalError):
        ad.log(Tensor([0.0]))
    with pytest.raises(NumericalError):
        ad.exp(Tensor([1e4]))


def test_gradcheck_quadratic():
    p = {"p": np.array([0.3, -1.2, 2.5])}
    rep = finite_diff_check(lambda t: 0.5 * ad.sum_(t["p"] * t["p"]), p, epsilon=1e-5)
    assert rep.passed and rep.worst < 1e-6
    with GradTape() as tape:
        x = Tensor(p["p"])
        loss = 0.5 * ad.sum_(x * x)
    np.testing.assert_allclose(tape.gradient(loss, [x])[0], p["p"])


def test_gradcheck_constant_loss():
    p = {"w": np.ones((2, 2))}
    with GradTape() as tape:
        leaves = {"w": Tensor(p["w"])}
        loss = ad.sum_(Tensor(np.ones(3)))
    g = tape.gradient(loss, leaves)
    assert np.all(np.abs(g["w"]) <= 1e-8)
    assert finite_diff_check(lambda t: ad.sum_(Tensor(np.ones(3))), p).passed


def test_gradcheck_rejects_bad_epsilon():
    with pytest.raises(DomainError):
        finite_diff_check(lambda t: ad.sum_(t["p"]), {"p": np.ones(2)}, epsilon=0.1)


def test_clamp_boundary_subgradient_is_one():
    with GradTape() as tape:
        x = Tensor([-1.0, 0.0, 0.5, 1.0, 2.0])
        y = ad.sum_(ad.clamp(x, 0.0, 1.0))
    np.testing.assert_array_equal(tape.gradient(y, [x])[0], [0, 1, 1, 1, 0])


# Each differentiable op, checked on random small tensors at tol=1e-4.
def _op_cases():
    return {
        "add": lambda t: ad.sum_(ad.tanh(t["a"] + t["b"])),
        "sub": lambda t: ad.sum_(ad.tanh(t["a"] - t["b"])),
        "mul": lambda t: ad.sum_(t["a"] * t["b"]),
        "matmul": lambda t: ad.sum_(ad.tanh(t["a"] @ t["b"].T)),
        "dot": lambda t: ad.sum_(ad.tanh(ad.dot(t["a"], t["b"]))),
        "tanh": lambda t: ad.sum_(ad.tanh(t["a"]) * t["b"]),
        "exp": lambda t: ad.sum_(ad.exp(t["a"]) * t["b"]),
        "log": lambda t: ad.sum_(ad.log(ad.exp(t["a"]) + 1.0) * t["b"]),
        "clamp": lambda t: ad.sum_(ad.clamp(t["a"], -0.55, 0.45) * t["b"]),
        "softmax": lambda t: ad.sum_(ad.softmax(t["a"], axis=-1, scale=0.7) * t["b"]),
        "sum": lambda t: ad.sum_(ad.sum_(t["a"], axis=0) * ad.sum_(t["b"], axis=0)),
        "mean": lambda t: ad.mean(t["a"] * t["b"]),
        "minimum": lambda t: ad.sum_(ad.minimum(t["a"], t["b"])),
        "getitem": lambda t: ad.sum_(t["a"][1:, :2] * t["b"][:2, 1:]),
        "reshape": lambda t: ad.sum_(ad.reshape(t["a"], (-1,)) * ad.reshape(t["b"], (-1,))),
    }


@pytest.mark.parametrize("name", sorted(_op_cases()))
@pytest.mark.parametrize("seed", range(3))
def test_every_op_passes_gradcheck(name, seed):
    rng = np.random.default_rng(seed)
    params = {"a": rng.normal(size=(3, 3)), "b": rng.normal(size=(3, 3))}
    rep = finite_diff_check(_op_cases()[name], params, epsilon=1e-6, tol=1e-4)
    assert rep.passed, rep.flagged


def test_batched_matmul_grad_reduces_batch():
    rng = np.random.default_rng(0)
    params = {"x": rng.normal(size=(2, 3, 4)), "w": rng.normal(size=(4, 2))}
    rep = finite_diff_check(lambda t: ad.sum_(ad.tanh(t["x"] @ t["w"])), params)
    assert rep.passed


def test_no_recording_without_tape():
    x = Tensor([1.0])
    y = ad.exp(x)
    with GradTape() as tape:
        z = ad.exp(x)
    assert tape.gradient(z, [x])[0][0] == pytest.approx(math.e)
    assert y.item() == pytest.approx(math.e)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (4,), elements=st.floats(-5, 5)))
def test_rng_stream_same_key_same_draws(_unused):
    s = RngStream(123, 9)
    assert np.array_equal(s.generator().random(5), s.generator().random(5))
    assert not np.array_equal(s.generator().random(5), s.child(10).generator().random(5))
