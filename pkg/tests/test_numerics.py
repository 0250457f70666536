import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from seqtrans.numerics import (
    NO_TAPE,
    ContractError,
    Tape,
    Tensor,
    conv1d_same,
    grad_check,
    log_softmax,
    logsumexp,
    softmax,
)

finite = st.floats(-20, 20, allow_nan=False)
vec = arrays(np.float64, st.integers(1, 8), elements=finite)


def test_logsumexp_examples():
    assert logsumexp([math.log(0.5), math.log(0.5)]) == pytest.approx(0.0, abs=1e-15)
    assert logsumexp([-math.inf, 2.5]) == 2.5
    assert logsumexp([0.0, 0.0, 0.0]) == pytest.approx(math.log(3), abs=1e-15)
    assert logsumexp([-math.inf, -math.inf]) == -math.inf
    with pytest.raises(ContractError):
        logsumexp([])


def test_logsumexp_large_values_stable():
    assert logsumexp([1000.0, 1000.0]) == pytest.approx(1000.0 + math.log(2))


@given(vec, vec)
def test_logsumexp_regrouping(a, b):
    whole = logsumexp(np.concatenate([a, b]))
    parts = logsumexp([logsumexp(a), logsumexp(b)])
    assert abs(whole - parts) <= 1e-12 * max(1.0, abs(whole))


@given(vec)
def test_logsumexp_matches_direct_sum(v):
    assert logsumexp(v) == pytest.approx(math.log(np.sum(np.exp(v))), rel=1e-12, abs=1e-12)


def test_softmax_examples():
    np.testing.assert_allclose(softmax([2.0] * 4), [0.25] * 4)
    np.testing.assert_allclose(softmax([0.0, math.log(3)]), [0.25, 0.75], atol=1e-15)


@given(vec, finite)
def test_softmax_properties(e, k):
    p = softmax(e)
    assert np.all(p > 0)
    assert abs(p.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(softmax(e + k), p, atol=1e-12)
    gap = np.sort(e)[-2:] if e.size > 1 else np.array([0.0, 1.0])
    assume(gap[1] - gap[0] > 1e-6)
    assert np.argmax(softmax(e + k)) == np.argmax(e)


@given(vec)
def test_log_softmax_consistent(e):
    np.testing.assert_allclose(np.exp(log_softmax(e)), softmax(e), atol=1e-12)


def test_conv_examples():
    np.testing.assert_allclose(conv1d_same([1, 2, 3], [[1, 1, 1]])[:, 0], [3, 6, 5])
    x = np.array([0.3, -1.0, 2.0, 0.5])
    np.testing.assert_allclose(conv1d_same(x, [[0, 1, 0]])[:, 0], x)
    assert np.all(conv1d_same(np.zeros(5), np.ones((2, 3))) == 0)
    with pytest.raises(ContractError):
        conv1d_same([], [[1.0]])


def test_conv_even_width_left_biased():
    # width 2: taps at s-1 and s
    out = conv1d_same([1.0, 2.0, 3.0], [[10.0, 1.0]])[:, 0]
    np.testing.assert_allclose(out, [1.0, 12.0, 23.0])


def test_conv_wide_filter_is_padding():
    x = np.array([1.0, 2.0])
    out = conv1d_same(x, np.ones((1, 7)))
    np.testing.assert_allclose(out[:, 0], [3.0, 3.0])


@settings(max_examples=30)
@given(
    arrays(np.float64, st.integers(1, 7), elements=finite),
    st.integers(1, 9),
    st.integers(0, 2**31),
)
def test_conv_locality(x, width, seed):
    f = np.random.default_rng(seed).normal(size=(1, width))
    left = width // 2
    out = conv1d_same(x, f)[:, 0]
    padded = np.concatenate([np.zeros(left), x, np.zeros(width)])
    for s in range(len(x)):
        assert out[s] == pytest.approx(float(padded[s : s + width] @ f[0]), abs=1e-9)


def test_grad_check_square():
    res = grad_check(lambda t, x: t.sum(t.mul(x, x)), np.array([3.0]))
    assert res.max_rel_error <= 1e-8


def test_grad_check_logsumexp_vector():
    x = np.random.default_rng(0).normal(size=5)

    def f(t, x):
        # logsumexp(x) = x_0 - log_softmax(x)_0
        return t.sub(t.gather(x, 0), t.gather(t.log_softmax(x), 0))

    assert float(grad_check(f, x)) <= 1e-6


def test_grad_check_step_bounds():
    with pytest.raises(ContractError):
        grad_check(lambda t, x: t.sum(x), np.ones(2), step=1e-2)


def test_grad_check_reports_nonfinite():
    def f(t, x):
        return t.seq_loss(x, lambda v: (math.inf if v[0] > 0 else float(v[0]), np.array([1.0])))

    res = grad_check(f, np.array([0.0]))
    assert res.nonfinite == [("x", (0,))]


def _primitive_cases(rng):
    a = rng.normal(size=(3, 4))
    w = rng.normal(size=(4, 2))
    b = rng.normal(size=2)
    v = rng.normal(size=4)
    p = {"a": a, "w": w, "b": b, "v": v, "f": rng.normal(size=(2, 3))}
    r = rng.normal(size=(3, 2))
    rv = rng.normal(size=4)
    return p, {
        "affine": lambda t, P: t.sum(t.mul(t.affine(P["a"], P["w"], P["b"]), r)),
        "tanh": lambda t, P: t.sum(t.mul(t.tanh(P["v"]), rv)),
        "sigmoid": lambda t, P: t.sum(t.mul(t.sigmoid(P["v"]), rv)),
        "softmax": lambda t, P: t.sum(t.mul(t.softmax(P["v"]), rv)),
        "log_softmax": lambda t, P: t.sum(t.mul(t.log_softmax(P["a"]), rng_fixed(a.shape))),
        "add_mul": lambda t, P: t.sum(t.mul(t.add(P["v"], P["v"]), t.tanh(P["v"]))),
        "conv1d": lambda t, P: t.sum(t.mul(t.conv1d(P["v"], P["f"]), rng_fixed((4, 2)))),
        "gather": lambda t, P: t.sum(t.mul(t.gather(P["a"], 1), rv)),
        "gather_slice": lambda t, P: t.sum(t.tanh(t.gather(P["v"], slice(1, 3)))),
        "concat": lambda t, P: t.sum(t.tanh(t.concat([P["v"], P["b"]]))),
        "reshape": lambda t, P: t.sum(t.mul(t.reshape(P["a"], (12,)), rng_fixed((12,)))),
        "scale_sub": lambda t, P: t.sum(t.tanh(t.sub(t.scale(P["v"], 0.5), P["v"]))),
    }


def rng_fixed(shape):
    return np.random.default_rng(123).normal(size=shape)


@pytest.mark.parametrize("seed", range(5))
def test_every_primitive_matches_finite_differences(seed):
    point, cases = _primitive_cases(np.random.default_rng(seed))
    for name, f in cases.items():
        res = grad_check(f, point, step=1e-5)
        assert res.max_rel_error <= 1e-5, name


def test_tape_replay_bit_identical():
    rng = np.random.default_rng(1)
    t = Tape()
    x = t.leaf(rng.normal(size=(3, 4)))
    w = t.leaf(rng.normal(size=(4, 4)))
    out = t.sum(t.softmax(t.tanh(t.affine(x, w))))
    values = t.replay()
    assert values[-1].tobytes() == out.data.tobytes()


def test_backward_visits_reverse_order(monkeypatch):
    from seqtrans import numerics

    seen = []
    for op, (fwd, bwd) in list(numerics._OPS.items()):
        def spy(g, out, v, a, _bwd=bwd):
            seen.append(id(out))
            return _bwd(g, out, v, a)
        monkeypatch.setitem(numerics._OPS, op, (fwd, spy))
    t = Tape()
    x = t.leaf(np.array([0.5, -0.2]))
    y = t.tanh(x)
    z = t.sum(t.mul(y, t.sigmoid(x)))
    t.backward(z)
    assert seen == [id(n.out.data) for n in reversed(t.nodes)]


def test_no_tape_records_nothing():
    y = NO_TAPE.tanh(Tensor(np.array([0.1])))
    assert isinstance(y, Tensor)
    assert len(NO_TAPE.nodes) == 0
