import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import label_sequences, lse, rnnt_brute_force, rnnt_paths
from seqtrans import transducer as tr
from seqtrans.lm import LabelLM, train_ngram
from seqtrans.numerics import NO_TAPE, ContractError, Tape, Tensor, grad_check, log_softmax

BLANK = 2


def model(seed, D=3, V=3, attention=False):
    cfg = tr.TransducerConfig(enc_dim=D, vocab=V, pred_dim=4, emb_dim=3, joint_dim=4,
                              attention=attention, att_dim=4, n_filters=2, filter_width=3)
    return tr.init_params(cfg, np.random.default_rng(seed))


def rand_lattice(rng, T, U, V=3):
    return log_softmax(rng.normal(size=(T, U + 1, V)), axis=-1)


def model_lattice(P, h, target):
    d = tr.Predictor(NO_TAPE, P, h, BLANK).outputs(target)
    return tr.joint_lattice(NO_TAPE, P, h, d).data


def seq_logprob(P, h, labels):
    return -tr.rnnt_loss(model_lattice(P, h, labels), list(labels), BLANK)[0]


def test_joint_zero_weights_uniform():
    Z = {k: np.zeros_like(v) for k, v in model(0).items()}
    out = tr.joint_step(NO_TAPE, Z, np.ones(3), np.ones(4)).data
    np.testing.assert_allclose(np.exp(out), np.full(3, 1 / 3), atol=1e-15)


def test_joint_symmetric_fusion():
    P = model(1, D=4)
    P["joint.enc"] = P["joint.dec"].copy()
    P["joint.b"] = np.zeros(4)
    a, b = np.array([0.1, 0.5, -0.3, 0.2]), np.array([-1.0, 0.4, 0.0, 0.9])
    np.testing.assert_array_equal(
        tr.joint_step(NO_TAPE, P, a, b).data, tr.joint_step(NO_TAPE, P, b, a).data)


def test_joint_hand_case():
    P = {"joint.enc": np.array([[1.0, -1.0]]), "joint.dec": np.array([[0.5, 2.0]]),
         "joint.b": np.array([0.1, 0.0]), "joint.out_W": np.array([[1.0, 0.0], [0.0, 1.0]]),
         "joint.out_b": np.array([0.0, 0.3])}
    z = [math.tanh(0.7 * 1.0 + 0.5 * -0.2 + 0.1), math.tanh(-0.7 + 2.0 * -0.2)]
    logits = [z[0], z[1] + 0.3]
    want = [x - math.log(math.exp(logits[0]) + math.exp(logits[1])) for x in logits]
    got = tr.joint_step(NO_TAPE, P, np.array([0.7]), np.array([-0.2])).data
    np.testing.assert_allclose(got, want, atol=1e-15)
    with pytest.raises(ContractError):
        tr.joint_step(NO_TAPE, P, np.ones(2), np.ones(1))


def test_lattice_nodes_are_distributions():
    P = model(2)
    h = np.random.default_rng(2).normal(size=(4, 3))
    lat = model_lattice(P, h, [0, 1])
    assert lat.shape == (4, 3, 3)
    np.testing.assert_allclose(np.exp(lat).sum(-1), 1.0, atol=1e-9)


def test_loss_examples():
    lat = np.log(np.full((3, 1, 3), 1 / 3))
    lat[:, 0, BLANK] = np.log([0.5, 0.2, 0.9])
    assert tr.rnnt_loss(lat, [], BLANK)[0] == pytest.approx(-sum(np.log([0.5, 0.2, 0.9])))
    half = np.log(np.full((2, 2, 2), 0.5))
    assert tr.rnnt_loss(half, [0], 1)[0] == pytest.approx(-math.log(2 * 0.5**3))
    loss, g = tr.rnnt_loss(np.zeros((0, 2, 2)), [0], 1)
    assert loss == math.inf
    with pytest.raises(ContractError):
        tr.rnnt_loss(half, [0, 0], 1)


def test_path_count():
    for T in range(1, 5):
        for U in range(0, 5):
            assert len(rnnt_paths(T, U)) == tr.path_count(T, U) == math.comb(T + U - 1, U)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.lists(st.integers(0, 1), max_size=3))
def test_loss_matches_enumeration(seed, T, target):
    lat = rand_lattice(np.random.default_rng(seed), T, len(target))
    got = tr.rnnt_loss(lat, target, BLANK)[0]
    assert abs(got - rnnt_brute_force(lat, target, BLANK)) <= 1e-10


@pytest.mark.parametrize("seed", range(4))
def test_loss_gradient(seed):
    rng = np.random.default_rng(seed)
    target = [0, 1, 0][: 1 + seed % 3]
    lat = rand_lattice(rng, 3, len(target))

    def f(tape, x):
        return tape.seq_loss(x, lambda v: tr.rnnt_loss(v, target, BLANK))

    assert grad_check(f, lat, step=1e-5).max_rel_error <= 1e-5


@pytest.mark.parametrize("seed", range(4))
def test_total_probability_bounded(seed):
    P = model(seed)
    T = 1 + seed % 3
    h = np.random.default_rng(seed).normal(size=(T, 3))
    total = lse([seq_logprob(P, h, y) for y in label_sequences([0, 1], 5)])
    assert total <= 1e-12


def test_total_probability_one_when_emissions_capped():
    # lattices that force blank after two emissions make U <= 2 the full event space
    rng = np.random.default_rng(0)
    T = 2
    table = {}  # node distribution depends on (frame, emitted prefix)

    def node(t, prefix):
        key = (t, prefix)
        if key not in table:
            logits = rng.normal(size=3)
            if len(prefix) == 2:
                logits[:2] = -np.inf
            table[key] = log_softmax(logits)
        return table[key]

    acc = []
    for y in label_sequences([0, 1], 2 * T):
        if len(y) > 2:
            continue
        lat = np.stack([np.stack([node(t, y[:u]) for u in range(len(y) + 1)]) for t in range(T)])
        acc.append(-tr.rnnt_loss(lat, list(y), BLANK)[0])
    assert abs(lse(acc)) <= 1e-8


def test_prediction_network_properties():
    P = model(3)
    d0a, _ = tr.Predictor(NO_TAPE, P, np.zeros((2, 3)), BLANK).step(BLANK, tr.pred_initial(P))
    d0b, _ = tr.Predictor(NO_TAPE, P, np.ones((5, 3)), BLANK).step(BLANK, tr.pred_initial(P))
    np.testing.assert_array_equal(d0a.data, d0b.data)

    Pa = model(3, attention=True)
    h1 = np.random.default_rng(0).normal(size=(3, 3))
    h2 = h1 + 0.5
    pa1 = tr.Predictor(NO_TAPE, Pa, h1, BLANK)
    pa2 = tr.Predictor(NO_TAPE, Pa, h2, BLANK)
    assert not np.allclose(pa1.step(BLANK, pa1.initial())[0].data, pa2.step(BLANK, pa2.initial())[0].data)


@pytest.mark.parametrize("attention", [False, True])
def test_prediction_two_step_gradient(attention):
    P = model(4, attention=attention)
    h = np.random.default_rng(4).normal(size=(3, 3))

    def f(tape, X):
        d = tr.Predictor(tape, X, X["h"], BLANK).outputs([0])
        w = np.random.default_rng(9).normal(size=d.shape)
        return tape.sum(tape.mul(tape.tanh(d), w))

    point = dict(P, h=h)
    res = grad_check(f, point, step=1e-5)
    tape = Tape()
    leaves = {k: tape.leaf(v) for k, v in point.items()}
    g = tape.grad(f(tape, leaves), leaves)
    for k, errs in res.rel_errors.items():
        big = np.abs(g[k]) > 1e-4
        assert np.all(errs[big] <= 1e-5), k


@pytest.mark.parametrize("attention", [False, True])
def test_transducer_nll_gradient_wrt_encoder(attention):
    P = model(5, attention=attention)
    h = np.random.default_rng(5).normal(size=(3, 3))
    res = grad_check(lambda t, x: tr.transducer_nll(t, P, x, [1, 0], BLANK), h, step=1e-5)
    assert res.max_rel_error <= 1e-5


def test_greedy_empty_when_blank_dominates():
    P = model(6)
    P["joint.out_b"] = np.array([-30.0, -30.0, 30.0])
    assert tr.rnnt_greedy(np.random.default_rng(0).normal(size=(4, 3)), P, BLANK) == []


def test_greedy_emits_twice_in_one_frame(monkeypatch):
    # a one-frame input: emit a, emit b, then blank
    P = model(7)
    seq = {(): 0, (0,): 1, (0, 1): BLANK}

    def crafted(self, t, labels):
        out = np.full(3, math.log(0.1))
        out[seq.get(labels, BLANK)] = math.log(0.8)
        return out

    monkeypatch.setattr(tr._PredCache, "joint", crafted)
    assert tr.rnnt_greedy(np.zeros((1, 3)), P, BLANK) == [0, 1]
    assert tr.rnnt_greedy(np.zeros((1, 3)), P, BLANK, max_symbols_per_frame=1) == [0]
    with pytest.raises(ContractError):
        tr.rnnt_greedy(np.zeros((1, 3)), P, BLANK, max_symbols_per_frame=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.booleans())
def test_greedy_equals_beam_one(seed, T, attention):
    P = model(seed % 1000, attention=attention)
    P["joint.out_W"] *= 3.0
    h = np.random.default_rng(seed).normal(size=(T, 3))
    assert list(tr.rnnt_beam(h, P, 1, BLANK)[0].labels) == tr.rnnt_greedy(h, P, BLANK)


@pytest.mark.parametrize("seed", range(6))
def test_exhaustive_beam_matches_enumeration(seed):
    P = model(seed)
    T = 1 + seed % 3
    h = np.random.default_rng(seed).normal(size=(T, 3))
    hyps = tr.rnnt_beam(h, P, 10_000, BLANK, max_symbols_per_frame=2)
    # with at most two emissions per frame the hypothesis set is every Y with |Y| <= 2T
    scores = {}
    for y in label_sequences([0, 1], 2 * T):
        scores[y] = _capped_logprob(P, h, y, cap=2)
    finite = {y: s for y, s in scores.items() if s > -math.inf}
    best = max(finite, key=lambda y: (finite[y], -len(y)))
    assert hyps[0].labels == best
    for x in hyps:
        assert x.score == pytest.approx(finite[x.labels], abs=1e-10)
    assert len(hyps) == len(finite)


def _capped_logprob(P, h, y, cap):
    """Path sum restricted to at most ``cap`` emissions per frame."""
    lat = model_lattice(P, h, list(y))
    T, U = lat.shape[0], len(y)
    terms = []
    for path in rnnt_paths(T, U):
        per_frame = [0] * T
        for t, u, emit in path:
            per_frame[t] += emit
        if max(per_frame) > cap:
            continue
        terms.append(sum(lat[t, u, y[u] if emit else BLANK] for t, u, emit in path))
    return lse(terms)


def test_beam_beta_zero_and_lm_fusion():
    P = model(8)
    h = np.random.default_rng(8).normal(size=(4, 3))
    inv = type("I", (), {"units": ("a", "b", "<blank>")})()
    lm = LabelLM(train_ngram([["a", "b", "b"], ["a"]], 2), inv)
    base = tr.rnnt_beam(h, P, 4, BLANK)
    assert tr.rnnt_beam(h, P, 4, BLANK, lm=lm, beta=0.0) == base
    for x in tr.rnnt_beam(h, P, 4, BLANK, lm=lm, beta=0.3):
        assert x.lm_score == pytest.approx(lm.scorer.sentence_logprob([inv.units[i] for i in x.labels]))
        assert x.score == pytest.approx(x.model_score + 0.3 * x.lm_score)
    with pytest.raises(ContractError):
        tr.rnnt_beam(h, P, 0, BLANK)
