import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqtrans.lm import (
    EOS_TOKEN,
    UNK,
    LabelLM,
    MultiLevelLM,
    NGramLM,
    UniformLM,
    char_tokens,
    fuse,
    lm_score,
    multilevel_score,
    train_ngram,
)
from seqtrans.units import SPACE, build_char_inventory, encode


def lsum(xs):
    m = max(xs)
    return m + math.log(sum(math.exp(x - m) for x in xs))


def rand_corpus(seed, vocab="abcd", n=30):
    rng = random.Random(seed)
    return [[rng.choice(vocab) for _ in range(rng.randint(1, 6))] for _ in range(n)]


def test_unigram_single_token():
    lm = train_ngram([["a", "a", "a"]], 1, sentence_markers=False)
    p_a, p_unk = math.exp(lm.logprob((), "a")), math.exp(lm.unk_logprob)
    assert p_a + p_unk == pytest.approx(1.0, abs=1e-12)
    assert p_a > 0.8
    big = train_ngram([["a"] * 1000], 1, sentence_markers=False)
    assert math.exp(big.logprob((), "a")) > 0.999


def test_bigram_prefers_observed():
    lm = train_ngram([["a", "b", "a", "b"]], 2)
    assert lm.logprob(("a",), "b") > lm.logprob(("a",), "a")


def test_score_is_table_lookup():
    lm = train_ngram([["a", "b"]], 2)
    st0 = lm.initial_state()
    _, s1 = lm.score(st0, "a")
    lp, s2 = lm_score(lm, s1, "b")
    assert lp == lm.probs[("a", "b")]
    assert s2.history == ("b",)


@pytest.mark.parametrize("order", [1, 2, 3, 4])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_conditional_distributions_normalised(order, seed):
    lm = train_ngram(rand_corpus(seed), order)
    tokens = list(lm.vocab) + [UNK]
    contexts = {()} | {g[:-1] for g in lm.probs} | {("<s>",), ("zz",), ("a", "zz")}
    for ctx in contexts:
        total = lsum([lm.logprob(ctx, t) for t in tokens])
        assert abs(total) <= 1e-6, (ctx, total)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4), st.lists(st.sampled_from("abcdx"), max_size=8))
def test_chain_rule_and_history_bound(seed, order, sent):
    lm = train_ngram(rand_corpus(seed), order)
    state = lm.initial_state()
    total = 0.0
    for t in sent:
        lp, state = lm.score(state, t)
        assert len(state.history) < order or order == 1
        total += lp
    total += lm.final(state)
    assert total == pytest.approx(lm.sentence_logprob(sent), abs=1e-12)


def test_errors():
    with pytest.raises(ValueError):
        train_ngram([], 2)
    with pytest.raises(ValueError):
        train_ngram([["a"]], 6)
    with pytest.raises(ValueError):
        train_ngram([["a"]], 2, discount=1.0)


def test_arpa_round_trip(tmp_path):
    lm = train_ngram(rand_corpus(4), 3)
    lm.save_arpa(tmp_path / "lm.arpa")
    back = NGramLM.load_arpa(tmp_path / "lm.arpa")
    assert back.order == 3 and back.vocab == lm.vocab
    assert set(back.probs) == set(lm.probs)
    for g, lp in lm.probs.items():
        assert back.probs[g] == pytest.approx(lp, abs=1e-12)
    for sent in rand_corpus(9, n=10):
        assert back.sentence_logprob(sent) == pytest.approx(lm.sentence_logprob(sent), abs=1e-12)


def test_uniform_and_fuse():
    u = UniformLM(7)
    assert u.score(u.initial_state(), "q")[0] == -math.log(7)
    assert fuse(-3.0, -10.0, 0.0) == -3.0
    assert fuse(-3.0, -10.0, 0.3) == pytest.approx(-6.0)
    assert fuse(-3.0, -10.0, 1.0) == -13.0


@given(st.floats(-50, 0), st.floats(-50, 0), st.floats(0, 2), st.floats(0, 5))
def test_fuse_monotone(m, l, beta, d):
    assert fuse(m + d, l, beta) >= fuse(m, l, beta)
    assert fuse(m, l + d, beta) >= fuse(m, l, beta)


WORDS = [["le", "chat", "dort"], ["le", "chien", "dort"], ["un", "chat"]]


def _models():
    lines = [" ".join(w) for w in WORDS]
    char_lm = train_ngram([char_tokens(x) for x in lines], 3)
    word_lm = train_ngram(WORDS, 2)
    return char_lm, word_lm


def _score_chars(ml, text, end_with_boundary=True):
    state = ml.initial_state()
    total = 0.0
    toks = char_tokens(text) + ([SPACE] if end_with_boundary else [])
    for t in toks:
        lp, state = ml.score(state, t)
        total += lp
    return total, state


@pytest.mark.parametrize("sent", ["le chat dort", "un chien", "chat", "le le le"])
def test_multilevel_telescopes_to_word_lm(sent):
    char_lm, word_lm = _models()
    ml = MultiLevelLM(char_lm, word_lm)
    total, state = _score_chars(ml, sent)
    expected = word_lm.sentence_logprob(sent.split(), with_end=False)
    assert abs(total - expected) <= 1e-10
    # final closes the sentence with the word-LM end term only
    assert ml.final(state) == pytest.approx(word_lm.final(state.word_state), abs=0)


def test_multilevel_final_completes_pending_word():
    char_lm, word_lm = _models()
    ml = MultiLevelLM(char_lm, word_lm)
    total, state = _score_chars(ml, "le chat", end_with_boundary=False)
    total += ml.final(state)
    assert total == pytest.approx(word_lm.sentence_logprob(["le", "chat"]), abs=1e-10)


def test_multilevel_uniform_char_single_letter_word():
    word_lm = train_ngram([["a", "bb"], ["bb"]], 1, sentence_markers=False)
    char = UniformLM(5)
    ml = MultiLevelLM(char, word_lm)
    s0 = ml.initial_state()
    _, s1 = ml.score(s0, "a")
    delta, _ = ml.score(s1, SPACE)
    assert delta == pytest.approx(word_lm.logprob((), "a") + math.log(5), abs=1e-12)


def test_multilevel_prefix_is_pure_char_score():
    char_lm, word_lm = _models()
    ml = MultiLevelLM(char_lm, word_lm)
    total, _ = _score_chars(ml, "chi", end_with_boundary=False)
    assert total == pytest.approx(char_lm.sentence_logprob(list("chi"), with_end=False), abs=1e-12)


def test_multilevel_oov_keeps_char_score_plus_penalty():
    char_lm, word_lm = _models()
    pen = math.log(1e-3)
    ml = MultiLevelLM(char_lm, word_lm, oov_logprob=pen)
    total, state = _score_chars(ml, "xyz")
    chars = char_lm.sentence_logprob(char_tokens("xyz") + [SPACE], with_end=False)
    assert total == pytest.approx(chars + pen, abs=1e-12)
    assert state.word_state.history[-1] == UNK


def test_multilevel_function_matches_class():
    char_lm, word_lm = _models()
    ml = MultiLevelLM(char_lm, word_lm)
    s = ml.initial_state()
    for t in char_tokens("le chat "):
        a, s_fn = multilevel_score(s, t, char_lm, word_lm)
        b, s = ml.score(s, t)
        assert a == b and s_fn == s


def test_label_lm_maps_ids():
    inv = build_char_inventory(["le chat"])
    char_lm, _ = _models()
    lab = LabelLM(char_lm, inv)
    ids = encode("le", inv)
    st0 = lab.initial_state()
    a, st1 = lab.score(st0, ids[0])
    b, _ = char_lm.score(char_lm.initial_state(), "l")
    assert a == b
    assert lab.final(st1) == char_lm.logprob(("<s>", "l"), EOS_TOKEN)
