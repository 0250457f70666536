"""Connectionist temporal classification over log-probability lattices.

A lattice is a (T, V) array of per-frame natural-log posteriors, blank
included. The path-to-label map collapses repeats and then drops blanks;
transition structure is the fixed blank-interleaved topology and no label
prior is applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .lm import fuse
from .numerics import NEG_INF, ContractError
from .search import Hypothesis, rank_key, ranked


def collapse(path: Sequence[int], blank: int) -> List[int]:
    out = []
    prev = None
    for b in path:
        if b != prev and b != blank:
            out.append(int(b))
        prev = b
    return out


def _check_lattice(log_probs) -> np.ndarray:
    lp = np.asarray(log_probs, dtype=np.float64)
    if lp.ndim != 2 or lp.shape[0] == 0:
        raise ContractError("lattice must be a non-empty (T, V) array")
    return lp


def min_frames(target: Sequence[int]) -> int:
    """Frames needed to emit ``target``: one per label plus one per adjacent repeat."""
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def ctc_loss(log_probs, target: Sequence[int], blank: int) -> Tuple[float, np.ndarray]:
    """Negative log-likelihood of ``target`` and its gradient w.r.t. ``log_probs``.

    Infeasible targets give ``(inf, zeros)``. Log-probabilities are treated as
    free inputs, so the gradient is minus the label occupancy per frame.
    """
    lp = _check_lattice(log_probs)
    T, V = lp.shape
    target = [int(y) for y in target]
    if any(y == blank for y in target):
        raise ContractError("target contains the blank label")
    if min_frames(target) > T:
        return float("inf"), np.zeros_like(lp)

    ext = np.full(2 * len(target) + 1, blank, dtype=np.int64)
    ext[1::2] = target
    S = ext.shape[0]
    skip = np.zeros(S, dtype=bool)
    skip[3::2] = ext[3::2] != ext[1:-2:2]

    emit = lp[:, ext]  # (T, S)
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        a = alpha[t - 1]
        acc = a.copy()
        acc[1:] = np.logaddexp(acc[1:], a[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], a[:-2]), acc[2:])
        alpha[t] = acc + emit[t]

    # beta excludes the emission at its own frame, so occupancy = alpha + beta
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc

    log_like = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2]) if S > 1 else alpha[T - 1, 0]
    if not np.isfinite(log_like):
        return float("inf"), np.zeros_like(lp)
    occ = np.exp(alpha + beta - log_like)
    grad = np.zeros_like(lp)
    for s in range(S):
        grad[:, ext[s]] -= occ[:, s]
    return float(-log_like), grad


def ctc_greedy(log_probs, blank: int) -> List[int]:
    lp = _check_lattice(log_probs)
    return collapse(np.argmax(lp, axis=1).tolist(), blank)


def ctc_prefix_beam(
    log_probs,
    beam: int,
    blank: int,
    lm=None,
    beta: float = 0.0,
    labels: Optional[Sequence[int]] = None,
) -> List[Hypothesis]:
    """Frame-synchronous prefix beam search with optional shallow fusion.

    The beam holds (prefix, ends-in-blank) states, each with its own forward
    log-probability, so ``beam=1`` follows the best path exactly. Final
    hypotheses merge both endings of a prefix and are ranked by the full
    collapsed-sequence probability plus ``beta`` times the LM score.
    """
    if beam < 1:
        raise ContractError("beam must be >= 1")
    lp = _check_lattice(log_probs)
    T, V = lp.shape
    if labels is None:
        labels = [k for k in range(V) if k != blank]
    labels = [int(k) for k in labels]
    use_lm = lm is not None and beta != 0.0

    # prefix -> (accumulated LM log-prob, LM state)
    lm_cache: Dict[Tuple[int, ...], Tuple[float, object]] = {
        (): (0.0, lm.initial_state() if use_lm else None)
    }

    def lm_total(prefix: Tuple[int, ...]) -> float:
        if not use_lm:
            return 0.0
        hit = lm_cache.get(prefix)
        if hit is None:
            # parents are always scored before their extensions
            base, st = lm_cache[prefix[:-1]]
            lp_tok, st = lm.score(st, prefix[-1])
            hit = lm_cache[prefix] = (base + lp_tok, st)
        return hit[0]

    states: Dict[Tuple[Tuple[int, ...], bool], float] = {((), True): 0.0}
    for t in range(T):
        row = lp[t]
        new: Dict[Tuple[Tuple[int, ...], bool], float] = {}

        def add(key, val):
            prev = new.get(key)
            new[key] = val if prev is None else np.logaddexp(prev, val)

        for (prefix, ends_blank), s in states.items():
            add((prefix, True), s + row[blank])
            last = prefix[-1] if prefix else None
            for c in labels:
                if c == last and not ends_blank:
                    add((prefix, False), s + row[c])
                else:
                    add((prefix + (c,), False), s + row[c])
        keys = sorted(
            new,
            key=lambda k: rank_key(fuse(new[k], lm_total(k[0]), beta), k[0]) + (not k[1],),
        )
        states = {k: new[k] for k in keys[:beam]}

    merged: Dict[Tuple[int, ...], float] = {}
    for (prefix, _), s in states.items():
        merged[prefix] = s if prefix not in merged else np.logaddexp(merged[prefix], s)
    hyps = []
    for prefix, s in merged.items():
        lm_lp = 0.0
        if use_lm:
            lm_lp = lm_total(prefix) + lm.final(lm_cache[prefix][1])
        hyps.append(Hypothesis(prefix, float(fuse(s, lm_lp, beta)), float(s), lm_lp))
    return ranked(hyps)


# ---------------------------------------------------------------------------
# incremental prefix scoring for label-synchronous joint decoding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrefixScoreState:
    """Forward variables of a label prefix over all frames.

    ``r_nonblank[t]`` / ``r_blank[t]``: log-probability that frames 0..t
    collapse to the prefix with frame t emitting its last label / a blank.
    """

    r_nonblank: np.ndarray
    r_blank: np.ndarray
    last: Optional[int]
    score: float  # log-probability that the output begins with the prefix


def ctc_prefix_initial(log_probs, blank: int) -> PrefixScoreState:
    lp = _check_lattice(log_probs)
    r_b = np.cumsum(lp[:, blank])
    return PrefixScoreState(np.full(lp.shape[0], NEG_INF), r_b, None, 0.0)


def ctc_prefix_score_all(
    state: PrefixScoreState, labels: Sequence[int], log_probs, blank: int, eos: Optional[int] = None
) -> Tuple[np.ndarray, List[Optional[PrefixScoreState]]]:
    """Prefix scores of ``prefix + c`` for every ``c`` in ``labels`` at once.

    For ``c == eos`` the score is the full-sequence log-probability of the
    current prefix and no successor state is produced.
    """
    lp = np.asarray(log_probs, dtype=np.float64)
    T = lp.shape[0]
    labels = np.asarray(labels, dtype=np.int64)
    is_eos = labels == eos if eos is not None else np.zeros(len(labels), dtype=bool)
    cand = labels[~is_eos]
    C = cand.shape[0]
    x = lp[:, cand]  # (T, C)

    r_n = np.full((T, C), NEG_INF)
    r_b = np.full((T, C), NEG_INF)
    if state.last is None:
        r_n[0] = x[0]
    full = np.logaddexp(state.r_nonblank, state.r_blank)
    phi = np.repeat(full[:, None], C, axis=1)
    if state.last is not None:
        same = cand == state.last
        phi[:, same] = state.r_blank[:, None]
    blank_row = lp[:, blank]
    for t in range(1, T):
        r_n[t] = np.logaddexp(r_n[t - 1], phi[t - 1]) + x[t]
        r_b[t] = np.logaddexp(r_b[t - 1], r_n[t - 1]) + blank_row[t]
    with np.errstate(invalid="ignore"):
        terms = np.vstack([r_n[:1], phi[:-1] + x[1:]])
    m = np.max(terms, axis=0)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        psi_c = np.log(np.sum(np.exp(terms - m_safe), axis=0)) + m_safe

    scores = np.empty(len(labels))
    states: List[Optional[PrefixScoreState]] = [None] * len(labels)
    j = 0
    for i, (c, e) in enumerate(zip(labels, is_eos)):
        if e:
            scores[i] = full[T - 1]
        else:
            scores[i] = psi_c[j]
            states[i] = PrefixScoreState(r_n[:, j].copy(), r_b[:, j].copy(), int(c), float(psi_c[j]))
            j += 1
    return scores, states


def ctc_prefix_score_step(
    state: PrefixScoreState, label: int, log_probs, blank: int, eos: Optional[int] = None
) -> Tuple[float, Optional[PrefixScoreState]]:
    scores, states = ctc_prefix_score_all(state, [label], log_probs, blank, eos)
    return float(scores[0]), states[0]
