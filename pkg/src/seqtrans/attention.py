"""Attention encoder-decoder scoring and label-synchronous beam search.

Parameter names (all float64 arrays, see :func:`init_params`)::

    att.W  (C, A)   decoder-state projection
    att.V  (D, A)   encoder-state projection
    att.U  (F, A)   location-feature projection      (location mechanism only)
    att.F  (F, w)   convolution filters over alpha    (location mechanism only)
    att.b  (A,)     energy bias
    att.w  (A,)     energy read-out
    dec.emb (V, E)  label embeddings
    dec.W  (E+D+C, 4C), dec.b (4C,)   LSTM-style gated cell
    dec.out_W (C, V), dec.out_b (V,)  output head

Every function takes a :class:`~seqtrans.numerics.Tape` first; pass
``NO_TAPE`` for plain forward evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .lm import fuse
from .numerics import NO_TAPE, ContractError, Tape, Tensor
from .search import Hypothesis, rank_key, ranked


@dataclass(frozen=True)
class AttentionConfig:
    enc_dim: int
    vocab: int
    att_dim: int = 16
    cell_dim: int = 16
    emb_dim: int = 8
    location: bool = True
    n_filters: int = 4  # full scale: 10 filters of width 100
    filter_width: int = 7


@dataclass(frozen=True)
class DecoderState:
    d: Tensor
    cell: Tensor
    alpha: Tensor


def init_params(cfg: AttentionConfig, rng: np.random.Generator, prefix: str = "") -> Dict[str, np.ndarray]:
    def mat(n, m):
        return rng.uniform(-1.0, 1.0, size=(n, m)) / np.sqrt(n)

    C, A, D, E, V = cfg.cell_dim, cfg.att_dim, cfg.enc_dim, cfg.emb_dim, cfg.vocab
    p = {
        "att.W": mat(C, A),
        "att.V": mat(D, A),
        "att.b": np.zeros(A),
        "att.w": rng.uniform(-1.0, 1.0, size=A) / np.sqrt(A),
        "dec.emb": rng.normal(0.0, 1.0, size=(V, E)),
        "dec.W": mat(E + D + C, 4 * C),
        "dec.b": np.concatenate([np.zeros(C), np.ones(C), np.zeros(2 * C)]),
        "dec.out_W": mat(C, V),
        "dec.out_b": np.zeros(V),
    }
    if cfg.location:
        p["att.U"] = mat(cfg.n_filters, A)
        p["att.F"] = rng.uniform(-1.0, 1.0, size=(cfg.n_filters, cfg.filter_width)) / np.sqrt(cfg.filter_width)
    return {prefix + k: v for k, v in p.items()}


def _get(P, name, prefix):
    return P[prefix + name]


def project_memory(tape: Tape, P, h, prefix: str = "") -> Tensor:
    """Encoder-side energy term ``V h_s`` for all s, shared across steps."""
    return tape.affine(h, _get(P, "att.V", prefix))


def energy(
    tape: Tape,
    P,
    d_prev,
    h,
    alpha_prev=None,
    *,
    memory: Optional[Tensor] = None,
    prefix: str = "",
) -> Tensor:
    """Energies ``w^T tanh(W d + V h_s [+ U f_s] + b)`` over encoder positions.

    The location term uses ``f = F * alpha_prev`` (zero-padded, same length).
    """
    location = (prefix + "att.F") in P
    if location and alpha_prev is None:
        raise ContractError("location-based attention needs the previous alignment")
    hd = h.shape[-1] if memory is None else None
    if hd is not None and hd != _get(P, "att.V", prefix).shape[0]:
        raise ContractError(f"encoder dim {hd} does not match att.V")
    if memory is None:
        memory = project_memory(tape, P, h, prefix)
    pre = tape.add(memory, tape.affine(d_prev, _get(P, "att.W", prefix), _get(P, "att.b", prefix)))
    if location:
        feats = tape.conv1d(alpha_prev, _get(P, "att.F", prefix))
        pre = tape.add(pre, tape.affine(feats, _get(P, "att.U", prefix)))
    return tape.affine(tape.tanh(pre), _get(P, "att.w", prefix))


def attend(tape: Tape, e, h) -> Tuple[Tensor, Tensor]:
    """Attention weights ``softmax(e)`` and context ``sum_s alpha_s h_s``."""
    alpha = tape.softmax(e)
    return alpha, tape.affine(alpha, h)


def lstm_cell(tape: Tape, W, b, x_parts: Sequence, d, cell) -> Tuple[Tensor, Tensor]:
    """Gated cell: gates from ``[x_parts...; d]`` in i, f, g, o order."""
    C = cell.shape[0]
    z = tape.affine(tape.concat(list(x_parts) + [d]), W, b)
    i = tape.sigmoid(tape.gather(z, slice(0, C)))
    f = tape.sigmoid(tape.gather(z, slice(C, 2 * C)))
    g = tape.tanh(tape.gather(z, slice(2 * C, 3 * C)))
    o = tape.sigmoid(tape.gather(z, slice(3 * C, 4 * C)))
    new_cell = tape.add(tape.mul(f, cell), tape.mul(i, g))
    return tape.mul(o, tape.tanh(new_cell)), new_cell


def initial_state(cell_dim: int, n_positions: int) -> DecoderState:
    return DecoderState(
        Tensor(np.zeros(cell_dim)),
        Tensor(np.zeros(cell_dim)),
        Tensor(np.full(n_positions, 1.0 / n_positions)),
    )


def decoder_step(
    tape: Tape, P, prev_label: int, state: DecoderState, c, alpha=None, prefix: str = ""
) -> Tuple[Tensor, DecoderState]:
    """One recurrent step: log-softmax over units and the successor state.

    ``alpha`` (the weights that produced ``c``) is stored in the new state for
    the next location-aware energy.
    """
    emb = tape.gather(_get(P, "dec.emb", prefix), int(prev_label))
    d, cell = lstm_cell(
        tape, _get(P, "dec.W", prefix), _get(P, "dec.b", prefix), [emb, c], state.d, state.cell
    )
    logits = tape.affine(d, _get(P, "dec.out_W", prefix), _get(P, "dec.out_b", prefix))
    return tape.log_softmax(logits), DecoderState(d, cell, state.alpha if alpha is None else alpha)


def step(tape: Tape, P, prev_label: int, state: DecoderState, h, memory=None, prefix: str = ""):
    """Energy, attention and decoder step chained for label position l."""
    e = energy(tape, P, state.d, h, state.alpha, memory=memory, prefix=prefix)
    alpha, c = attend(tape, e, h)
    return decoder_step(tape, P, prev_label, state, c, alpha, prefix)


def attention_nll(tape: Tape, P, h, target: Sequence[int], bos: int, prefix: str = "") -> Tensor:
    """Teacher-forced ``-sum_l log p(y_l | y_<l, X)``; ``target`` ends with eos."""
    if len(target) == 0:
        raise ContractError("attention target must contain at least eos")
    cell_dim = _get(P, "dec.out_W", prefix).shape[0]
    state = initial_state(cell_dim, h.shape[0])
    memory = project_memory(tape, P, h, prefix)
    prev = bos
    gold = []
    for y in target:
        logp, state = step(tape, P, prev, state, h, memory, prefix)
        gold.append(tape.gather(logp, slice(int(y), int(y) + 1)))
        prev = y
    return tape.scale(tape.sum(tape.concat(gold)), -1.0)


def attention_seq_loss(h, target: Sequence[int], params: Dict[str, np.ndarray], bos: int):
    """Loss and gradients for every parameter and for the encoder states ``h``."""
    tape = Tape()
    P = {k: tape.leaf(v) for k, v in params.items()}
    H = tape.leaf(h)
    loss = attention_nll(tape, P, H, target, bos)
    grads = tape.grad(loss, dict(P, h=H))
    return loss.item(), grads


# ---------------------------------------------------------------------------
# label-synchronous beam search
# ---------------------------------------------------------------------------


@dataclass
class _Beam:
    labels: Tuple[int, ...]
    att: float
    dec: DecoderState
    lm_total: float
    lm_state: object
    ext_score: float
    ext_state: object
    score: float


def attention_beam(
    h,
    params,
    beam: int,
    max_len: int,
    *,
    bos: int,
    eos: int,
    labels: Sequence[int],
    lm=None,
    beta: float = 0.0,
    prefix_scorer=None,
    scorer_weight: float = 0.0,
    prefix: str = "",
) -> List[Hypothesis]:
    """Label-synchronous beam search without length or coverage terms.

    The hypothesis score is the summed step log-probabilities; with a
    ``prefix_scorer`` of weight ``lam`` it becomes
    ``(1 - lam) * att + lam * prefix_score``. The LM enters as
    ``score + beta * lm``. Complete hypotheses end on eos; after ``max_len``
    steps the surviving ones are returned as-is, flagged ``truncated`` and
    ranked after every complete hypothesis.
    """
    if beam < 1 or max_len < 1:
        raise ContractError("beam and max_len must be >= 1")
    H = np.asarray(h, dtype=np.float64)
    P = params
    use_lm = lm is not None and beta != 0.0
    use_ext = prefix_scorer is not None and scorer_weight != 0.0
    use_att = not (use_ext and scorer_weight == 1.0)
    cands_labels = list(labels) + [eos]
    memory = project_memory(NO_TAPE, P, H, prefix)
    cell_dim = P[prefix + "dec.out_W"].shape[0]

    def combine(att, ext):
        if not use_ext:
            return att
        if not use_att:
            return ext
        return (1.0 - scorer_weight) * att + scorer_weight * ext

    active = [
        _Beam(
            (),
            0.0,
            initial_state(cell_dim, H.shape[0]),
            0.0,
            lm.initial_state() if use_lm else None,
            0.0,
            prefix_scorer.initial() if use_ext else None,
            0.0,
        )
    ]
    ended: List[Hypothesis] = []
    for _ in range(max_len):
        cands = []
        for hyp in active:
            prev = hyp.labels[-1] if hyp.labels else bos
            if use_att:
                logp, dec = step(NO_TAPE, P, prev, hyp.dec, H, memory, prefix)
                logp = logp.data
            else:
                logp, dec = None, hyp.dec
            if use_ext:
                ext_scores, ext_states = prefix_scorer.score_all(hyp.ext_state, cands_labels)
            for j, c in enumerate(cands_labels):
                att = hyp.att + logp[c] if use_att else 0.0
                ext = ext_scores[j] if use_ext else 0.0
                if use_lm:
                    if c == eos:
                        lm_lp, lm_st = lm.final(hyp.lm_state), None
                    else:
                        lm_lp, lm_st = lm.score(hyp.lm_state, c)
                    lm_total = hyp.lm_total + lm_lp
                else:
                    lm_total, lm_st = 0.0, None
                score = fuse(combine(att, ext), lm_total, beta)
                cands.append(
                    (
                        rank_key(score, hyp.labels + (c,)),
                        c,
                        _Beam(hyp.labels + (c,), att, dec, lm_total, lm_st, ext,
                              ext_states[j] if use_ext else None, score),
                    )
                )
        cands.sort(key=lambda x: x[0])
        active = []
        for _, c, b in cands[:beam]:
            if c == eos:
                ended.append(
                    Hypothesis(b.labels[:-1], float(b.score), float(combine(b.att, b.ext_score)), b.lm_total)
                )
            else:
                active.append(b)
        if not active:
            break
        if ended and not use_lm and max(e.score for e in ended) >= active[0].score:
            # scores never increase with length, so no active prefix can win
            break
    else:
        ended.extend(
            Hypothesis(b.labels, float(b.score), float(combine(b.att, b.ext_score)), b.lm_total, True)
            for b in active
        )
    return ranked(ended)
