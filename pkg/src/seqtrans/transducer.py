"""RNN-transducer: prediction network, joint network, lattice loss and search.

The joint network projects encoder and prediction states separately into a
shared J-dimensional space before the tanh, then reads out |V| logits::

    z[t, u] = out_W . tanh(enc_W h_t + dec_W d_u + b) + out_b

Lattices are (T, U+1, V) arrays of natural-log posteriors with node (t, u)
meaning "u labels emitted, at frame t". A path makes T blank moves and U
emit moves and ends with the blank leaving (T-1, U).

Parameters (``init_params``)::

    pred.emb (V, E), pred.W (E+C, 4C) or (E+D+C, 4C), pred.b (4C,)
    pred.att.*  attention over encoder states (attention variant only)
    joint.enc (D, J), joint.dec (C, J), joint.b (J,), joint.out_W (J, V), joint.out_b (V,)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import attention as att
from .lm import fuse
from .numerics import NO_TAPE, ContractError, Tape, Tensor
from .search import Hypothesis, rank_key, ranked

PRED = "pred."


@dataclass(frozen=True)
class TransducerConfig:
    enc_dim: int
    vocab: int
    pred_dim: int = 16
    emb_dim: int = 8
    joint_dim: int = 8  # full scale: 1024
    attention: bool = False
    att_dim: int = 16
    location: bool = True
    n_filters: int = 4
    filter_width: int = 7


def init_params(cfg: TransducerConfig, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    def mat(n, m):
        return rng.uniform(-1.0, 1.0, size=(n, m)) / np.sqrt(n)

    C, E, D, J, V = cfg.pred_dim, cfg.emb_dim, cfg.enc_dim, cfg.joint_dim, cfg.vocab
    n_in = E + C + (D if cfg.attention else 0)
    p = {
        "pred.emb": rng.normal(0.0, 1.0, size=(V, E)),
        "pred.W": mat(n_in, 4 * C),
        "pred.b": np.concatenate([np.zeros(C), np.ones(C), np.zeros(2 * C)]),
        "joint.enc": mat(D, J),
        "joint.dec": mat(C, J),
        "joint.b": np.zeros(J),
        "joint.out_W": mat(J, V),
        "joint.out_b": np.zeros(V),
    }
    if cfg.attention:
        acfg = att.AttentionConfig(
            enc_dim=D, vocab=V, att_dim=cfg.att_dim, cell_dim=C, emb_dim=E,
            location=cfg.location, n_filters=cfg.n_filters, filter_width=cfg.filter_width,
        )
        p.update({
            "pred." + k: v
            for k, v in att.init_params(acfg, rng).items()
            if k.startswith("att.")
        })
    return p


def is_attention(P) -> bool:
    return "pred.att.V" in P


# ---------------------------------------------------------------------------
# subnetworks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PredState:
    d: Tensor
    cell: Tensor
    alpha: Optional[Tensor] = None


def pred_initial(P, n_positions: int = 0) -> PredState:
    C = P["joint.dec"].shape[0]
    zeros = Tensor(np.zeros(C))
    alpha = Tensor(np.full(n_positions, 1.0 / n_positions)) if is_attention(P) else None
    return PredState(zeros, zeros, alpha)


def prediction_step(tape: Tape, P, prev_label: int, state: PredState) -> Tuple[Tensor, PredState]:
    """Gated recurrent step over label embeddings; returns (d_u, next state)."""
    emb = tape.gather(P["pred.emb"], int(prev_label))
    d, cell = att.lstm_cell(tape, P["pred.W"], P["pred.b"], [emb], state.d, state.cell)
    return d, PredState(d, cell)


def attention_prediction_step(
    tape: Tape, P, prev_label: int, state: PredState, h, memory=None
) -> Tuple[Tensor, PredState]:
    """Prediction step that also attends over the encoder states ``h``.

    The context is computed once per label position over the whole encoder
    output, so d_u stays independent of t and the lattice factorises.
    """
    e = att.energy(tape, P, state.d, h, state.alpha, memory=memory, prefix=PRED)
    alpha, c = att.attend(tape, e, h)
    emb = tape.gather(P["pred.emb"], int(prev_label))
    d, cell = att.lstm_cell(tape, P["pred.W"], P["pred.b"], [emb, c], state.d, state.cell)
    return d, PredState(d, cell, alpha)


class Predictor:
    """Prediction-network driver shared by the loss and the decoders."""

    def __init__(self, tape: Tape, P, h, blank: int):
        self.tape, self.P, self.h, self.blank = tape, P, h, blank
        self.attention = is_attention(P)
        self.memory = att.project_memory(tape, P, h, PRED) if self.attention else None

    def initial(self) -> PredState:
        return pred_initial(self.P, self.h.shape[0])

    def step(self, prev_label: int, state: PredState) -> Tuple[Tensor, PredState]:
        if self.attention:
            return attention_prediction_step(self.tape, self.P, prev_label, state, self.h, self.memory)
        return prediction_step(self.tape, self.P, prev_label, state)

    def outputs(self, target: Sequence[int]) -> Tensor:
        """Stack d_0 .. d_U; d_0 consumes the blank start symbol."""
        state = self.initial()
        rows = []
        for prev in [self.blank] + list(target):
            d, state = self.step(prev, state)
            rows.append(self.tape.reshape(d, (1, d.shape[0])))
        return self.tape.concat(rows, axis=0)


def joint_step(tape: Tape, P, h_t, d_u) -> Tensor:
    if h_t.shape[-1] != P["joint.enc"].shape[0] or d_u.shape[-1] != P["joint.dec"].shape[0]:
        raise ContractError("joint input dimensions do not match the projections")
    z = tape.add(tape.affine(h_t, P["joint.enc"]), tape.affine(d_u, P["joint.dec"], P["joint.b"]))
    return tape.log_softmax(tape.affine(tape.tanh(z), P["joint.out_W"], P["joint.out_b"]))


def joint_lattice(tape: Tape, P, h, d) -> Tensor:
    """(T, U+1, V) log-posteriors for every (frame, label-position) node."""
    T, U1 = h.shape[0], d.shape[0]
    J = P["joint.enc"].shape[1]
    enc = tape.reshape(tape.affine(h, P["joint.enc"]), (T, 1, J))
    dec = tape.reshape(tape.affine(d, P["joint.dec"], P["joint.b"]), (1, U1, J))
    z = tape.tanh(tape.add(enc, dec))
    return tape.log_softmax(tape.affine(z, P["joint.out_W"], P["joint.out_b"]))


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def _lae(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    m = max(a, b)
    return m + math.log1p(math.exp(-abs(a - b)))


def rnnt_loss(lattice, target: Sequence[int], blank: int) -> Tuple[float, np.ndarray]:
    """Negative log-likelihood over all monotonic lattice paths, with gradient."""
    lp = np.asarray(lattice, dtype=np.float64)
    target = [int(y) for y in target]
    U = len(target)
    if lp.ndim != 3 or lp.shape[1] != U + 1:
        raise ContractError(f"lattice shape {lp.shape} does not fit a target of length {U}")
    T = lp.shape[0]
    if T == 0:
        return float("inf"), np.zeros_like(lp)
    blank_lp = lp[:, :, blank].tolist()
    emit_lp = [[lp[t, u, target[u]] for u in range(U)] for t in range(T)]
    ninf = -math.inf

    alpha = [[ninf] * (U + 1) for _ in range(T)]
    alpha[0][0] = 0.0
    for t in range(T):
        for u in range(U + 1):
            if t == 0 and u == 0:
                continue
            a = alpha[t - 1][u] + blank_lp[t - 1][u] if t > 0 else ninf
            b = alpha[t][u - 1] + emit_lp[t][u - 1] if u > 0 else ninf
            alpha[t][u] = _lae(a, b)
    log_like = alpha[T - 1][U] + blank_lp[T - 1][U]
    if not math.isfinite(log_like):
        return float("inf"), np.zeros_like(lp)

    beta = [[ninf] * (U + 1) for _ in range(T)]
    beta[T - 1][U] = blank_lp[T - 1][U]
    for t in range(T - 1, -1, -1):
        for u in range(U, -1, -1):
            if t == T - 1 and u == U:
                continue
            a = beta[t + 1][u] + blank_lp[t][u] if t < T - 1 else ninf
            b = beta[t][u + 1] + emit_lp[t][u] if u < U else ninf
            beta[t][u] = _lae(a, b)

    A = np.array(alpha)
    B = np.array(beta)
    grad = np.zeros_like(lp)
    nxt = np.full((T, U + 1), -np.inf)
    nxt[:-1] = B[1:]
    nxt[T - 1, U] = 0.0
    grad[:, :, blank] = -np.exp(A + lp[:, :, blank] + nxt - log_like)
    if U:
        tgt = np.asarray(target)
        emit = lp[:, np.arange(U), tgt]  # (T, U)
        occ = np.exp(A[:, :U] + emit + B[:, 1:] - log_like)
        for u in range(U):
            grad[:, u, tgt[u]] -= occ[:, u]
    return float(-log_like), grad


def transducer_nll(tape: Tape, P, h, target: Sequence[int], blank: int) -> Tensor:
    d = Predictor(tape, P, h, blank).outputs(target)
    lattice = joint_lattice(tape, P, h, d)
    tgt = list(target)
    return tape.seq_loss(lattice, lambda lp: rnnt_loss(lp, tgt, blank))


# ---------------------------------------------------------------------------
# decoding
# ---------------------------------------------------------------------------


class _PredCache:
    def __init__(self, P, h, blank):
        self.pred = Predictor(NO_TAPE, P, h, blank)
        self.P = P
        self.blank = blank
        self.cache: Dict[Tuple[int, ...], Tuple[np.ndarray, PredState]] = {}
        self.enc = np.asarray(h) @ P["joint.enc"]

    def get(self, labels: Tuple[int, ...]):
        hit = self.cache.get(labels)
        if hit is None:
            if labels:
                _, state = self.get(labels[:-1])
                prev = labels[-1]
            else:
                state, prev = self.pred.initial(), self.blank
            d, state = self.pred.step(prev, state)
            dec = d.data @ self.P["joint.dec"] + self.P["joint.b"]
            hit = self.cache[labels] = (dec, state)
        return hit

    def joint(self, t: int, labels: Tuple[int, ...]) -> np.ndarray:
        from .numerics import log_softmax

        dec, _ = self.get(labels)
        z = np.tanh(self.enc[t] + dec)
        return log_softmax(z @ self.P["joint.out_W"] + self.P["joint.out_b"])


def rnnt_greedy(
    h, params, blank: int, max_symbols_per_frame: int = 10, labels: Optional[Sequence[int]] = None
) -> List[int]:
    """Frame-synchronous greedy decoding; emits while the argmax is a label."""
    if max_symbols_per_frame < 1:
        raise ContractError("max_symbols_per_frame must be >= 1")
    pc = _PredCache(params, h, blank)
    V = params["joint.out_b"].shape[0]
    allowed = np.array(sorted(set([blank] + (list(range(V)) if labels is None else list(labels)))))
    out: Tuple[int, ...] = ()
    for t in range(np.asarray(h).shape[0]):
        for _ in range(max_symbols_per_frame):
            logp = pc.joint(t, out)
            k = int(allowed[np.argmax(logp[allowed])])
            if k == blank:
                break
            out = out + (k,)
    return list(out)


@dataclass
class _THyp:
    am: float
    lm_total: float
    lm_state: object


def rnnt_beam(
    h,
    params,
    beam: int,
    blank: int,
    labels: Optional[Sequence[int]] = None,
    lm=None,
    beta: float = 0.0,
    max_symbols_per_frame: int = 10,
) -> List[Hypothesis]:
    """Frame-synchronous beam search with prefix merging.

    Within a frame, hypotheses are expanded up to ``max_symbols_per_frame``
    times; blank expansions move them to the next frame. Equal label
    sequences are merged by log-adding their acoustic scores, and the LM is
    fused on emissions only.
    """
    if beam < 1:
        raise ContractError("beam must be >= 1")
    pc = _PredCache(params, h, blank)
    V = params["joint.out_b"].shape[0]
    labels = [k for k in range(V) if k != blank] if labels is None else [int(k) for k in labels]
    use_lm = lm is not None and beta != 0.0

    def score(labs, hyp: _THyp) -> float:
        return fuse(hyp.am, hyp.lm_total, beta)

    def merge(pool: Dict, labs, am, lm_total, lm_state):
        prev = pool.get(labs)
        if prev is None:
            pool[labs] = _THyp(am, lm_total, lm_state)
        else:
            prev.am = _lae(prev.am, am)

    hyps: Dict[Tuple[int, ...], _THyp] = {(): _THyp(0.0, 0.0, lm.initial_state() if use_lm else None)}
    T = np.asarray(h).shape[0]
    for t in range(T):
        A = hyps
        B: Dict[Tuple[int, ...], _THyp] = {}
        for n_emit in range(max_symbols_per_frame + 1):
            C: Dict[Tuple[int, ...], _THyp] = {}
            for labs, hyp in A.items():
                logp = pc.joint(t, labs)
                merge(B, labs, hyp.am + logp[blank], hyp.lm_total, hyp.lm_state)
                if n_emit == max_symbols_per_frame:
                    continue
                for k in labels:
                    if use_lm:
                        lm_lp, lm_st = lm.score(hyp.lm_state, k)
                    else:
                        lm_lp, lm_st = 0.0, None
                    merge(C, labs + (k,), hyp.am + logp[k], hyp.lm_total + lm_lp, lm_st)
            pool = [(rank_key(score(l, x), l) + (0,), l, x, True) for l, x in B.items()]
            pool += [(rank_key(score(l, x), l) + (1,), l, x, False) for l, x in C.items()]
            pool.sort(key=lambda p: p[0])
            kept = pool[:beam]
            B = {l: x for _, l, x, is_b in kept if is_b}
            A = {l: x for _, l, x, is_b in kept if not is_b}
            if not A:
                break
        hyps = B

    out = []
    for labs, hyp in hyps.items():
        lm_lp = hyp.lm_total + (lm.final(hyp.lm_state) if use_lm else 0.0)
        out.append(Hypothesis(labs, float(fuse(hyp.am, lm_lp, beta)), float(hyp.am), lm_lp))
    return ranked(out)


def path_count(T: int, U: int) -> int:
    """Number of monotonic lattice paths: U emits interleaved with T-1 inner blanks."""
    return math.comb(T + U - 1, U) if T > 0 else 0
