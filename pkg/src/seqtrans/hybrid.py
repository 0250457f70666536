"""Joint CTC-attention: multi-task loss, two-pass rescoring, one-pass decoding."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Sequence

import numpy as np

from . import attention as att
from .ctc import ctc_loss, ctc_prefix_initial, ctc_prefix_score_all
from .numerics import ContractError, Tape, Tensor
from .search import Hypothesis

DEFAULT_MTL_LAMBDA = 0.3
DEFAULT_DECODE_LAMBDA = 0.2
DEFAULT_BEAM = 30


@dataclass(frozen=True)
class JointDecodeConfig:
    mtl_lambda: float = DEFAULT_MTL_LAMBDA
    decode_lambda: float = DEFAULT_DECODE_LAMBDA
    beam: int = DEFAULT_BEAM
    lm_kind: str = "none"
    beta: float = 0.0
    max_len: int = 64

    def __post_init__(self):
        for name in ("mtl_lambda", "decode_lambda"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"{name}={v} outside [0, 1]")
        if self.beam < 1 or self.max_len < 1:
            raise ContractError("beam and max_len must be >= 1")


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ContractError(f"lambda={lam} outside [0, 1]")


def mtl_loss(ctc_loss_value: float, att_loss_value: float, lam: float) -> float:
    """``lam * L_ctc + (1 - lam) * L_att``; the endpoints return one loss exactly."""
    _check_lambda(lam)
    if lam == 0.0:
        return att_loss_value
    if lam == 1.0:
        return ctc_loss_value
    return lam * ctc_loss_value + (1.0 - lam) * att_loss_value


def mtl_node(tape: Tape, ctc_value: Tensor, att_value: Tensor, lam: float) -> Tensor:
    """Tape version of :func:`mtl_loss`, so gradients combine with the same weights."""
    _check_lambda(lam)
    if lam == 0.0:
        return att_value
    if lam == 1.0:
        return ctc_value
    return tape.add(tape.scale(ctc_value, lam), tape.scale(att_value, 1.0 - lam))


def ctc_head_nll(tape: Tape, W, b, h, target: Sequence[int], blank: int) -> Tensor:
    """CTC loss of a linear + log-softmax head over encoder states."""
    lattice = tape.log_softmax(tape.affine(h, W, b))
    tgt = list(target)
    return tape.seq_loss(lattice, lambda lp: ctc_loss(lp, tgt, blank))


def mtl_nll(
    tape: Tape, P, h, target: Sequence[int], *, lam: float, blank: int, bos: int, eos: int
) -> Tensor:
    """Multi-task loss on a shared encoder output ``h``.

    ``P`` holds the attention parameters plus ``ctc.W`` / ``ctc.b``; ``target``
    has no eos (it is appended for the attention branch).
    """
    c = ctc_head_nll(tape, P["ctc.W"], P["ctc.b"], h, target, blank) if lam > 0.0 else None
    a = att.attention_nll(tape, P, h, list(target) + [eos], bos) if lam < 1.0 else None
    if c is None:
        return a
    if a is None:
        return c
    return mtl_node(tape, c, a, lam)


def two_pass_rescore(
    hypotheses: Sequence[Hypothesis], lattice, lam: float, blank: int
) -> List[Hypothesis]:
    """Rescore an attention n-best with ``lam * ln p_ctc + (1 - lam) * ln p_att``.

    ``model_score`` of each input is taken as its attention log-probability.
    The sort is stable, so ties keep the first-pass order; CTC-infeasible
    hypotheses get ``-inf`` (for ``lam > 0``) and end up last.
    """
    _check_lambda(lam)
    out = []
    for hyp in hypotheses:
        a = hyp.model_score
        if lam == 0.0:
            s = a
        else:
            loss, _ = ctc_loss(lattice, hyp.labels, blank)
            c = -loss
            if not math.isfinite(c):
                s = -math.inf
            elif lam == 1.0:
                s = c
            else:
                s = lam * c + (1.0 - lam) * a
        # keep any LM contribution fused into the first-pass score
        out.append(replace(hyp, score=float(s + (hyp.score - hyp.model_score)), model_score=float(s)))
    return sorted(out, key=lambda h: -h.score)


class CTCPrefixScorer:
    """Adapter exposing CTC prefix scores to the label-synchronous beam."""

    def __init__(self, lattice, blank: int, eos: int):
        self.lattice = np.asarray(lattice, dtype=np.float64)
        self.blank, self.eos = blank, eos

    def initial(self):
        return ctc_prefix_initial(self.lattice, self.blank)

    def score_all(self, state, labels):
        return ctc_prefix_score_all(state, labels, self.lattice, self.blank, self.eos)


def one_pass_joint_beam(
    h,
    lattice,
    params,
    config: JointDecodeConfig,
    *,
    bos: int,
    eos: int,
    blank: int,
    labels: Sequence[int],
    lm=None,
) -> List[Hypothesis]:
    """Attention beam whose prefixes score ``lam * ctc + (1 - lam) * att + beta * lm``."""
    return att.attention_beam(
        h,
        params,
        config.beam,
        config.max_len,
        bos=bos,
        eos=eos,
        labels=labels,
        lm=lm,
        beta=config.beta,
        prefix_scorer=CTCPrefixScorer(lattice, blank, eos),
        scorer_weight=config.decode_lambda,
    )
