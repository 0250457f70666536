"""Shared bidirectional GRU encoder and the five method heads.

Parameter names are flat strings; the encoder uses ``enc.{f,b}.*``, the CTC
head ``ctc.*`` and the decoders the names of their own modules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .. import attention as att
from .. import ctc, hybrid, transducer
from ..numerics import NO_TAPE, ContractError, Tape, Tensor
from ..units import SubwordModel, UnitInventory, encode
from .config import METHODS, DecodeConfig, ModelConfig


def _mat(rng, n, m):
    return rng.uniform(-1.0, 1.0, size=(n, m)) / np.sqrt(n)


def init_encoder(feat_dim: int, hidden: int, rng) -> Dict[str, np.ndarray]:
    p = {}
    for d in ("f", "b"):
        p[f"enc.{d}.Wx"] = _mat(rng, feat_dim, 3 * hidden)
        p[f"enc.{d}.bx"] = np.zeros(3 * hidden)
        p[f"enc.{d}.Wh"] = _mat(rng, hidden, 3 * hidden)
        p[f"enc.{d}.bh"] = np.zeros(3 * hidden)
    return p


def gru_pass(tape: Tape, P, X, direction: str, reverse: bool) -> List[Tensor]:
    """GRU over the rows of ``X``; returns one state per frame in input order."""
    H = P[f"enc.{direction}.Wh"].shape[0]
    xp = tape.affine(X, P[f"enc.{direction}.Wx"], P[f"enc.{direction}.bx"])
    T = X.shape[0]
    h = Tensor(np.zeros(H))
    states: List[Optional[Tensor]] = [None] * T
    for t in (range(T - 1, -1, -1) if reverse else range(T)):
        xt = tape.gather(xp, t)
        hp = tape.affine(h, P[f"enc.{direction}.Wh"], P[f"enc.{direction}.bh"])
        zr = tape.sigmoid(tape.add(tape.gather(xt, slice(0, 2 * H)), tape.gather(hp, slice(0, 2 * H))))
        z = tape.gather(zr, slice(0, H))
        r = tape.gather(zr, slice(H, 2 * H))
        n = tape.tanh(tape.add(tape.gather(xt, slice(2 * H, 3 * H)), tape.mul(r, tape.gather(hp, slice(2 * H, 3 * H)))))
        h = tape.add(n, tape.mul(z, tape.sub(h, n)))
        states[t] = h
    return states


def encode_features(tape: Tape, P, X, subsample: int = 1) -> Tensor:
    """(ceil(T / subsample), 2H) concatenated forward/backward states."""
    if X.shape[0] == 0:
        raise ContractError("empty feature matrix")
    fw = gru_pass(tape, P, X, "f", False)
    bw = gru_pass(tape, P, X, "b", True)
    rows = [tape.reshape(tape.concat([a, b]), (1, -1)) for a, b in zip(fw[::subsample], bw[::subsample])]
    return tape.concat(rows, axis=0)


@dataclass
class Model:
    method: str
    unit_kind: str
    inventory: UnitInventory
    params: Dict[str, np.ndarray]
    cfg: ModelConfig = field(default_factory=ModelConfig)
    subword: Optional[SubwordModel] = None
    mtl_lambda: float = 0.3

    def targets(self, text: str) -> List[int]:
        return encode(text, self.inventory, self.subword)


def init_model(
    method: str, unit_kind: str, inventory: UnitInventory, feat_dim: int, cfg: ModelConfig,
    rng: np.random.Generator, subword: Optional[SubwordModel] = None, mtl_lambda: float = 0.3,
) -> Model:
    if method not in METHODS:
        raise ContractError(f"unknown method {method!r}")
    V = len(inventory)
    enc_dim = 2 * cfg.enc_hidden
    P = init_encoder(feat_dim, cfg.enc_hidden, rng)
    if method in ("ctc", "joint"):
        P["ctc.W"] = _mat(rng, enc_dim, V)
        P["ctc.b"] = np.zeros(V)
    if method in ("attention", "joint"):
        acfg = att.AttentionConfig(
            enc_dim=enc_dim, vocab=V, att_dim=cfg.att_dim, cell_dim=cfg.dec_dim, emb_dim=cfg.emb_dim,
            location=True, n_filters=cfg.n_filters, filter_width=cfg.filter_width,
        )
        P.update(att.init_params(acfg, rng))
    if method in ("transducer", "transducer-attention"):
        tcfg = transducer.TransducerConfig(
            enc_dim=enc_dim, vocab=V, pred_dim=cfg.dec_dim, emb_dim=cfg.emb_dim, joint_dim=cfg.joint_dim,
            attention=method == "transducer-attention", att_dim=cfg.att_dim,
            n_filters=cfg.n_filters, filter_width=cfg.filter_width,
        )
        P.update(transducer.init_params(tcfg, rng))
    return Model(method, unit_kind, inventory, P, cfg, subword, mtl_lambda)


def loss_node(tape: Tape, model: Model, P, X, target: List[int]) -> Tensor:
    """Method loss for one utterance; ``P`` maps names to tape leaves."""
    inv = model.inventory
    h = encode_features(tape, P, X, model.cfg.subsample)
    m = model.method
    if m == "ctc":
        return hybrid.ctc_head_nll(tape, P["ctc.W"], P["ctc.b"], h, target, inv.blank_id)
    if m == "attention":
        return att.attention_nll(tape, P, h, target + [inv.eos_id], inv.bos_id)
    if m == "joint":
        return hybrid.mtl_nll(
            tape, P, h, target, lam=model.mtl_lambda, blank=inv.blank_id, bos=inv.bos_id, eos=inv.eos_id
        )
    return transducer.transducer_nll(tape, P, h, target, inv.blank_id)


def encoder_output(model: Model, X) -> Tensor:
    P = {k: Tensor(v) for k, v in model.params.items()}
    return encode_features(NO_TAPE, P, Tensor(np.asarray(X, dtype=np.float64)), model.cfg.subsample)


def ctc_lattice(model: Model, h) -> np.ndarray:
    from ..numerics import log_softmax

    return log_softmax(np.asarray(h.data if isinstance(h, Tensor) else h) @ model.params["ctc.W"] + model.params["ctc.b"])


def decode_utterance(
    model: Model, X, dcfg: DecodeConfig, lm=None, beta: float = 0.0, ctc_greedy: bool = False
) -> List[int]:
    """Best label sequence under the method's decoder.

    ``beam == 1`` selects greedy decoding for CTC and transducers;
    ``ctc_greedy`` decodes a joint model through its CTC head alone.
    """
    inv = model.inventory
    h = encoder_output(model, X)
    P = model.params
    labels = inv.label_ids
    m = model.method
    T = h.shape[0]
    max_len = T + 1
    if ctc_greedy:
        if "ctc.W" not in P:
            raise ContractError(f"{m} model has no CTC head")
        return ctc.ctc_greedy(ctc_lattice(model, h), inv.blank_id)
    if m == "ctc":
        lat = ctc_lattice(model, h)
        if dcfg.beam == 1 and (lm is None or beta == 0.0):
            return ctc.ctc_greedy(lat, inv.blank_id)
        hyps = ctc.ctc_prefix_beam(lat, dcfg.beam, inv.blank_id, lm=lm, beta=beta, labels=labels)
    elif m == "attention":
        hyps = att.attention_beam(
            h.data, P, dcfg.beam, max_len, bos=inv.bos_id, eos=inv.eos_id, labels=labels, lm=lm, beta=beta
        )
    elif m == "joint":
        jc = hybrid.JointDecodeConfig(
            mtl_lambda=model.mtl_lambda, decode_lambda=dcfg.decode_lambda, beam=dcfg.beam,
            beta=beta, max_len=max_len,
        )
        hyps = hybrid.one_pass_joint_beam(
            h.data, ctc_lattice(model, h), P, jc, bos=inv.bos_id, eos=inv.eos_id,
            blank=inv.blank_id, labels=labels, lm=lm,
        )
    else:
        if dcfg.beam == 1 and (lm is None or beta == 0.0):
            return transducer.rnnt_greedy(h.data, P, inv.blank_id, dcfg.max_symbols_per_frame, labels)
        hyps = transducer.rnnt_beam(
            h.data, P, dcfg.beam, inv.blank_id, labels=labels, lm=lm, beta=beta,
            max_symbols_per_frame=dcfg.max_symbols_per_frame,
        )
    return list(hyps[0].labels) if hyps else []
