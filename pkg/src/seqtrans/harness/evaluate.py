"""Model bundles on disk, LM construction and the method x unit x LM grid."""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import lm as lmmod
from ..numerics import ContractError
from ..scoring import TableRow, render_table, report, write_records
from ..units import (
    SubwordModel,
    UnitInventory,
    build_char_inventory,
    build_subword_inventory,
    decode,
    encode,
    unigram_em_train,
)
from . import checkpoint
from .config import DecodeConfig, ExperimentConfig, ModelConfig
from .data import Utterance
from .models import Model, decode_utterance, init_model
from .train import train

log = logging.getLogger(__name__)

MODEL_NAMES = {
    "ctc": "CTC",
    "attention": "Attention",
    "transducer": "RNN-transducer",
    "transducer-attention": "RNN-transducer + attention",
    "joint": "Joint CTC-attention + joint decoding",
}
UNIT_NAMES = {"char": "char", "subword": "subword"}


# -- bundles -----------------------------------------------------------------


def build_units(unit_kind: str, texts: Sequence[str], cfg: ModelConfig):
    if unit_kind == "char":
        return build_char_inventory(texts), None
    if unit_kind == "subword":
        sw = unigram_em_train(texts, cfg.subword_size)
        return build_subword_inventory(sw), sw
    raise ContractError(f"unknown unit kind {unit_kind!r}")


def save_model(path, model: Model) -> None:
    meta = {
        "method": model.method,
        "unit_kind": model.unit_kind,
        "units": list(model.inventory.units),
        "inventory_kind": model.inventory.kind,
        "subword": None if model.subword is None else sorted(model.subword.vocab.items()),
        "model_config": dataclasses.asdict(model.cfg),
        "mtl_lambda": model.mtl_lambda,
    }
    checkpoint.save_tensors(path, model.params, meta)


def load_model(path) -> Model:
    params, meta = checkpoint.load_tensors(path)
    try:
        inv = UnitInventory(tuple(meta["units"]), meta["inventory_kind"])
        sw = None if meta["subword"] is None else SubwordModel({p: lp for p, lp in meta["subword"]})
        return Model(
            meta["method"], meta["unit_kind"], inv, params, ModelConfig(**meta["model_config"]),
            sw, meta["mtl_lambda"],
        )
    except KeyError as err:
        raise ContractError(f"{path}: checkpoint metadata lacks {err}") from None


def train_model(method: str, unit_kind: str, train_utts: Sequence[Utterance], cfg: ExperimentConfig):
    inv, sw = build_units(unit_kind, [u.text for u in train_utts], cfg.model)
    rng = np.random.default_rng(cfg.train.seed)
    feat_dim = train_utts[0].features.shape[1]
    model = init_model(method, unit_kind, inv, feat_dim, cfg.model, rng, sw, cfg.train.mtl_lambda)
    return train(model, train_utts, cfg.train)


# -- language models -----------------------------------------------------------


def unit_tokens(model: Model, text: str) -> List[str]:
    return [model.inventory.units[i] for i in encode(text, model.inventory, model.subword)]


def build_lm(model: Model, texts: Sequence[str], lm_kind: str, dcfg: DecodeConfig):
    """Label-level scorer for ``lm_kind`` or ``None`` when the cell does not apply."""
    if lm_kind == "none":
        return None
    unit_lm = lmmod.train_ngram([unit_tokens(model, t) for t in texts], dcfg.lm_order)
    if lm_kind == "unit":
        return lmmod.LabelLM(unit_lm, model.inventory)
    if lm_kind == "word":
        if model.inventory.kind != "character":
            return None
        word_lm = lmmod.train_ngram([t.split() for t in texts], dcfg.word_lm_order)
        return lmmod.LabelLM(lmmod.MultiLevelLM(unit_lm, word_lm), model.inventory)
    raise ContractError(f"unknown LM kind {lm_kind!r}")


def beta_for(method: str, lm_kind: str, dcfg: DecodeConfig) -> float:
    if lm_kind == "none":
        return 0.0
    if method.startswith("transducer"):
        return dcfg.beta_transducer
    return dcfg.beta_word if lm_kind == "word" else dcfg.beta_unit


def lm_label(model: Model, lm_kind: str) -> Tuple[str, str]:
    """(Lexicon, LM) column texts."""
    if lm_kind == "none":
        return "None", "None"
    if lm_kind == "unit":
        return "None", f"{model.unit_kind} n-gram"
    return "", "word n-gram (multi-level)"


# -- decoding and scoring -------------------------------------------------------


def decode_corpus(
    model: Model, utts: Sequence[Utterance], dcfg: DecodeConfig, lm=None, beta: float = 0.0,
    ctc_greedy: bool = False,
) -> List[Tuple[str, str]]:
    return [
        (u.utt_id, decode(decode_utterance(model, u.features, dcfg, lm, beta, ctc_greedy), model.inventory))
        for u in utts
    ]


def score_cell(refs: Sequence[str], hyps: Sequence[str]):
    return report(refs, hyps, "char"), report(refs, hyps, "word")


@dataclass
class Cell:
    method: str
    unit_kind: str
    lm_kind: str
    row: TableRow
    hyps: List[Tuple[str, str]]


def evaluate(
    checkpoints: Dict[Tuple[str, str], Path],
    train_texts: Sequence[str],
    test: Sequence[Utterance],
    cfg: ExperimentConfig,
) -> List[Cell]:
    """Decode and score every requested (method, unit, LM) cell.

    Missing checkpoints give an ``absent`` row; cells an LM cannot serve
    (word LM on subword units) are skipped.
    """
    refs = [u.text for u in test]
    cells: List[Cell] = []
    grid = cfg.grid
    for method in grid.methods:
        for unit_kind in grid.units:
            path = checkpoints.get((method, unit_kind))
            if path is None or not Path(path).exists():
                log.warning("no checkpoint for %s/%s", method, unit_kind)
                row = TableRow(MODEL_NAMES[method], UNIT_NAMES[unit_kind], "", "", wer_text="absent")
                cells.append(Cell(method, unit_kind, "", row, []))
                continue
            model = load_model(path)
            for lm_kind in grid.lms:
                lm = build_lm(model, train_texts, lm_kind, cfg.decode)
                if lm is None and lm_kind != "none":
                    continue
                beta = beta_for(method, lm_kind, cfg.decode)
                hyps = decode_corpus(model, test, cfg.decode, lm, beta)
                c_rep, w_rep = score_cell(refs, [h for _, h in hyps])
                lexicon, lm_name = lm_label(model, lm_kind)
                if lm_kind == "word":
                    lexicon = str(len({w for t in train_texts for w in t.split()}))
                row = TableRow(MODEL_NAMES[method], UNIT_NAMES[unit_kind], lexicon, lm_name, c_rep, w_rep)
                cells.append(Cell(method, unit_kind, lm_kind, row, hyps))
    return cells


def run_grid(cfg: ExperimentConfig, train_utts, test_utts, out_dir) -> List[Cell]:
    """Train every (method, unit) model, then decode the grid; write results."""
    out = Path(out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    ckpts: Dict[Tuple[str, str], Path] = {}
    curves = []
    for method in cfg.grid.methods:
        for unit_kind in cfg.grid.units:
            res = train_model(method, unit_kind, train_utts, cfg)
            path = out / "checkpoints" / f"{method}_{unit_kind}.bin"
            save_model(path, res.model)
            ckpts[(method, unit_kind)] = path
            curves.append({"method": method, "units": unit_kind, "epoch_losses": res.epoch_losses})
    (out / "train_curves.jsonl").write_text(
        "".join(json.dumps(c, sort_keys=True) + "\n" for c in curves), encoding="utf-8"
    )
    cells = evaluate(ckpts, [u.text for u in train_utts], test_utts, cfg)
    write_results(out, cells)
    return cells


def write_results(out_dir, cells: Sequence[Cell]) -> None:
    out = Path(out_dir)
    rows = [c.row for c in cells]
    (out / "results.txt").write_text(render_table(rows), encoding="utf-8")
    write_records(out / "results.jsonl", rows)
    hyp_dir = out / "hyps"
    hyp_dir.mkdir(exist_ok=True)
    for c in cells:
        if c.hyps:
            name = f"{c.method}_{c.unit_kind}_{c.lm_kind}.txt"
            (hyp_dir / name).write_text("".join(f"{u}\t{t}\n" for u, t in c.hyps), encoding="utf-8")
