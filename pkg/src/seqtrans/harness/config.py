"""Experiment configuration as nested dataclasses, read from INI files.

Sections map to the dataclasses below; keys are field names::

    [task]
    n_train = 200
    noise = 0.1

    [train]
    epochs = 10
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Tuple

from ..numerics import ContractError

METHODS = ("ctc", "attention", "transducer", "transducer-attention", "joint")
UNIT_KINDS = ("char", "subword")
LM_KINDS = ("none", "unit", "word")


@dataclass(frozen=True)
class SyntheticTask:
    alphabet_size: int = 5
    n_train: int = 200
    n_test: int = 50
    feat_dim: int = 8
    min_frames: int = 2  # frames per label, inclusive range
    max_frames: int = 4
    noise: float = 0.1
    lexicon_size: int = 12
    min_word_len: int = 2
    max_word_len: int = 4
    max_words: int = 3
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.alphabet_size <= 26:
            raise ContractError("alphabet_size must be in [1, 26]")
        if not 1 <= self.min_frames <= self.max_frames:
            raise ContractError("need 1 <= min_frames <= max_frames")
        if not 1 <= self.min_word_len <= self.max_word_len:
            raise ContractError("need 1 <= min_word_len <= max_word_len")
        if self.noise < 0:
            raise ContractError("noise must be >= 0")


@dataclass(frozen=True)
class ModelConfig:
    enc_hidden: int = 16  # per direction
    subsample: int = 1  # keep every n-th encoder frame
    att_dim: int = 32
    dec_dim: int = 32
    emb_dim: int = 8
    joint_dim: int = 8
    n_filters: int = 4
    filter_width: int = 7
    subword_size: int = 20


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    optimizer: str = "adam"  # or "sgd" (plain gradient descent)
    lr: float = 0.003
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    clip_norm: float = 5.0
    mtl_lambda: float = 0.3
    sorted_first_epoch: int = 1  # visit utterances shortest-first in epoch 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.mtl_lambda <= 1.0:
            raise ContractError("mtl_lambda must be in [0, 1]")
        if self.optimizer not in ("sgd", "adam"):
            raise ContractError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 0 or self.lr < 0 or self.clip_norm <= 0:
            raise ContractError("epochs and lr must be >= 0, clip_norm > 0")


@dataclass(frozen=True)
class DecodeConfig:
    beam: int = 30
    decode_lambda: float = 0.2
    lm_order: int = 3
    word_lm_order: int = 2
    beta_unit: float = 0.3  # character / subword LM weight
    beta_word: float = 1.0
    beta_transducer: float = 0.3  # multi-level LM weight for transducers
    max_symbols_per_frame: int = 10

    def __post_init__(self):
        if self.beam < 1:
            raise ContractError("beam must be >= 1")
        if not 0.0 <= self.decode_lambda <= 1.0:
            raise ContractError("decode_lambda must be in [0, 1]")


@dataclass(frozen=True)
class GridConfig:
    methods: Tuple[str, ...] = METHODS
    units: Tuple[str, ...] = UNIT_KINDS
    lms: Tuple[str, ...] = LM_KINDS

    def __post_init__(self):
        for name, allowed in (("methods", METHODS), ("units", UNIT_KINDS), ("lms", LM_KINDS)):
            bad = [v for v in getattr(self, name) if v not in allowed]
            if bad:
                raise ContractError(f"unknown {name}: {bad}")


@dataclass(frozen=True)
class ExperimentConfig:
    task: SyntheticTask = field(default_factory=SyntheticTask)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    grid: GridConfig = field(default_factory=GridConfig)


def _coerce(tp, raw: str):
    if tp in (int, "int"):
        return int(raw)
    if tp in (float, "float"):
        return float(raw)
    if tp in (str, "str"):
        return raw
    if "Tuple" in str(tp):
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    raise ContractError(f"unsupported config type {tp}")


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    if not parser.read(Path(path), encoding="utf-8"):
        raise ContractError(f"cannot read config {path}")
    return config_from_parser(parser)


def config_from_parser(parser: configparser.ConfigParser) -> ExperimentConfig:
    base = ExperimentConfig()
    sections = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    parts = {}
    for name in parser.sections():
        if name not in sections:
            raise ContractError(f"unknown config section [{name}]")
    for name in sections:
        current = getattr(base, name)
        if not parser.has_section(name):
            parts[name] = current
            continue
        fields = {f.name: f for f in dataclasses.fields(current)}
        updates = {}
        for key, raw in parser.items(name):
            if key not in fields:
                raise ContractError(f"unknown key {key!r} in [{name}]")
            updates[key] = _coerce(fields[key].type, raw)
        parts[name] = dataclasses.replace(current, **updates)
    return ExperimentConfig(**parts)


def dump_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser()
    for f in dataclasses.fields(cfg):
        sub = getattr(cfg, f.name)
        parser[f.name] = {
            k: ",".join(v) if isinstance(v, tuple) else repr(v) if isinstance(v, float) else str(v)
            for k, v in dataclasses.asdict(sub).items()
        }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
