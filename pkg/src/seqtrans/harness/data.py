"""Synthetic separable transduction task and dataset file I/O.

Each label (letters and the word separator) owns a random prototype vector;
an utterance repeats each label's prototype for a random number of frames
and adds Gaussian noise. Alignments are therefore known by construction.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..numerics import ContractError
from . import checkpoint
from .config import SyntheticTask


@dataclass(frozen=True)
class Utterance:
    utt_id: str
    features: np.ndarray  # (T, D)
    text: str
    alignment: Tuple[int, ...] = ()  # prototype index per frame


@dataclass(frozen=True)
class Dataset:
    train: Tuple[Utterance, ...]
    test: Tuple[Utterance, ...]
    symbols: str  # prototype order: letters, then " "
    prototypes: np.ndarray


def task_symbols(task: SyntheticTask) -> str:
    return string.ascii_lowercase[: task.alphabet_size] + " "


def make_lexicon(task: SyntheticTask, rng: np.random.Generator) -> List[str]:
    """Distinct words with no letter repeated back to back."""
    letters = string.ascii_lowercase[: task.alphabet_size]
    words: List[str] = []
    seen = set()
    attempts = 0
    while len(words) < task.lexicon_size:
        attempts += 1
        if attempts > 1000 * task.lexicon_size:
            raise ContractError("cannot draw enough distinct words; enlarge the alphabet")
        n = int(rng.integers(task.min_word_len, task.max_word_len + 1))
        w = [letters[int(rng.integers(len(letters)))]]
        while len(w) < n:
            c = letters[int(rng.integers(len(letters)))]
            if c != w[-1] or len(letters) == 1:
                w.append(c)
        word = "".join(w)
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def generate(task: SyntheticTask) -> Dataset:
    rng = np.random.default_rng(task.seed)
    symbols = task_symbols(task)
    prototypes = rng.normal(0.0, 1.0, size=(len(symbols), task.feat_dim))
    lexicon = make_lexicon(task, rng)

    def draw(prefix: str, n: int) -> Tuple[Utterance, ...]:
        out = []
        for k in range(n):
            n_words = int(rng.integers(1, task.max_words + 1))
            text = " ".join(lexicon[int(rng.integers(len(lexicon)))] for _ in range(n_words))
            align: List[int] = []
            for ch in text:
                align += [symbols.index(ch)] * int(rng.integers(task.min_frames, task.max_frames + 1))
            feats = prototypes[align] + task.noise * rng.normal(size=(len(align), task.feat_dim))
            out.append(Utterance(f"{prefix}{k:04d}", feats, text, tuple(align)))
        return tuple(out)

    train = draw("train", task.n_train)
    test = draw("test", task.n_test)
    return Dataset(train, test, symbols, prototypes)


def nearest_prototype(features: np.ndarray, prototypes: np.ndarray) -> List[int]:
    d = ((features[:, None, :] - prototypes[None, :, :]) ** 2).sum(-1)
    return np.argmin(d, axis=1).tolist()


# -- file layout: <dir>/<split>.feats (named tensors) + <dir>/<split>.txt ----


def save_split(directory, split: str, utts: Sequence[Utterance]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    checkpoint.save_tensors(d / f"{split}.feats", {u.utt_id: u.features for u in utts}, {"split": split})
    (d / f"{split}.txt").write_text("".join(f"{u.utt_id}\t{u.text}\n" for u in utts), encoding="utf-8")


def save_dataset(directory, ds: Dataset) -> None:
    save_split(directory, "train", ds.train)
    save_split(directory, "test", ds.test)


def load_split(directory, split: str) -> Tuple[Utterance, ...]:
    d = Path(directory)
    feats, _ = checkpoint.load_tensors(d / f"{split}.feats")
    texts: Dict[str, str] = {}
    for line in (d / f"{split}.txt").read_text(encoding="utf-8").splitlines():
        utt, _, text = line.partition("\t")
        texts[utt] = text
    if set(texts) != set(feats):
        raise ContractError(f"{directory}: features and transcripts list different utterances")
    return tuple(Utterance(u, feats[u], texts[u]) for u in sorted(texts))
