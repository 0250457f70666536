"""Acoustic-unit inventories and text <-> unit-ID codecs.

Character inventories map every textual character to one unit and spaces to
``<space>``. Subword inventories come from a unigram piece model: each word is
prefixed with the boundary marker ``▁`` before segmentation, so word-initial
pieces carry the marker and detokenisation is unambiguous.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

WORD_MARK = "▁"
SPACE, BLANK, BOS, EOS = "<space>", "<blank>", "<bos>", "<eos>"
SPECIALS = (SPACE, BLANK, BOS, EOS)

MAX_PIECE_LENGTH = 8
SEED_FACTOR = 20
EM_SWEEPS = 2
PRUNE_FRACTION = 0.2

# 26 Latin letters, 14 letters with a diacritic and the apostrophe.
FRENCH_DIACRITICS = "àâçèéêëîïôùûüÿ"
FRENCH_CHARACTERS = "'" + "abcdefghijklmnopqrstuvwxyz" + FRENCH_DIACRITICS


class EncodeError(ValueError):
    def __init__(self, symbol: str, position: int):
        super().__init__(f"cannot encode {symbol!r} at position {position}")
        self.symbol = symbol
        self.position = position


def _is_special(unit: str) -> bool:
    return len(unit) > 2 and unit.startswith("<") and unit.endswith(">")


@dataclass(frozen=True)
class UnitInventory:
    units: Tuple[str, ...]
    kind: str  # "character" | "subword" | "word"

    def __post_init__(self):
        if len(set(self.units)) != len(self.units):
            raise ValueError("duplicate units in inventory")
        if any(not u for u in self.units):
            raise ValueError("empty unit string")
        for sp in (BLANK, BOS, EOS):
            if sp not in self.units:
                raise ValueError(f"inventory lacks {sp}")
        if self.kind == "character" and SPACE not in self.units:
            raise ValueError("character inventory lacks <space>")

    def __len__(self) -> int:
        return len(self.units)

    @cached_property
    def index(self) -> Dict[str, int]:
        return {u: i for i, u in enumerate(self.units)}

    def id(self, unit: str) -> int:
        return self.units.index(unit)

    @property
    def blank_id(self) -> int:
        return self.units.index(BLANK)

    @property
    def bos_id(self) -> int:
        return self.units.index(BOS)

    @property
    def eos_id(self) -> int:
        return self.units.index(EOS)

    @property
    def space_id(self) -> Optional[int]:
        return self.units.index(SPACE) if SPACE in self.units else None

    @property
    def textual_ids(self) -> List[int]:
        return [i for i, u in enumerate(self.units) if not _is_special(u)]

    @property
    def label_ids(self) -> List[int]:
        """IDs a decoder may emit as labels (textual units plus space)."""
        sp = self.space_id
        return sorted(self.textual_ids + ([] if sp is None else [sp]))

    def save(self, path) -> None:
        Path(path).write_text("".join(u + "\n" for u in self.units), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "UnitInventory":
        units = tuple(Path(path).read_text(encoding="utf-8").split("\n")[:-1])
        if SPACE in units:
            kind = "character"
        elif any(u.startswith(WORD_MARK) for u in units):
            kind = "subword"
        else:
            kind = "word"
        return cls(units, kind)


def build_char_inventory(corpus: Iterable[str]) -> UnitInventory:
    """Inventory of every character observed in a normalised corpus.

    Textual characters are sorted by codepoint; ``<space>``, ``<blank>``,
    ``<bos>`` and ``<eos>`` follow.
    """
    chars = set()
    n_lines = 0
    for line in corpus:
        n_lines += 1
        chars.update(line)
    chars.discard(" ")
    if n_lines == 0 or not chars:
        raise ValueError("empty corpus")
    return UnitInventory(tuple(sorted(chars)) + SPECIALS, "character")


def build_subword_inventory(model: "SubwordModel") -> UnitInventory:
    return UnitInventory(tuple(sorted(model.vocab)) + (BLANK, BOS, EOS), "subword")


# ---------------------------------------------------------------------------
# unigram piece model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubwordModel:
    vocab: Mapping[str, float]  # piece -> natural-log unigram probability
    max_piece_length: int = MAX_PIECE_LENGTH

    def __post_init__(self):
        if any(lp > 0 for lp in self.vocab.values()):
            raise ValueError("piece log-probabilities must be <= 0")

    def __len__(self) -> int:
        return len(self.vocab)

    def save(self, path) -> None:
        lines = [f"{p}\t{lp!r}\n" for p, lp in sorted(self.vocab.items())]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path, max_piece_length: int = MAX_PIECE_LENGTH) -> "SubwordModel":
        vocab = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            piece, lp = line.split("\t")
            vocab[piece] = float(lp)
        return cls(vocab, max_piece_length)


def _seg_key(score: float, pieces: Sequence[str]):
    # larger score, then fewer pieces, then lexicographically earliest pieces
    return (-score, len(pieces), tuple(pieces))


def _viterbi(word: str, vocab: Mapping[str, float], max_len: int, exclude: str = None):
    n = len(word)
    # best[i] = (score, pieces) for the suffix word[i:]
    best: List[Optional[Tuple[float, List[str]]]] = [None] * (n + 1)
    best[n] = (0.0, [])
    for i in range(n - 1, -1, -1):
        cand = None
        for j in range(i + 1, min(n, i + max_len) + 1):
            piece = word[i:j]
            if piece == exclude or piece not in vocab or best[j] is None:
                continue
            s = vocab[piece] + best[j][0]
            pieces = [piece] + best[j][1]
            if cand is None or _seg_key(s, pieces) < _seg_key(*cand):
                cand = (s, pieces)
        best[i] = cand
    return best[0]


def unigram_viterbi_segment(word: str, model: SubwordModel) -> List[str]:
    """Most probable segmentation of ``word`` under the unigram model.

    Ties go to fewer pieces, then to the lexicographically earliest pieces.
    """
    for pos, ch in enumerate(word):
        if ch not in model.vocab:
            raise EncodeError(ch, pos)
    res = _viterbi(word, model.vocab, model.max_piece_length)
    return res[1] if res else []


def segmentation_score(pieces: Sequence[str], model: SubwordModel) -> float:
    return float(sum(model.vocab[p] for p in pieces))


def _word_counts(corpus: Iterable[str]) -> Counter:
    counts: Counter = Counter()
    for line in corpus:
        for w in line.split():
            counts[WORD_MARK + w] += 1
    return counts


def _expected_counts(word_counts: Mapping[str, int], vocab: Mapping[str, float], max_len: int):
    """E-step: expected piece counts by forward-backward over each word lattice."""
    counts: Dict[str, float] = dict.fromkeys(vocab, 0.0)
    nll = 0.0
    for word, freq in word_counts.items():
        n = len(word)
        edges = [
            (i, j, word[i:j])
            for i in range(n)
            for j in range(i + 1, min(n, i + max_len) + 1)
            if word[i:j] in vocab
        ]
        fwd = np.full(n + 1, -np.inf)
        fwd[0] = 0.0
        for i, j, p in edges:  # edges sorted by start
            fwd[j] = np.logaddexp(fwd[j], fwd[i] + vocab[p])
        bwd = np.full(n + 1, -np.inf)
        bwd[n] = 0.0
        for i, j, p in reversed(edges):
            bwd[i] = np.logaddexp(bwd[i], vocab[p] + bwd[j])
        z = fwd[n]
        nll -= freq * z
        for i, j, p in edges:
            counts[p] += freq * math.exp(fwd[i] + vocab[p] + bwd[j] - z)
    return counts, nll


def _normalise(counts: Mapping[str, float]) -> Dict[str, float]:
    floor = 1e-8
    total = sum(max(c, floor) for c in counts.values())
    return {p: math.log(max(c, floor) / total) for p, c in counts.items()}


def viterbi_nll(words: Mapping[str, int], model: SubwordModel) -> float:
    """Frequency-weighted negative Viterbi log-likelihood of marked words."""
    total = 0.0
    for w, f in words.items():
        res = _viterbi(w, model.vocab, model.max_piece_length)
        total -= f * (res[0] if res else -np.inf)
    return total


def pruning_loss(model: SubwordModel, removed: Iterable[str], words: Mapping[str, int]) -> float:
    """Loss accounted to removing ``removed`` pieces, evaluated on ``words``.

    Every Viterbi occurrence of a removed piece is charged the score gap to
    that piece's best re-segmentation over the surviving vocabulary.
    Re-segmenting each occurrence is one valid segmentation of the pruned
    model, so the pruned Viterbi NLL never exceeds the old NLL plus this loss.
    """
    removed = set(removed)
    kept = {p: lp for p, lp in model.vocab.items() if p not in removed}
    usage: Counter = Counter()
    for w, f in words.items():
        res = _viterbi(w, model.vocab, model.max_piece_length)
        if res:
            for p in res[1]:
                if p in removed:
                    usage[p] += f
    loss = 0.0
    for p, f in usage.items():
        alt = _viterbi(p, kept, model.max_piece_length)
        loss += f * (model.vocab[p] - (alt[0] if alt else -np.inf))
    return loss


def _piece_losses(word_counts, model: SubwordModel) -> Dict[str, float]:
    usage: Counter = Counter()
    for w, f in word_counts.items():
        res = _viterbi(w, model.vocab, model.max_piece_length)
        if res:
            for p in res[1]:
                usage[p] += f
    losses = {}
    for p, lp in model.vocab.items():
        if len(p) == 1:
            continue
        f = usage.get(p, 0)
        if f == 0:
            losses[p] = 0.0
            continue
        alt = _viterbi(p, model.vocab, model.max_piece_length, exclude=p)
        losses[p] = f * (lp - alt[0])
    return losses


def unigram_em_train(
    corpus: Iterable[str],
    target_size: int,
    seed_size: Optional[int] = None,
    max_piece_length: int = MAX_PIECE_LENGTH,
) -> SubwordModel:
    """Train a unigram piece vocabulary of exactly ``target_size`` pieces.

    Seeds with the ``seed_size`` most frequent multi-character substrings plus
    every character, then alternates two EM sweeps with pruning of the 20% of
    multi-character pieces whose removal costs the least Viterbi likelihood.
    Single characters are never pruned.
    """
    word_counts = _word_counts(corpus)
    if not word_counts:
        raise ValueError("empty corpus")
    if seed_size is None:
        seed_size = SEED_FACTOR * target_size
    chars = sorted({c for w in word_counts for c in w})
    if target_size < len(chars):
        raise ValueError(f"target_size {target_size} below character count {len(chars)}")
    if seed_size < target_size:
        raise ValueError("seed_size must be >= target_size")

    sub: Counter = Counter()
    for w, f in word_counts.items():
        for i in range(len(w)):
            for j in range(i + 2, min(len(w), i + max_piece_length) + 1):
                sub[w[i:j]] += f
    seeds = sorted(sub.items(), key=lambda kv: (-kv[1], kv[0]))[:seed_size]
    char_freq: Counter = Counter()
    for w, f in word_counts.items():
        for c in w:
            char_freq[c] += f
    init = {p: float(f) for p, f in seeds}
    init.update({c: float(char_freq[c]) for c in chars})
    if len(init) < target_size:
        raise ValueError(
            f"corpus supports only {len(init)} pieces, fewer than target {target_size}"
        )
    vocab = _normalise(init)

    while True:
        for _ in range(EM_SWEEPS):
            counts, _ = _expected_counts(word_counts, vocab, max_piece_length)
            vocab = _normalise(counts)
        if len(vocab) == target_size:
            break
        model = SubwordModel(vocab, max_piece_length)
        losses = _piece_losses(word_counts, model)
        n_prune = min(
            max(1, math.ceil(PRUNE_FRACTION * len(losses))), len(vocab) - target_size
        )
        doomed = sorted(losses, key=lambda p: (losses[p], p))[:n_prune]
        for p in doomed:
            del vocab[p]
        vocab = _normalise({p: math.exp(lp) for p, lp in vocab.items()})
    return SubwordModel(vocab, max_piece_length)


# ---------------------------------------------------------------------------
# codecs
# ---------------------------------------------------------------------------


def encode(text: str, inventory: UnitInventory, model: Optional[SubwordModel] = None) -> List[int]:
    """Map normalised text to unit IDs (``model`` required for subwords)."""
    index = inventory.index
    if inventory.kind == "character":
        ids = []
        for pos, ch in enumerate(text):
            unit = SPACE if ch == " " else ch
            if unit not in index:
                raise EncodeError(ch, pos)
            ids.append(index[unit])
        return ids
    if inventory.kind == "subword":
        if model is None:
            raise ValueError("subword encoding needs a SubwordModel")
        ids = []
        pos = 0
        for word in text.split(" "):
            if not word:
                pos += 1
                continue
            try:
                pieces = unigram_viterbi_segment(WORD_MARK + word, model)
            except EncodeError as err:
                raise EncodeError(err.symbol, pos + err.position - 1) from None
            for p in pieces:
                if p not in index:
                    raise EncodeError(p, pos)
                ids.append(index[p])
            pos += len(word) + 1
        return ids
    ids = []
    pos = 0
    for word in text.split():
        if word not in index:
            raise EncodeError(word, pos)
        ids.append(index[word])
        pos += len(word) + 1
    return ids


def decode(ids: Sequence[int], inventory: UnitInventory) -> str:
    """Inverse of :func:`encode`; special units other than space are dropped."""
    units = inventory.units
    if inventory.kind == "character":
        return "".join(
            " " if units[i] == SPACE else units[i]
            for i in ids
            if units[i] == SPACE or not _is_special(units[i])
        )
    if inventory.kind == "subword":
        text = "".join(units[i] for i in ids if not _is_special(units[i]))
        return text.replace(WORD_MARK, " ").strip()
    return " ".join(units[i] for i in ids if not _is_special(units[i]))


def words_of(inventory: UnitInventory) -> List[str]:
    return [u for u in inventory.units if not _is_special(u)]


__all__ = [
    "WORD_MARK", "SPACE", "BLANK", "BOS", "EOS", "FRENCH_CHARACTERS",
    "EncodeError", "UnitInventory", "SubwordModel",
    "build_char_inventory", "build_subword_inventory",
    "unigram_viterbi_segment", "segmentation_score", "unigram_em_train",
    "viterbi_nll", "pruning_loss", "encode", "decode",
]
