"""Decoding-time language models: backoff n-grams, a uniform null model,
shallow fusion and multi-level word/character combination.

Every scorer exposes the same three methods, all pure:

    state = lm.initial_state()
    logprob, state = lm.score(state, token)
    logprob = lm.final(state)          # end-of-sentence term

Tokens are unit strings (characters with ``<space>`` as the boundary,
subword pieces, or words). :class:`LabelLM` adapts a scorer to the integer
label IDs the decoders work with.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .units import SPACE, UnitInventory

BOS_TOKEN, EOS_TOKEN, UNK = "<s>", "</s>", "<unk>"
LN10 = math.log(10.0)
DEFAULT_OOV_LOGPROB = math.log(1e-5)


@dataclass(frozen=True)
class LMState:
    history: Tuple[str, ...] = ()


@dataclass
class NGramLM:
    """Interpolated absolute-discount (Kneser-Ney style) n-gram in backoff form.

    ``probs`` holds the full interpolated natural-log probability of every
    observed n-gram; ``backoff`` the log interpolation weight of each context.
    Unseen events back off recursively down to the unigram level, which covers
    the whole vocabulary plus ``<unk>``.
    """

    order: int
    vocab: Tuple[str, ...]
    probs: Dict[Tuple[str, ...], float]
    backoff: Dict[Tuple[str, ...], float]
    sentence_markers: bool = True
    discount: Optional[float] = None

    def __post_init__(self):
        self._vocab_set = frozenset(self.vocab)

    def __contains__(self, token: str) -> bool:
        return token in self._vocab_set

    @property
    def unk_logprob(self) -> float:
        return self.probs[(UNK,)]

    def logprob(self, context: Sequence[str], token: str) -> float:
        if token not in self._vocab_set:
            token = UNK
        context = tuple(context)[-(self.order - 1):] if self.order > 1 else ()
        lp = 0.0
        while True:
            gram = context + (token,)
            if gram in self.probs:
                return lp + self.probs[gram]
            lp += self.backoff.get(context, 0.0)
            context = context[1:]

    def initial_state(self) -> LMState:
        if self.sentence_markers and self.order > 1:
            return LMState((BOS_TOKEN,))
        return LMState(())

    def score(self, state: LMState, token: str) -> Tuple[float, LMState]:
        lp = self.logprob(state.history, token)
        if self.order == 1:
            return lp, state
        tok = token if token in self._vocab_set else UNK
        return lp, LMState((state.history + (tok,))[-(self.order - 1):])

    def final(self, state: LMState) -> float:
        return self.logprob(state.history, EOS_TOKEN) if self.sentence_markers else 0.0

    def sentence_logprob(self, tokens: Sequence[str], with_end: bool = True) -> float:
        state = self.initial_state()
        total = 0.0
        for t in tokens:
            lp, state = self.score(state, t)
            total += lp
        return total + (self.final(state) if with_end else 0.0)

    # -- ARPA text interchange (log10 on disk, natural log in memory) ------

    def save_arpa(self, path) -> None:
        by_order: Dict[int, List[Tuple[str, ...]]] = defaultdict(list)
        for gram in self.probs:
            by_order[len(gram)].append(gram)
        if self.sentence_markers and self.order > 1:
            by_order[1].append((BOS_TOKEN,))
        lines = ["\\data\\"]
        for n in range(1, self.order + 1):
            lines.append(f"ngram {n}={len(by_order[n])}")
        for n in range(1, self.order + 1):
            lines.append("")
            lines.append(f"\\{n}-grams:")
            for gram in sorted(by_order[n]):
                lp = -99.0 if gram == (BOS_TOKEN,) else self.probs[gram] / LN10
                row = f"{lp!r}\t{' '.join(gram)}"
                if gram in self.backoff and n < self.order:
                    row += f"\t{self.backoff[gram] / LN10!r}"
                lines.append(row)
        lines += ["", "\\end\\", ""]
        Path(path).write_text("\n".join(lines), encoding="utf-8")

    @classmethod
    def load_arpa(cls, path) -> "NGramLM":
        probs, backoff = {}, {}
        order = 0
        section = 0
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line == "\\data\\" or line == "\\end\\":
                continue
            if line.startswith("ngram "):
                order = max(order, int(line[6:].split("=")[0]))
                continue
            if line.startswith("\\") and line.endswith("-grams:"):
                section = int(line[1:].split("-")[0])
                continue
            parts = line.split("\t")
            gram = tuple(parts[1].split(" "))
            if len(gram) != section:
                raise ValueError(f"malformed ARPA line: {line!r}")
            if gram != (BOS_TOKEN,):
                probs[gram] = float(parts[0]) * LN10
            if len(parts) > 2:
                backoff[gram] = float(parts[2]) * LN10
        vocab = tuple(sorted(g[0] for g in probs if len(g) == 1 and g[0] != UNK))
        markers = EOS_TOKEN in vocab
        return cls(order, vocab, probs, backoff, markers)


def train_ngram(
    corpus: Iterable[Sequence[str]],
    order: int,
    discount: float = 0.7,
    sentence_markers: bool = True,
) -> NGramLM:
    """Estimate an interpolated KN-style n-gram with a single discount.

    The highest order uses raw counts; lower orders use continuation counts
    (number of distinct left contexts), except for n-grams anchored at the
    sentence start, which keep raw counts.
    """
    if not 1 <= order <= 5:
        raise ValueError("order must be in [1, 5]")
    if not 0.0 < discount < 1.0:
        raise ValueError("discount must be in (0, 1)")
    sentences = [list(s) for s in corpus]
    if not any(sentences):
        raise ValueError("empty corpus")

    raw: List[Counter] = [Counter() for _ in range(order + 1)]
    vocab = set()
    for sent in sentences:
        vocab.update(sent)
        toks = ([BOS_TOKEN] + sent + [EOS_TOKEN]) if sentence_markers else sent
        for n in range(1, order + 1):
            for i in range(len(toks) - n + 1):
                gram = tuple(toks[i : i + n])
                if gram[-1] == BOS_TOKEN:
                    continue
                raw[n][gram] += 1
    if sentence_markers:
        vocab.add(EOS_TOKEN)
    vocab.discard(BOS_TOKEN)

    counts: List[Counter] = [Counter() for _ in range(order + 1)]
    counts[order] = raw[order]
    for n in range(order - 1, 0, -1):
        cont: Counter = Counter()
        for gram in raw[n + 1]:
            cont[gram[1:]] += 1
        for gram, c in raw[n].items():
            if gram[0] == BOS_TOKEN:
                cont[gram] = c
        counts[n] = cont

    probs: Dict[Tuple[str, ...], float] = {}
    backoff: Dict[Tuple[str, ...], float] = {}
    d = discount

    total = sum(counts[1].values())
    n_types = len(counts[1])
    floor = d * n_types / total / (len(vocab) + 1)
    uni = {}
    for w in sorted(vocab) + [UNK]:
        c = counts[1].get((w,), 0)
        uni[w] = max(c - d, 0.0) / total + floor
        probs[(w,)] = math.log(uni[w])

    for n in range(2, order + 1):
        ctx_total: Counter = Counter()
        ctx_types: Counter = Counter()
        for gram, c in counts[n].items():
            ctx_total[gram[:-1]] += c
            ctx_types[gram[:-1]] += 1
        for ctx, tot in ctx_total.items():
            backoff[ctx] = math.log(d * ctx_types[ctx] / tot)
        lm_lower = NGramLM(n - 1, tuple(sorted(vocab)), dict(probs), dict(backoff), sentence_markers)
        for gram, c in counts[n].items():
            ctx = gram[:-1]
            lower = math.exp(lm_lower.logprob(ctx[1:], gram[-1]))
            probs[gram] = math.log((c - d) / ctx_total[ctx] + math.exp(backoff[ctx]) * lower)
    return NGramLM(order, tuple(sorted(vocab)), probs, backoff, sentence_markers, discount)


@dataclass(frozen=True)
class UniformLM:
    """Null model assigning ``-ln |V|`` to every token."""

    size: int

    def initial_state(self) -> LMState:
        return LMState(())

    def score(self, state: LMState, token: str) -> Tuple[float, LMState]:
        return -math.log(self.size), state

    def final(self, state: LMState) -> float:
        return 0.0


def lm_score(lm, state, token):
    return lm.score(state, token)


def fuse(model_score: float, lm_logprob: float, beta: float) -> float:
    """Shallow fusion; ``beta == 0`` returns ``model_score`` untouched."""
    if beta == 0.0:
        return model_score
    return model_score + beta * lm_logprob


# ---------------------------------------------------------------------------
# multi-level word/character combination
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MultiLevelState:
    char_state: LMState
    word_state: LMState
    acc: float = 0.0  # character-LM score accumulated inside the current word
    buffer: str = ""  # characters of the current word


def multilevel_score(
    state: MultiLevelState,
    char_token: str,
    char_lm,
    word_lm,
    oov_logprob: float = DEFAULT_OOV_LOGPROB,
    boundary: str = SPACE,
) -> Tuple[float, MultiLevelState]:
    """Character LM inside a word, replaced by the word LM at each boundary.

    At the boundary the accumulated character-LM score is subtracted so the
    word contributes exactly its word-LM log-probability. Out-of-vocabulary
    words keep their character-LM score (boundary included) and pay
    ``oov_logprob``.
    """
    lp_char, char_state = char_lm.score(state.char_state, char_token)
    if char_token != boundary:
        return lp_char, MultiLevelState(
            char_state, state.word_state, state.acc + lp_char, state.buffer + char_token
        )
    word = state.buffer
    if not word:
        return lp_char, MultiLevelState(char_state, state.word_state)
    if word in word_lm:
        lp_word, word_state = word_lm.score(state.word_state, word)
        delta = lp_word - state.acc
    else:
        _, word_state = word_lm.score(state.word_state, UNK)
        delta = lp_char + oov_logprob
    return delta, MultiLevelState(char_state, word_state)


@dataclass
class MultiLevelLM:
    char_lm: object
    word_lm: NGramLM
    oov_logprob: float = DEFAULT_OOV_LOGPROB
    boundary: str = SPACE

    def initial_state(self) -> MultiLevelState:
        return MultiLevelState(self.char_lm.initial_state(), self.word_lm.initial_state())

    def score(self, state: MultiLevelState, token: str):
        return multilevel_score(
            state, token, self.char_lm, self.word_lm, self.oov_logprob, self.boundary
        )

    def final(self, state: MultiLevelState) -> float:
        lp = 0.0
        if state.buffer:
            lp, state = self.score(state, self.boundary)
        return lp + self.word_lm.final(state.word_state)


@dataclass
class LabelLM:
    """Applies a token scorer to decoder label IDs via an inventory."""

    scorer: object
    inventory: UnitInventory

    def initial_state(self):
        return self.scorer.initial_state()

    def score(self, state, label: int):
        return self.scorer.score(state, self.inventory.units[label])

    def final(self, state) -> float:
        return self.scorer.final(state)


def char_tokens(text: str) -> List[str]:
    """Character-LM tokens of a normalised line (spaces become ``<space>``)."""
    return [SPACE if c == " " else c for c in text]
