"""Hypothesis record and the ranking order shared by every beam search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Tuple


@dataclass(frozen=True)
class Hypothesis:
    labels: Tuple[int, ...]
    score: float
    model_score: float = 0.0
    lm_score: float = 0.0
    truncated: bool = False  # reached max_len without emitting eos


def rank_key(score: float, labels: Tuple[int, ...]):
    """Higher score first, then shorter prefix, then lexicographic labels."""
    return (-score, len(labels), labels)


def ranked(hyps: Iterable[Hypothesis]) -> List[Hypothesis]:
    return sorted(hyps, key=lambda h: (h.truncated,) + rank_key(h.score, h.labels))
