"""Text normalisation, weighted Levenshtein alignment and CER/WER reports."""

from __future__ import annotations

import json
import math
import unicodedata
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .numerics import ContractError

MATCH, SUB, DEL, INS = "C", "S", "D", "I"
_APOSTROPHES = {"’": "'", "ʼ": "'", "‘": "'"}


@dataclass(frozen=True)
class NormalizationRules:
    lowercase: bool = True
    keep_apostrophe: bool = True
    keep_internal_hyphen: bool = True
    unify_apostrophes: bool = True  # typographic quotes become ASCII '


@dataclass(frozen=True)
class AlignCosts:
    sub: int = 4
    dele: int = 3
    ins: int = 3

    @classmethod
    def uniform(cls) -> "AlignCosts":
        return cls(1, 1, 1)


def normalize_text(line: str, rules: NormalizationRules = NormalizationRules()) -> str:
    """Lowercase, drop punctuation (apostrophes and word-internal hyphens kept),
    collapse whitespace."""
    text = unicodedata.normalize("NFC", line)
    if rules.unify_apostrophes:
        text = "".join(_APOSTROPHES.get(c, c) for c in text)
    if rules.lowercase:
        text = text.lower()
    out = []
    for i, c in enumerate(text):
        if c.isalnum() or c.isspace():
            out.append(c)
        elif c == "'" and rules.keep_apostrophe:
            out.append(c)
        elif c == "-" and rules.keep_internal_hyphen and 0 < i < len(text) - 1 \
                and text[i - 1].isalnum() and text[i + 1].isalnum():
            out.append(c)
        else:
            out.append(" ")
    return " ".join("".join(out).split())


def align(
    ref: Sequence, hyp: Sequence, costs: AlignCosts = AlignCosts()
) -> List[Tuple[str, Optional[object], Optional[object]]]:
    """Minimum-cost edit script as ``(op, ref_token, hyp_token)`` triples.

    Among equal-cost alignments the backtrace prefers match, then
    substitution, then deletion, then insertion.
    """
    n, m = len(ref), len(hyp)
    D = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        D[i][0] = i * costs.dele
    for j in range(1, m + 1):
        D[0][j] = j * costs.ins
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = D[i - 1][j - 1] + (0 if ref[i - 1] == hyp[j - 1] else costs.sub)
            D[i][j] = min(diag, D[i - 1][j] + costs.dele, D[i][j - 1] + costs.ins)
    ops = []
    i, j = n, m
    while i or j:
        if i and j:
            same = ref[i - 1] == hyp[j - 1]
            if same and D[i][j] == D[i - 1][j - 1]:
                ops.append((MATCH, ref[i - 1], hyp[j - 1]))
                i, j = i - 1, j - 1
                continue
            if not same and D[i][j] == D[i - 1][j - 1] + costs.sub:
                ops.append((SUB, ref[i - 1], hyp[j - 1]))
                i, j = i - 1, j - 1
                continue
        if i and D[i][j] == D[i - 1][j] + costs.dele:
            ops.append((DEL, ref[i - 1], None))
            i -= 1
        else:
            ops.append((INS, None, hyp[j - 1]))
            j -= 1
    ops.reverse()
    return ops


def alignment_cost(ops, costs: AlignCosts = AlignCosts()) -> int:
    weight = {MATCH: 0, SUB: costs.sub, DEL: costs.dele, INS: costs.ins}
    return sum(weight[op] for op, _, _ in ops)


def percent_tenths(count: int, total: int) -> int:
    """``100 * count / total`` in tenths of a percent, rounded half up exactly."""
    return math.floor(Fraction(1000 * count, total) + Fraction(1, 2))


def format_tenths(tenths: int) -> str:
    return f"{tenths // 10}.{tenths % 10}"


@dataclass(frozen=True)
class ErrorReport:
    unit: str
    n_ref: int
    correct: int
    substitutions: int
    deletions: int
    insertions: int

    def __post_init__(self):
        if self.correct + self.substitutions + self.deletions != self.n_ref:
            raise ContractError("correct + substitutions + deletions must equal n_ref")

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    def _tenths(self, count: int) -> int:
        if self.n_ref == 0:
            if count:
                raise ContractError("rate undefined for an empty reference")
            return 0
        return percent_tenths(count, self.n_ref)

    def percent(self, field: str) -> float:
        return self._tenths(self._count(field)) / 10

    def percent_str(self, field: str) -> str:
        return format_tenths(self._tenths(self._count(field)))

    def _count(self, field: str) -> int:
        return self.errors if field == "error" else getattr(self, field)

    @property
    def error_rate(self) -> float:
        return self.percent("error")

    def as_record(self) -> Dict[str, object]:
        rec = asdict(self)
        for f in ("correct", "substitutions", "deletions", "insertions", "error"):
            rec[f + "_pct"] = self.percent_str(f)
        return rec


def tokens(text: str, unit: str) -> List[str]:
    if unit == "char":
        return [c for c in text if not c.isspace()]
    if unit == "word":
        return text.split()
    raise ContractError(f"unknown scoring unit {unit!r}")


def report(
    refs: Sequence[str],
    hyps: Sequence[str],
    unit: str,
    costs: AlignCosts = AlignCosts(),
    rules: Optional[NormalizationRules] = None,
) -> ErrorReport:
    """Aggregate alignment counts over a corpus; ``unit`` is ``char`` or ``word``.

    Character scoring removes spaces before aligning. Pass ``rules`` to
    normalise both sides first.
    """
    if len(refs) != len(hyps):
        raise ContractError(f"{len(refs)} references but {len(hyps)} hypotheses")
    counts = {MATCH: 0, SUB: 0, DEL: 0, INS: 0}
    n_ref = 0
    for r, h in zip(refs, hyps):
        if rules is not None:
            r, h = normalize_text(r, rules), normalize_text(h, rules)
        rt, ht = tokens(r, unit), tokens(h, unit)
        n_ref += len(rt)
        for op, _, _ in align(rt, ht, costs):
            counts[op] += 1
    return ErrorReport(unit, n_ref, counts[MATCH], counts[SUB], counts[DEL], counts[INS])


# ---------------------------------------------------------------------------
# files, tables, records
# ---------------------------------------------------------------------------


def read_transcripts(path) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        utt, sep, text = line.partition("\t")
        if not sep:
            raise ContractError(f"{path}:{n}: expected 'utt-id<TAB>text'")
        if utt in out:
            raise ContractError(f"{path}:{n}: duplicate utterance id {utt!r}")
        out[utt] = text
    return out


def write_transcripts(path, items: Iterable[Tuple[str, str]]) -> None:
    Path(path).write_text("".join(f"{u}\t{t}\n" for u, t in items), encoding="utf-8")


def report_files(ref_path, hyp_path, unit: str, **kw) -> ErrorReport:
    refs, hyps = read_transcripts(ref_path), read_transcripts(hyp_path)
    if set(refs) != set(hyps):
        missing = sorted(set(refs) ^ set(hyps))
        raise ContractError(f"utterance ids differ between files: {missing[:5]}")
    ids = sorted(refs)
    return report([refs[u] for u in ids], [hyps[u] for u in ids], unit, **kw)


TABLE_COLUMNS = ("Model", "Units", "Lexicon", "LM", "Corr.", "Sub.", "Del.", "Ins.", "CER", "WER")


@dataclass(frozen=True)
class TableRow:
    model: str
    units: str = ""
    lexicon: str = ""
    lm: str = ""
    char: Optional[ErrorReport] = None  # supplies Corr./Sub./Del./Ins./CER
    word: Optional[ErrorReport] = None  # supplies WER
    wer_text: str = ""  # literal WER for rows without a word report

    def cells(self) -> List[str]:
        c = self.char
        breakdown = (
            [c.percent_str(f) for f in ("correct", "substitutions", "deletions", "insertions", "error")]
            if c is not None
            else [""] * 5
        )
        wer = self.word.percent_str("error") if self.word is not None else self.wer_text
        return [self.model, self.units, self.lexicon, self.lm] + breakdown + [wer]


# format reference only: the hybrid phone baseline of the original report
REFERENCE_ROW = TableRow("chain LF-MMI", "phone", "50K", "word 3-gram", wer_text="14.2")


def render_table(rows: Sequence[TableRow]) -> str:
    grid = [list(TABLE_COLUMNS)] + [r.cells() for r in rows]
    widths = [max(len(row[k]) for row in grid) for k in range(len(TABLE_COLUMNS))]
    lines = []
    for n, row in enumerate(grid):
        cells = [
            row[k].ljust(widths[k]) if k < 4 else row[k].rjust(widths[k])
            for k in range(len(row))
        ]
        lines.append("  ".join(cells).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def row_record(row: TableRow) -> Dict[str, object]:
    rec: Dict[str, object] = {
        "model": row.model, "units": row.units, "lexicon": row.lexicon, "lm": row.lm,
    }
    if row.char is not None:
        rec["char"] = row.char.as_record()
    if row.word is not None:
        rec["word"] = row.word.as_record()
    if row.wer_text:
        rec["wer_text"] = row.wer_text
    return rec


def write_records(path, rows: Sequence[TableRow]) -> None:
    Path(path).write_text(
        "".join(json.dumps(row_record(r), sort_keys=True, ensure_ascii=False) + "\n" for r in rows),
        encoding="utf-8",
    )
