"""Benchmark runner and scorer: strict answer matching with unit/rounding
tolerance, per-difficulty-level aggregation, and a question-weighted overall
accuracy."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

DIFFICULTY_LEVELS = (
    "0-RETRIEVE",
    "1-COMPARE",
    "2-CALC-CHANGE",
    "3-CALC-COMPLEX",
    "4-CALC-AND-JUDGE",
    "5-EXPLAIN-FACTORS",
    "6-OTHER-ADVANCED",
)

_SCALE_WORDS = {
    "thousand": 1e3, "thousands": 1e3, "k": 1e3,
    "million": 1e6, "millions": 1e6, "mn": 1e6, "m": 1e6,
    "billion": 1e9, "billions": 1e9, "bn": 1e9, "b": 1e9,
    "trillion": 1e12, "trillions": 1e12,
}

_NUMBER_RE = re.compile(
    r"(?P<currency>[$€£])?\s*"
    r"(?P<sign>-|−)?"
    r"(?P<magnitude>\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+)"
    r"\s*(?P<percent>%)?"
    r"(?:\s*(?P<scale>thousands?|millions?|billions?|trillions?|bn|mn|[kmb])\b)?",
    re.IGNORECASE,
)

_PUNCT_RE = re.compile(r"[^\w\s]")


@dataclass(frozen=True)
class ParsedNumber:
    value: float          # magnitude with scale word applied
    raw_digits: str       # magnitude text as written, commas stripped
    scale: float
    percent: bool
    currency: str | None

    def granularity(self) -> float:
        """Half the unit of the last written digit, in base magnitude."""
        if "." in self.raw_digits:
            places = len(self.raw_digits.split(".")[1])
            unit = 10.0 ** (-places)
        else:
            unit = 1.0
        return unit * self.scale / 2.0

    def candidates(self) -> tuple[float, ...]:
        # a percent-marked value also matches its bare-number reading
        return (self.value, self.value / 100.0) if self.percent else (self.value,)


def extract_number(text: str) -> ParsedNumber | None:
    """First number in the text, with currency, percent, and scale word."""
    m = _NUMBER_RE.search(text)
    if not m:
        return None
    digits = m.group("magnitude").replace(",", "")
    scale = 1.0
    if m.group("scale"):
        scale = _SCALE_WORDS[m.group("scale").lower()]
    value = float(digits) * scale
    if m.group("sign"):
        value = -value
    return ParsedNumber(
        value=value,
        raw_digits=digits,
        scale=scale,
        percent=bool(m.group("percent")),
        currency=m.group("currency"),
    )


def _normalize_tokens(text: str) -> list[str]:
    return _PUNCT_RE.sub(" ", text).casefold().split()


@dataclass(frozen=True)
class Verdict:
    correct: bool
    explanation: str


def match_answer(prediction: str, gold: str) -> Verdict:
    """Strict matching with tolerance for unit and rounding variation.

    Numeric path: both sides parsed to a base magnitude (scale words applied);
    correct iff relative error <= 1% or the absolute difference is within the
    gold's last-rounded-digit half-unit.  Text path (no number in gold): the
    gold tokens must appear as a contiguous subsequence of the prediction.
    """
    if not prediction.strip() or not gold.strip():
        return Verdict(False, "empty prediction or gold")

    gold_num = extract_number(gold)
    pred_num = extract_number(prediction) if gold_num is not None else None
    if gold_num is not None and pred_num is not None:
        tol_abs = gold_num.granularity()
        for g in gold_num.candidates():
            for p in pred_num.candidates():
                diff = abs(p - g)
                rel = diff / abs(g) if g != 0 else float("inf")
                scale_ratio = abs(g) / abs(gold_num.value) if gold_num.value else 1.0
                if diff <= tol_abs * scale_ratio or rel <= 0.01 or (g == 0 and diff <= tol_abs):
                    return Verdict(True, f"numeric match: {p:g} vs {g:g}")
        return Verdict(
            False,
            f"numeric mismatch: {pred_num.value:g} vs {gold_num.value:g}")

    gold_tokens = _normalize_tokens(gold)
    pred_tokens = _normalize_tokens(prediction)
    n = len(gold_tokens)
    for i in range(len(pred_tokens) - n + 1):
        if pred_tokens[i:i + n] == gold_tokens:
            return Verdict(True, "text match: gold tokens found contiguously")
    return Verdict(False, "text mismatch: gold tokens not found in prediction")


@dataclass(frozen=True)
class BenchCase:
    id: str
    question: str
    gold_answer: str
    difficulty_level: str
    doc_refs: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.difficulty_level not in DIFFICULTY_LEVELS:
            raise ValueError(f"unknown difficulty level {self.difficulty_level!r}")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "BenchCase":
        return cls(
            id=d["id"],
            question=d["question"],
            gold_answer=d["gold_answer"],
            difficulty_level=d["difficulty_level"],
            doc_refs=tuple(d.get("doc_refs", ())),
        )


def load_dataset(path: str | Path) -> list[BenchCase]:
    cases: list[BenchCase] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                cases.append(BenchCase.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"malformed dataset line {lineno}: {exc}") from exc
    return cases


@dataclass
class LevelRow:
    level: str
    total: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0


@dataclass
class BenchReport:
    rows: list[LevelRow]
    overall_correct: int
    overall_total: int
    per_case: list[dict[str, Any]] = field(default_factory=list)

    @property
    def overall_accuracy(self) -> float:
        return self.overall_correct / self.overall_total if self.overall_total else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "levels": [
                {"level": r.level, "questions": r.total, "correct": r.correct,
                 "accuracy": r.accuracy}
                for r in self.rows
            ],
            "overall": {"questions": self.overall_total,
                        "correct": self.overall_correct,
                        "accuracy": self.overall_accuracy},
            "cases": self.per_case,
        }

    def render_table(self) -> str:
        lines = [f"{'Difficulty Level':<20} {'#Qs':>5} {'Accuracy':>9}",
                 "-" * 36]
        for r in self.rows:
            lines.append(f"{r.level:<20} {r.total:>5} {r.accuracy:>8.1%}")
        lines.append("-" * 36)
        lines.append(f"{'Overall':<20} {self.overall_total:>5} {self.overall_accuracy:>8.1%}")
        return "\n".join(lines)


def aggregate(results: list[tuple[BenchCase, Verdict]]) -> BenchReport:
    """Per-level accuracy plus the question-weighted overall accuracy."""
    rows: dict[str, LevelRow] = {}
    per_case = []
    for case, verdict in results:
        row = rows.setdefault(case.difficulty_level, LevelRow(case.difficulty_level))
        row.total += 1
        if verdict.correct:
            row.correct += 1
        per_case.append({"id": case.id, "level": case.difficulty_level,
                         "correct": verdict.correct, "explanation": verdict.explanation})
    ordered = [rows[level] for level in DIFFICULTY_LEVELS if level in rows]
    return BenchReport(
        rows=ordered,
        overall_correct=sum(r.correct for r in ordered),
        overall_total=sum(r.total for r in ordered),
        per_case=per_case,
    )


def weighted_overall(level_accuracies: list[float], question_counts: list[int]) -> float:
    """Question-weighted mean of per-level accuracies (the published table's
    bottom-row arithmetic)."""
    if len(level_accuracies) != len(question_counts):
        raise ValueError("accuracies and counts must align")
    total = sum(question_counts)
    if total == 0:
        return 0.0
    return sum(a * n for a, n in zip(level_accuracies, question_counts)) / total


def run_bench(cases: list[BenchCase],
              solve: Callable[[BenchCase], tuple[str, str | None]]) -> BenchReport:
    """Score each case with the provided solver.

    ``solve`` returns (status, answer); unsolved runs score incorrect with
    reason "unsolved".
    """
    results: list[tuple[BenchCase, Verdict]] = []
    for case in cases:
        status, answer = solve(case)
        if status != "solved" or not answer:
            results.append((case, Verdict(False, "unsolved")))
        else:
            results.append((case, match_answer(answer, case.gold_answer)))
    return aggregate(results)
