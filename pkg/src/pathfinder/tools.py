"""Tool registry plus the two built-in tools: calculator and corpus search.

Both tools are deterministic.  Tool errors are returned as data (the expert
loop observes them); they never abort a run.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

CHUNK_TOKENS = 300
CHUNK_OVERLAP = 60

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class ToolResult:
    ok: bool
    text: str


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    arg_schema: dict[str, str]  # field name -> kind
    fn: Callable[[dict[str, Any]], ToolResult]


class ToolRegistry:
    def __init__(self) -> None:
        self._tools: dict[str, ToolSpec] = {}

    def register(self, spec: ToolSpec) -> None:
        if spec.name in self._tools:
            raise ValueError(f"duplicate tool name {spec.name!r}")
        self._tools[spec.name] = spec

    def names(self) -> list[str]:
        return sorted(self._tools)

    def invoke(self, name: str, arguments: dict[str, Any]) -> ToolResult:
        spec = self._tools.get(name)
        if spec is None:
            return ToolResult(False, f"unknown tool {name}")
        for field, kind in spec.arg_schema.items():
            if field not in arguments:
                return ToolResult(False, f"missing argument {field!r} for tool {name}")
            if kind == "string" and not isinstance(arguments[field], str):
                return ToolResult(False, f"argument {field!r} must be a string")
        try:
            return spec.fn(arguments)
        except Exception as exc:  # tool bugs are observations, not crashes
            return ToolResult(False, f"tool {name} failed: {exc}")


class CalcError(ValueError):
    pass


class _Parser:
    """Recursive-descent parser for + - * / parentheses, unary minus, and a
    percent postfix (``x%`` means ``x/100``).  Evaluates exactly over Fraction."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def parse(self) -> Fraction:
        value = self._expr()
        self._skip_ws()
        if self.pos != len(self.text):
            raise CalcError(f"syntax error at position {self.pos}")
        return value

    def _skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _expr(self) -> Fraction:
        value = self._term()
        while True:
            op = self._peek()
            if op == "+":
                self.pos += 1
                value = value + self._term()
            elif op == "-":
                self.pos += 1
                value = value - self._term()
            else:
                return value

    def _term(self) -> Fraction:
        value = self._factor()
        while True:
            op = self._peek()
            if op in ("*", "×"):
                self.pos += 1
                value = value * self._factor()
            elif op in ("/", "÷"):
                self.pos += 1
                divisor = self._factor()
                if divisor == 0:
                    raise CalcError("division by zero")
                value = value / divisor
            else:
                return value

    def _factor(self) -> Fraction:
        ch = self._peek()
        if ch == "-":
            self.pos += 1
            return -self._factor()
        if ch == "+":
            self.pos += 1
            return self._factor()
        return self._primary()

    def _primary(self) -> Fraction:
        ch = self._peek()
        if ch == "(":
            self.pos += 1
            value = self._expr()
            if self._peek() != ")":
                raise CalcError(f"syntax error at position {self.pos}: expected ')'")
            self.pos += 1
            return self._postfix(value)
        match = re.match(r"\d+(?:\.\d+)?|\.\d+", self.text[self.pos:])
        if not match:
            raise CalcError(f"syntax error at position {self.pos}")
        self.pos += len(match.group(0))
        value = Fraction(Decimal(match.group(0)))
        return self._postfix(value)

    def _postfix(self, value: Fraction) -> Fraction:
        if self._peek() == "%":
            self.pos += 1
            value = value / 100
        return value


def _render(value: Fraction, sig_digits: int = 10) -> str:
    """Exact integers rendered exactly; otherwise 10 significant digits."""
    if value.denominator == 1:
        return str(value.numerator)
    if value == 0:
        return "0"
    sign = "-" if value < 0 else ""
    mag = -value if value < 0 else value
    exponent = math.floor(math.log10(float(mag.numerator) / float(mag.denominator)))
    # scale so rounding happens at the right significant digit
    scaled = mag * Fraction(10) ** (sig_digits - 1 - exponent)
    digits = int(scaled + Fraction(1, 2))
    if digits >= 10 ** sig_digits:  # rounding carried into an extra digit
        digits //= 10
        exponent += 1
    text = str(digits).rstrip("0") or "0"
    point = exponent + 1  # digits before the decimal point
    if 0 < point <= len(text):
        out = text[:point] + ("." + text[point:] if text[point:] else "")
    elif point <= 0:
        out = "0." + "0" * (-point) + text
    else:
        out = text + "0" * (point - len(text))
    return sign + out


def calculate(expr: str) -> str:
    """Evaluate an arithmetic expression exactly; raises CalcError on bad input."""
    if not expr.strip():
        raise CalcError("empty expression")
    return _render(_Parser(expr).parse())


def _calculator_tool(args: dict[str, Any]) -> ToolResult:
    try:
        return ToolResult(True, calculate(args["expr"]))
    except CalcError as exc:
        return ToolResult(False, str(exc))


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    ordinal: int
    text: str


class Corpus:
    """Documents split into fixed windows of 300 tokens with 60-token overlap."""

    def __init__(self, documents: list[dict[str, str]]):
        self.documents = documents
        self.chunks: list[Chunk] = []
        for doc in documents:
            tokens = doc["text"].split()
            stride = CHUNK_TOKENS - CHUNK_OVERLAP
            ordinal = 0
            start = 0
            while True:
                window = tokens[start:start + CHUNK_TOKENS]
                if not window and ordinal > 0:
                    break
                self.chunks.append(Chunk(doc["id"], ordinal, " ".join(window)))
                if start + CHUNK_TOKENS >= len(tokens):
                    break
                start += stride
                ordinal += 1

    @classmethod
    def load(cls, path: str | Path) -> "Corpus":
        """Load from a directory of .txt files (doc id = file name) or a JSONL
        file of {id, title, text} objects."""
        p = Path(path)
        docs: list[dict[str, str]] = []
        if p.is_dir():
            for f in sorted(p.glob("*.txt")):
                docs.append({"id": f.name, "title": f.stem, "text": f.read_text(encoding="utf-8")})
        else:
            with open(p, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        d = json.loads(line)
                        docs.append({"id": d["id"], "title": d.get("title", d["id"]), "text": d["text"]})
        return cls(docs)

    def search(self, query: str, k: int) -> list[tuple[Chunk, float]]:
        """Top-k chunks by tf-idf over lowercased, punctuation-stripped tokens.

        idf = 1 + ln(N/df), so a term present in every chunk still scores.
        Zero-score chunks are dropped; ties break by (doc id, ordinal).
        """
        if not self.chunks:
            return []
        query_terms = _TOKEN_RE.findall(query.lower())
        if not query_terms:
            return []
        n = len(self.chunks)
        chunk_tokens = [_TOKEN_RE.findall(c.text.lower()) for c in self.chunks]
        df: dict[str, int] = {}
        for term in set(query_terms):
            df[term] = sum(1 for toks in chunk_tokens if term in toks)
        scored: list[tuple[Chunk, float]] = []
        for chunk, toks in zip(self.chunks, chunk_tokens):
            score = 0.0
            for term in query_terms:
                if df[term] == 0:
                    continue
                tf = toks.count(term)
                if tf:
                    score += tf * (1.0 + math.log(n / df[term]))
            if score > 0:
                scored.append((chunk, score))
        scored.sort(key=lambda cs: (-cs[1], cs[0].doc_id, cs[0].ordinal))
        return scored[:k]


def _search_tool(corpus: Corpus) -> Callable[[dict[str, Any]], ToolResult]:
    def run(args: dict[str, Any]) -> ToolResult:
        k = int(args.get("k", 3))
        hits = corpus.search(args["query"], k)
        if not hits:
            return ToolResult(True, "no matching passages")
        lines = [
            f"[{c.doc_id}#{c.ordinal} score={score:.4f}] {c.text[:500]}"
            for c, score in hits
        ]
        return ToolResult(True, "\n".join(lines))
    return run


def default_registry(corpus: Corpus | None = None) -> ToolRegistry:
    registry = ToolRegistry()
    registry.register(ToolSpec(
        name="calculator",
        description="Evaluate an arithmetic expression (+ - * / parentheses, percent).",
        arg_schema={"expr": "string"},
        fn=_calculator_tool,
    ))
    registry.register(ToolSpec(
        name="corpus_search",
        description="Search the document corpus; returns top-k passages with scores.",
        arg_schema={"query": "string"},
        fn=_search_tool(corpus if corpus is not None else Corpus([])),
    ))
    return registry
