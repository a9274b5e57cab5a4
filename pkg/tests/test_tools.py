"""Calculator, corpus chunking/search, and the tool registry."""

import random
from fractions import Fraction

import pytest

from pathfinder.tools import (
    CalcError,
    Corpus,
    ToolResult,
    ToolSpec,
    calculate,
    default_registry,
)


# --- independent oracle: random expression trees evaluated over Fraction ---

def random_tree(rng, depth):
    if depth == 0 or rng.random() < 0.3:
        n = rng.randint(0, 99)
        if rng.random() < 0.2:
            return ("pct", n), Fraction(n, 100)
        return ("num", n), Fraction(n)
    op = rng.choice("+-*/")
    left_expr, left_val = random_tree(rng, depth - 1)
    right_expr, right_val = random_tree(rng, depth - 1)
    if op == "/" and right_val == 0:
        op = "+"
    if op == "+":
        val = left_val + right_val
    elif op == "-":
        val = left_val - right_val
    elif op == "*":
        val = left_val * right_val
    else:
        val = left_val / right_val
    return ("bin", op, left_expr, right_expr), val


def render(node):
    if node[0] == "num":
        return str(node[1])
    if node[0] == "pct":
        return f"{node[1]}%"
    _, op, left, right = node
    return f"({render(left)}{op}({render(right)}))"


def check_against_oracle(seed, count):
    rng = random.Random(seed)
    for _ in range(count):
        tree, expected = random_tree(rng, depth=rng.randint(1, 4))
        got = float(calculate(render(tree)))
        want = float(expected)
        if want == 0:
            assert abs(got) <= 1e-9
        else:
            assert abs(got - want) / abs(want) <= 1e-9


class TestCalculator:
    def test_division_result_to_ten_significant_digits(self):
        # 72/1505 = 0.0478405315614617...
        assert calculate("(1577-1505)/1505") == "0.04784053156"

    def test_unary_minus(self):
        assert calculate("-(2+3)") == "-5"

    def test_percent_literal(self):
        assert calculate("50%*200") == "100"

    def test_operator_precedence(self):
        assert calculate("2+3*4") == "14"

    def test_division_by_zero(self):
        with pytest.raises(CalcError, match="division by zero"):
            calculate("1/0")

    def test_syntax_error_names_position(self):
        with pytest.raises(CalcError, match="position"):
            calculate("2+*3")

    def test_exact_integer_results(self):
        assert calculate("0.1+0.2") == "0.3"  # exact, not float
        assert calculate("10/4") == "2.5"
        assert calculate("1000000*1000000") == "1000000000000"

    def test_oracle_equivalence_sample(self):
        check_against_oracle(seed=7, count=100)


class TestCorpus:
    def doc(self, doc_id, text):
        return {"id": doc_id, "title": doc_id, "text": text}

    def test_chunking_is_deterministic_windows(self):
        words = " ".join(f"w{i}" for i in range(700))
        corpus = Corpus([self.doc("d1", words)])
        # windows of 300 with stride 240: starts at 0, 240, 480
        assert [c.ordinal for c in corpus.chunks] == [0, 1, 2]
        assert corpus.chunks[0].text.split()[0] == "w0"
        assert corpus.chunks[1].text.split()[0] == "w240"
        assert len(corpus.chunks[0].text.split()) == 300

    def test_single_matching_chunk_ranked_first(self):
        corpus = Corpus([self.doc("d1", "alpha beta gamma"),
                         self.doc("d2", "delta epsilon")])
        hits = corpus.search("beta", k=3)
        assert hits and hits[0][0].doc_id == "d1"

    def test_absent_term_returns_empty(self):
        corpus = Corpus([self.doc("d1", "alpha beta")])
        assert corpus.search("zeppelin", k=3) == []

    def test_tie_broken_by_doc_and_ordinal(self):
        corpus = Corpus([self.doc("d2", "target word"),
                         self.doc("d1", "target word")])
        hits = corpus.search("target", k=5)
        assert [h[0].doc_id for h in hits] == ["d1", "d2"]

    def test_empty_corpus_is_not_an_error(self):
        assert Corpus([]).search("anything", k=3) == []

    def test_determinism_across_instances(self):
        docs = [self.doc(f"d{i}", f"alpha beta doc {i} " * 10) for i in range(5)]
        ids1 = [(c.doc_id, c.ordinal) for c, _ in Corpus(docs).search("alpha doc", 4)]
        ids2 = [(c.doc_id, c.ordinal) for c, _ in Corpus(docs).search("alpha doc", 4)]
        assert ids1 == ids2

    def test_load_jsonl(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id":"a","title":"A","text":"hello world"}\n')
        corpus = Corpus.load(path)
        assert corpus.documents[0]["id"] == "a"

    def test_load_directory(self, tmp_path):
        (tmp_path / "doc1.txt").write_text("some filing text")
        corpus = Corpus.load(tmp_path)
        assert corpus.documents[0]["id"] == "doc1.txt"


class TestRegistry:
    def test_calculator_tool_precedence(self):
        registry = default_registry()
        assert registry.invoke("calculator", {"expr": "2+3*4"}) == ToolResult(True, "14")

    def test_unknown_tool(self):
        registry = default_registry()
        result = registry.invoke("nope", {"x": 1})
        assert result == ToolResult(False, "unknown tool nope")

    def test_division_by_zero_is_data(self):
        registry = default_registry()
        result = registry.invoke("calculator", {"expr": "1/0"})
        assert not result.ok
        assert "division by zero" in result.text

    def test_duplicate_registration_rejected(self):
        registry = default_registry()
        with pytest.raises(ValueError, match="duplicate"):
            registry.register(ToolSpec("calculator", "again", {}, lambda a: ToolResult(True, "")))

    def test_missing_argument_reported(self):
        registry = default_registry()
        result = registry.invoke("calculator", {})
        assert not result.ok and "missing argument" in result.text

    def test_search_tool_wired_to_corpus(self):
        corpus = Corpus([{"id": "d", "title": "d", "text": "net revenue was 1577"}])
        registry = default_registry(corpus)
        result = registry.invoke("corpus_search", {"query": "revenue", "k": 2})
        assert result.ok and "1577" in result.text
