"""CLI exit codes, config parsing, and end-to-end command behavior."""

import json

import pytest
from click.testing import CliRunner

from conftest import (
    analysis_json,
    entries_to_doc,
    happy_path_entries,
    infeasible,
    plan_json,
    step,
    write_scenario,
)
from pathfinder.cli import main
from pathfinder.runtime import (
    ConfigError,
    build_roster,
    build_run_config,
    parse_config_text,
)


@pytest.fixture
def runner():
    return CliRunner()


CONFIG_TEXT = """
# run budgets
max_replans = 2
max_expert_iterations = 4
hitl_enabled = false
roster = researcher:Finds facts:corpus_search; quant:Does math:calculator
"""


class TestConfig:
    def test_key_value_parsing_with_comments(self):
        values = parse_config_text(CONFIG_TEXT)
        assert values["max_replans"] == "2"
        config = build_run_config(values)
        assert config.max_replans == 2
        assert config.max_expert_iterations == 4

    def test_flag_overrides_win(self):
        config = build_run_config(parse_config_text(CONFIG_TEXT),
                                  {"max_replans": 5})
        assert config.max_replans == 5

    def test_roster_syntax(self):
        roster = build_roster(parse_config_text(CONFIG_TEXT))
        assert [r.id for r in roster.roles] == ["researcher", "quant"]
        assert roster.roles[1].tools == ("calculator",)

    def test_bad_line_rejected(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config_text("just words\n")


def scripted_exhaustion_entries():
    return {
        ("analyzer", 0, "-", 1): analysis_json(),
        ("planner", 1, "-", 1): plan_json([step("s1", role="quant")]),
        ("quant", 1, "s1", 1): infeasible("no data v1"),
        ("planner", 2, "-", 1): plan_json([step("s1b", role="quant")]),
        ("quant", 2, "s1b", 1): infeasible("no data v2"),
        ("planner", 3, "-", 1): plan_json([step("s1c", role="quant")]),
        ("quant", 3, "s1c", 1): infeasible("no data v3"),
        ("planner", 4, "-", 1): plan_json([step("s1d", role="quant")]),
        ("quant", 4, "s1d", 1): infeasible("no data v4"),
    }


class TestCmdRun:
    def test_happy_path_exit_0_prints_answer(self, runner, tmp_path):
        scenario = write_scenario(happy_path_entries(answer="the answer"),
                                  tmp_path / "s.json")
        result = runner.invoke(main, [
            "run", "What was revenue?", "--scenario", str(scenario),
            "--trace-dir", str(tmp_path / "traces"),
        ])
        assert result.exit_code == 0, result.output
        assert "the answer" in result.output

    def test_exhausted_budget_exit_2(self, runner, tmp_path):
        scenario = write_scenario(scripted_exhaustion_entries(), tmp_path / "s.json")
        result = runner.invoke(main, [
            "run", "q?", "--scenario", str(scenario),
            "--trace-dir", str(tmp_path / "traces"),
        ])
        assert result.exit_code == 2

    def test_missing_config_exit_1_names_path(self, runner, tmp_path):
        result = runner.invoke(main, [
            "run", "q?", "--config", str(tmp_path / "absent.conf"),
        ])
        assert result.exit_code == 1
        assert "absent.conf" in result.output


class TestCmdReplay:
    def test_replay_prints_same_answer_as_live(self, runner, tmp_path):
        scenario = write_scenario(happy_path_entries(answer="the answer"),
                                  tmp_path / "s.json")
        traces = tmp_path / "traces"
        live = runner.invoke(main, [
            "run", "q?", "--scenario", str(scenario), "--trace-dir", str(traces),
        ])
        assert live.exit_code == 0
        trace_file = next(traces.glob("*.jsonl"))
        replayed = runner.invoke(main, ["replay", str(trace_file)])
        assert replayed.exit_code == 0
        assert "the answer" in replayed.output

    def test_replay_bad_file_exit_1(self, runner, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("nonsense\n")
        result = runner.invoke(main, ["replay", str(bad)])
        assert result.exit_code == 1


class TestCmdBench:
    def make_dataset(self, tmp_path):
        cases = [
            {"id": "c1", "question": "q1", "gold_answer": "X",
             "difficulty_level": "0-RETRIEVE"},
            {"id": "c2", "question": "q2", "gold_answer": "X",
             "difficulty_level": "1-COMPARE"},
            {"id": "c3", "question": "q3", "gold_answer": "X",
             "difficulty_level": "3-CALC-COMPLEX"},
        ]
        path = tmp_path / "cases.jsonl"
        path.write_text("".join(json.dumps(c) + "\n" for c in cases))
        return path

    def make_case_scenarios(self, tmp_path, unsolved_case=None):
        doc = {"cases": {}}
        for cid in ("c1", "c2", "c3"):
            entries = happy_path_entries(answer="X")
            if cid == unsolved_case:
                entries = scripted_exhaustion_entries()
            doc["cases"][cid] = entries_to_doc(entries)
        path = tmp_path / "bench_scenarios.json"
        path.write_text(json.dumps(doc))
        return path

    def test_all_solved_table_one_row_per_level(self, runner, tmp_path):
        dataset = self.make_dataset(tmp_path)
        scenarios = self.make_case_scenarios(tmp_path)
        report_path = tmp_path / "report.json"
        result = runner.invoke(main, [
            "bench", "--dataset", str(dataset), "--scenario", str(scenarios),
            "--trace-dir", str(tmp_path / "traces"),
            "--report-json", str(report_path),
        ])
        assert result.exit_code == 0, result.output
        assert "0-RETRIEVE" in result.output
        assert "100.0%" in result.output
        report = json.loads(report_path.read_text())
        assert report["overall"]["accuracy"] == 1.0

    def test_one_unsolved_gives_two_thirds(self, runner, tmp_path):
        dataset = self.make_dataset(tmp_path)
        scenarios = self.make_case_scenarios(tmp_path, unsolved_case="c2")
        report_path = tmp_path / "report.json"
        result = runner.invoke(main, [
            "bench", "--dataset", str(dataset), "--scenario", str(scenarios),
            "--trace-dir", str(tmp_path / "traces"),
            "--report-json", str(report_path),
        ])
        assert result.exit_code == 0
        report = json.loads(report_path.read_text())
        assert report["overall"]["accuracy"] == pytest.approx(2 / 3)

    def test_malformed_dataset_exit_1(self, runner, tmp_path):
        path = tmp_path / "cases.jsonl"
        path.write_text("{broken\n")
        result = runner.invoke(main, ["bench", "--dataset", str(path)])
        assert result.exit_code == 1
        assert "line 1" in result.output
