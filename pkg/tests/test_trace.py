"""Trace store sequencing, file format, and replay reconstruction."""

import json
import threading

import pytest

from conftest import happy_path_entries, replan_entries, run_scripted
from pathfinder.model import EventKind
from pathfinder.trace import TraceError, TraceStore, read_trace, replay


class TestAppend:
    def test_first_event_gets_seq_zero(self, tmp_path):
        store = TraceStore(tmp_path / "t.jsonl")
        event = store.append(EventKind.RUN_STARTED, {})
        assert event.seq == 0
        store.close()

    def test_concurrent_appends_get_distinct_consecutive_seq(self, tmp_path):
        store = TraceStore(tmp_path / "t.jsonl")
        store.append(EventKind.RUN_STARTED, {})

        def submit(i):
            store.append(EventKind.EXPERT_ITERATION, {"i": i})

        threads = [threading.Thread(target=submit, args=(i,)) for i in range(20)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        store.close()
        seqs = [e.seq for e in store.events]
        assert seqs == list(range(21))
        lines = (tmp_path / "t.jsonl").read_text().strip().splitlines()
        assert len(lines) == 21

    def test_append_after_run_finished_rejected(self, tmp_path):
        store = TraceStore(tmp_path / "t.jsonl")
        store.append(EventKind.RUN_STARTED, {})
        store.append(EventKind.RUN_FINISHED, {"outcome": {"status": "unsolved"}})
        with pytest.raises(TraceError, match="run closed"):
            store.append(EventKind.EXPERT_ITERATION, {})

    def test_every_line_individually_parseable(self, tmp_path):
        outcome, mgr, gateway = run_scripted(happy_path_entries(), tmp_path)
        for line in open(outcome.trace_ref):
            doc = json.loads(line)
            assert doc["schema_version"] == 1
            assert "kind" in doc and "seq" in doc


class TestReadTrace:
    def test_seq_gap_detected(self, tmp_path):
        path = tmp_path / "t.jsonl"
        events = [
            {"schema_version": 1, "seq": 0, "timestamp": 0, "kind": "run_started", "payload": {}},
            {"schema_version": 1, "seq": 2, "timestamp": 0, "kind": "run_finished", "payload": {}},
        ]
        path.write_text("".join(json.dumps(e) + "\n" for e in events))
        with pytest.raises(TraceError, match="seq 1"):
            read_trace(path)

    def test_corrupt_line_names_line_number(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text('{"schema_version":1,"seq":0,"timestamp":0,"kind":"run_started","payload":{}}\nnot json\n')
        with pytest.raises(TraceError, match="line 2"):
            read_trace(path)

    def test_must_start_with_run_started(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text('{"schema_version":1,"seq":0,"timestamp":0,"kind":"plan_created","payload":{"plan":{"version":1,"steps":[]}}}\n')
        with pytest.raises(TraceError, match="run_started"):
            read_trace(path)


class TestReplay:
    def assert_replay_matches_live(self, outcome, mgr):
        state = replay(outcome.trace_ref)
        assert state.complete
        assert state.snapshot() == mgr.state.snapshot()
        assert state.outcome == outcome.to_dict()

    def test_happy_path_round_trip(self, tmp_path):
        outcome, mgr, gateway = run_scripted(happy_path_entries(), tmp_path)
        self.assert_replay_matches_live(outcome, mgr)

    def test_replan_scenario_round_trip(self, tmp_path):
        outcome, mgr, gateway = run_scripted(replan_entries(), tmp_path)
        self.assert_replay_matches_live(outcome, mgr)

    def test_truncated_log_yields_incomplete_state(self, tmp_path):
        outcome, mgr, gateway = run_scripted(happy_path_entries(), tmp_path)
        lines = open(outcome.trace_ref).read().strip().splitlines()
        truncated = tmp_path / "truncated.jsonl"
        truncated.write_text("\n".join(lines[:4]) + "\n")
        state = replay(truncated)
        assert not state.complete
        assert state.outcome is None
