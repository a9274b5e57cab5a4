"""Append-only JSONL exploration trace and its replay fold.

One JSON object per line; the store assigns dense sequence numbers and
refuses appends after ``run_finished``.  ``replay`` folds a trace file
through the same state-transition logic the live run uses, reconstructing
the final manager state and run outcome.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, replace as _replace
from pathlib import Path
from time import time
from typing import Any, Callable

from .model import (
    EventKind,
    FeedbackReport,
    KnowledgeState,
    Plan,
    ProblemAnalysis,
    TraceEvent,
    merge_feedback,
)


class TraceError(Exception):
    pass


class TraceStore:
    """Single-writer append log; thread-safe for concurrent submitters."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")
        self._lock = threading.Lock()
        self._next_seq = 0
        self._closed = False
        self.events: list[TraceEvent] = []
        self.observers: list[Callable[[TraceEvent], None]] = []

    def append(self, kind: EventKind, payload: dict[str, Any]) -> TraceEvent:
        with self._lock:
            if self._closed:
                raise TraceError("run closed")
            event = TraceEvent(seq=self._next_seq, timestamp=time(), kind=kind, payload=payload)
            self._next_seq += 1
            self._fh.write(json.dumps(event.to_dict(), separators=(",", ":")) + "\n")
            self._fh.flush()
            self.events.append(event)
            if kind is EventKind.RUN_FINISHED:
                self._closed = True
                self._fh.close()
        for observe in list(self.observers):
            try:
                observe(event)
            except Exception:
                pass  # publishing is best-effort; the log is the source of truth
        return event

    def close(self) -> None:
        with self._lock:
            if not self._closed:
                self._closed = True
                self._fh.close()


def read_trace(path: str | Path) -> list[TraceEvent]:
    """Parse a trace file, enforcing consecutive seq starting at 0."""
    events: list[TraceEvent] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                events.append(TraceEvent.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise TraceError(f"corrupt trace line {lineno}: {exc}") from exc
    for expected, event in enumerate(events):
        if event.seq != expected:
            raise TraceError(f"sequence gap: expected seq {expected}, found {event.seq}")
    if not events or events[0].kind is not EventKind.RUN_STARTED:
        raise TraceError("trace must start with run_started")
    return events


@dataclass
class ReplayState:
    """State reconstructed by folding trace events; mirrors the live run."""

    phase: str = "init"
    plan: Plan | None = None
    knowledge: KnowledgeState = KnowledgeState()
    replans_used: int = 0
    total_iterations: int = 0
    outcome: dict[str, Any] | None = None
    complete: bool = False

    def snapshot(self) -> dict[str, Any]:
        return {
            "phase": self.phase,
            "plan": self.plan.to_dict() if self.plan else None,
            "knowledge": self.knowledge.to_dict(),
            "replans_used": self.replans_used,
            "total_iterations": self.total_iterations,
        }


def fold_event(state: ReplayState, event: TraceEvent) -> ReplayState:
    kind = event.kind
    p = event.payload
    if kind is EventKind.RUN_STARTED:
        state.phase = "analyzing"
    elif kind is EventKind.ANALYSIS_DONE:
        analysis = ProblemAnalysis.from_dict(p["analysis"])
        state.knowledge = KnowledgeState(constraints=analysis.constraints)
        state.phase = "planning"
    elif kind is EventKind.PLAN_CREATED:
        state.plan = Plan.from_dict(p["plan"])
        state.phase = "executing"
    elif kind is EventKind.EXPERT_ITERATION:
        state.total_iterations += 1
    elif kind is EventKind.FEEDBACK_SUBMITTED:
        report = FeedbackReport.from_dict(p["report"])
        state.knowledge = merge_feedback(state.knowledge, report)
        if state.plan is not None and report.plan_version == state.plan.version:
            step = state.plan.step(report.step_id)
            state.plan = state.plan.with_step(
                _replace(step, status=report.status, result=report.result)
            )
        state.phase = "evaluating"
    elif kind is EventKind.REPLAN_TRIGGERED:
        state.replans_used += 1
        state.phase = "replanning"
    elif kind is EventKind.SYNTHESIS_DONE:
        state.phase = "synthesizing"
    elif kind is EventKind.RUN_FINISHED:
        state.outcome = p.get("outcome")
        state.phase = "done" if (state.outcome or {}).get("status") == "solved" else "failed"
        state.complete = True
    return state


def replay(path: str | Path) -> ReplayState:
    """Reconstruct the final state from a trace file.

    A log that never reaches run_finished yields a partial state with
    ``complete=False`` (an incomplete run), not an error.
    """
    events = read_trace(path)
    state = ReplayState()
    for event in events:
        state = fold_event(state, event)
    return state
