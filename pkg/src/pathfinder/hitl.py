"""Human-in-the-loop gateway: assistance request brokering plus an HTTP
service streaming run events to observers.

The broker guarantees exactly-one resolution per request: the first human
response wins; a timeout resolves the request with the autonomous fallback
and later responses are rejected.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
from dataclasses import dataclass, field
from typing import Any, Iterator

from fastapi import FastAPI
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .model import EventKind, TraceEvent

log = logging.getLogger(__name__)

NO_HUMAN_FALLBACK = "NO-HUMAN-AVAILABLE: proceed autonomously"


@dataclass
class AssistanceRequest:
    id: str
    step_id: str
    question: str
    excerpt: list[str]
    resolved: bool = False
    response: str | None = None
    origin: str | None = None
    _done: threading.Event = field(default_factory=threading.Event, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "step_id": self.step_id,
            "question": self.question,
            "excerpt": self.excerpt,
            "resolved": self.resolved,
            "origin": self.origin,
        }


class AssistanceBroker:
    """Synchronized request registry with single-resolution semantics."""

    def __init__(self, emit, timeout: float):
        self.emit = emit
        self.timeout = timeout
        self._lock = threading.Lock()
        self._requests: dict[str, AssistanceRequest] = {}
        self._counter = 0

    def assist(self, step_id: str, question: str, excerpt: list[str]) -> str:
        """Block the calling step until a human answers or the timeout fires."""
        with self._lock:
            self._counter += 1
            req = AssistanceRequest(
                id=f"req-{self._counter}", step_id=step_id,
                question=question, excerpt=list(excerpt),
            )
            self._requests[req.id] = req
        self.emit(EventKind.ASSISTANCE_REQUESTED, {
            "request_id": req.id, "step_id": step_id,
            "question": question, "excerpt": list(excerpt),
        })
        req._done.wait(self.timeout)
        with self._lock:
            if not req.resolved:  # timeout fallback counts as the answer
                req.resolved = True
                req.response = NO_HUMAN_FALLBACK
                req.origin = "timeout"
        self.emit(EventKind.ASSISTANCE_RECEIVED, {
            "request_id": req.id, "step_id": step_id,
            "text": req.response, "origin": req.origin,
        })
        return req.response or NO_HUMAN_FALLBACK

    def submit(self, request_id: str, text: str, author: str) -> tuple[bool, str]:
        with self._lock:
            req = self._requests.get(request_id)
            if req is None:
                return False, f"unknown request {request_id}"
            if req.resolved:
                return False, "already answered"
            req.resolved = True
            req.response = text
            req.origin = f"human:{author}"
            req._done.set()
        return True, "accepted"

    def open_requests(self) -> list[AssistanceRequest]:
        with self._lock:
            return [r for r in self._requests.values() if not r.resolved]


class RunHub:
    """Fan-out of trace events to connected observers, with catch-up."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._runs: dict[str, dict[str, Any]] = {}

    def register_run(self, run_id: str, broker: AssistanceBroker | None = None) -> None:
        with self._lock:
            self._runs[run_id] = {
                "events": [], "queues": [], "broker": broker, "finished": False,
            }

    def broker(self, run_id: str) -> AssistanceBroker | None:
        with self._lock:
            run = self._runs.get(run_id)
            return run["broker"] if run else None

    def publish(self, run_id: str, event: TraceEvent) -> None:
        with self._lock:
            run = self._runs.get(run_id)
            if run is None:
                return
            run["events"].append(event)
            if event.kind is EventKind.RUN_FINISHED:
                run["finished"] = True
            queues = list(run["queues"])
        for q in queues:
            q.put(event)

    def run_ids(self) -> list[dict[str, Any]]:
        with self._lock:
            return [
                {"id": rid, "finished": run["finished"], "events": len(run["events"])}
                for rid, run in self._runs.items()
            ]

    def subscribe(self, run_id: str) -> Iterator[TraceEvent]:
        """Snapshot of all prior events, then live events until run_finished."""
        q: queue.Queue[TraceEvent] = queue.Queue()
        with self._lock:
            run = self._runs.get(run_id)
            if run is None:
                return
            snapshot = list(run["events"])
            finished = run["finished"]
            if not finished:
                run["queues"].append(q)
        try:
            last_seq = -1
            for event in snapshot:
                yield event
                last_seq = event.seq
                if event.kind is EventKind.RUN_FINISHED:
                    return
            if finished:
                return
            while True:
                event = q.get()
                if event.seq <= last_seq:
                    continue
                yield event
                last_seq = event.seq
                if event.kind is EventKind.RUN_FINISHED:
                    return
        finally:
            with self._lock:
                run = self._runs.get(run_id)
                if run and q in run["queues"]:
                    run["queues"].remove(q)


class AssistanceResponseBody(BaseModel):
    text: str
    author: str = "anonymous"


def create_app(hub: RunHub):
    """FastAPI gateway over a RunHub."""
    app = FastAPI(title="run gateway")

    @app.get("/runs")
    def list_runs():
        return hub.run_ids()

    @app.get("/runs/{run_id}/events")
    def stream_events(run_id: str):
        def sse() -> Iterator[str]:
            for event in hub.subscribe(run_id):
                yield f"data: {json.dumps(event.to_dict(), separators=(',', ':'))}\n\n"
        return StreamingResponse(sse(), media_type="text/event-stream")

    @app.get("/runs/{run_id}/assistance")
    def open_assistance(run_id: str):
        broker = hub.broker(run_id)
        if broker is None:
            return JSONResponse({"error": f"unknown run {run_id}"}, status_code=404)
        return [r.to_dict() for r in broker.open_requests()]

    @app.post("/runs/{run_id}/assistance/{request_id}")
    def answer_assistance(run_id: str, request_id: str, body: AssistanceResponseBody):
        broker = hub.broker(run_id)
        if broker is None:
            return JSONResponse({"error": f"unknown run {run_id}"}, status_code=404)
        if not body.text.strip():
            return JSONResponse({"error": "response text must be non-empty"}, status_code=422)
        ok, message = broker.submit(request_id, body.text, body.author)
        status = 200 if ok else 409
        return JSONResponse({"ok": ok, "message": message}, status_code=status)

    return app
