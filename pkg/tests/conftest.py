"""Shared helpers: scripted scenario construction and full-run assembly."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from pathfinder.agents import ExpertRole, ExpertRoster
from pathfinder.backend import Gateway, ScriptedBackend
from pathfinder.manager import Manager
from pathfinder.model import Problem, RunConfig
from pathfinder.tools import Corpus, default_registry
from pathfinder.trace import TraceStore

ROSTER = ExpertRoster(roles=(
    ExpertRole("researcher", "Finds facts in documents", ("corpus_search",)),
    ExpertRole("quant", "Does arithmetic", ("calculator",)),
))


def analysis_json(restatement="Find the requested figure.", constraints=(),
                  requirements=("locate the figure",), assumptions=()):
    return json.dumps({
        "restatement": restatement,
        "constraints": list(constraints),
        "requirements": list(requirements),
        "assumptions": list(assumptions),
    })


def plan_json(steps, rationale="plan"):
    return json.dumps({"rationale": rationale, "steps": steps})


def step(sid, task=None, goal=None, role="researcher", depends_on=()):
    return {
        "id": sid,
        "task": task or f"do {sid}",
        "goal": goal or f"goal of {sid}",
        "expert_role": role,
        "depends_on": list(depends_on),
    }


def achieved(answer, artifacts=None, insights=()):
    return json.dumps({
        "action": "declare_achieved",
        "result": {"answer": answer, "artifacts": artifacts or {},
                   "insights": list(insights)},
    })


def infeasible(reason, constraints=(), alternatives=(), insights=()):
    return json.dumps({
        "action": "declare_infeasible",
        "failure_reason": reason,
        "constraints": list(constraints),
        "alternatives": [{"approach": a, "outcome": o} for a, o in alternatives],
        "insights": list(insights),
    })


def use_tool(tool, **arguments):
    return json.dumps({"action": "use_tool", "tool": tool, "arguments": arguments})


def request_assistance(question):
    return json.dumps({"action": "request_assistance", "question": question})


def synthesis_json(answer):
    return json.dumps({"answer": answer})


def happy_path_entries(answer="X"):
    """One plan, two independent steps, both achieved, synthesis."""
    return {
        ("analyzer", 0, "-", 1): analysis_json(),
        ("planner", 1, "-", 1): plan_json([
            step("s1", role="researcher"),
            step("s2", role="quant", depends_on=["s1"]),
        ]),
        ("researcher", 1, "s1", 1): achieved("revenue was 1577"),
        ("quant", 1, "s2", 1): achieved("growth was 4.8%"),
        ("manager", 1, "-", 1): synthesis_json(answer),
    }


def replan_entries(constraint_text="segment table absent from the 10-K"):
    """Step s2 infeasible once, replanned to s2b, then solved."""
    return {
        ("analyzer", 0, "-", 1): analysis_json(),
        ("planner", 1, "-", 1): plan_json([
            step("s1", role="researcher"),
            step("s2", role="quant", depends_on=["s1"]),
        ]),
        ("researcher", 1, "s1", 1): achieved("found the income statement"),
        ("quant", 1, "s2", 1): infeasible(
            "metric not in filing", constraints=[constraint_text]),
        ("planner", 2, "-", 1): plan_json([
            step("s2b", task="estimate from totals", role="quant"),
        ]),
        ("quant", 2, "s2b", 1): achieved("estimated 4.8%"),
        ("manager", 2, "-", 1): synthesis_json("Revenue grew 4.8%"),
    }


def run_scripted(entries, tmp_path: Path, config: RunConfig | None = None,
                 roster: ExpertRoster = ROSTER, corpus: Corpus | None = None,
                 assist=None, strict=True, question="What was FY2020 revenue?",
                 registry=None, trace_name="run.jsonl"):
    """Assemble and execute one scripted run; returns (outcome, manager, gateway)."""
    config = config or RunConfig()
    backend = ScriptedBackend(entries, strict=strict)
    gateway = Gateway(backend)
    registry = registry or default_registry(corpus or Corpus([]))
    trace = TraceStore(tmp_path / trace_name)
    mgr = Manager(gateway, roster, registry, trace, config, assist=assist)
    outcome = mgr.run(Problem(id="p1", question=question))
    trace.close()
    return outcome, mgr, gateway


def entries_to_doc(entries, strict=True):
    """Dump an in-memory entries dict to the scenario-file JSON shape."""
    return {
        "strict": strict,
        "entries": [
            {"role": role, "plan_version": version, "step_id": sid,
             "iteration": iteration, "response": response}
            for (role, version, sid, iteration), response in entries.items()
        ],
    }


def write_scenario(entries, path, strict=True):
    path.write_text(json.dumps(entries_to_doc(entries, strict)))
    return path


@pytest.fixture
def scripted_run(tmp_path):
    def run(entries, **kwargs):
        return run_scripted(entries, tmp_path, **kwargs)
    return run
