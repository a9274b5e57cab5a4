"""Wiring helpers: config-file parsing, backend selection, and run assembly."""

from __future__ import annotations

import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .agents import ExpertRole, ExpertRoster
from .backend import Gateway, LiveBackend, ScriptedBackend
from .bench import BenchCase, BenchReport, load_dataset, run_bench
from .hitl import AssistanceBroker, RunHub
from .manager import Manager, RunOutcome
from .model import Problem, RunConfig
from .tools import Corpus, default_registry
from .trace import TraceStore


class ConfigError(Exception):
    pass


DEFAULT_ROSTER = ExpertRoster(roles=(
    ExpertRole("researcher", "Finds facts and figures in the document corpus",
               ("corpus_search",)),
    ExpertRole("quant", "Performs financial calculations",
               ("calculator",)),
    ExpertRole("generalist", "General reasoning and judgment",
               ("corpus_search", "calculator")),
))


def parse_config_text(text: str) -> dict[str, str]:
    """Plain key = value lines; # starts a comment; keys are lowercase."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        values[key.strip().lower()] = value.strip()
    return values


def load_config_file(path: str | Path) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(encoding="utf-8"))


_BOOL_TRUE = {"1", "true", "yes", "on"}


def build_run_config(values: dict[str, str], overrides: dict[str, Any] | None = None) -> RunConfig:
    merged: dict[str, Any] = dict(values)
    for key, val in (overrides or {}).items():
        if val is not None:
            merged[key] = val
    def as_bool(v: Any) -> bool:
        return v if isinstance(v, bool) else str(v).lower() in _BOOL_TRUE
    try:
        return RunConfig(
            max_replans=int(merged.get("max_replans", 3)),
            max_expert_iterations=int(merged.get("max_expert_iterations", 8)),
            max_total_iterations=int(merged.get("max_total_iterations", 64)),
            human_response_timeout=float(merged.get("human_response_timeout", 120.0)),
            hitl_enabled=as_bool(merged.get("hitl_enabled", False)),
            backend_spec=str(merged.get("backend", "scripted")),
        )
    except ValueError as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def build_roster(values: dict[str, str]) -> ExpertRoster:
    """Roster syntax: ``id:description:tool1,tool2; id2:desc2:tool``."""
    raw = values.get("roster", "")
    if not raw:
        return DEFAULT_ROSTER
    roles = []
    for entry in raw.split(";"):
        entry = entry.strip()
        if not entry:
            continue
        parts = entry.split(":", 2)
        if len(parts) < 2:
            raise ConfigError(f"bad roster entry {entry!r}: expected id:description[:tools]")
        tools = tuple(t.strip() for t in parts[2].split(",") if t.strip()) if len(parts) == 3 else ()
        roles.append(ExpertRole(parts[0].strip(), parts[1].strip(), tools))
    return ExpertRoster(roles=tuple(roles))


def build_backend(config: RunConfig, values: dict[str, str],
                  scenario_path: str | None = None):
    if scenario_path:
        return ScriptedBackend.from_file(scenario_path)
    if config.backend_spec == "live":
        base_url = values.get("live_base_url", "")
        if not base_url:
            raise ConfigError("live backend requires live_base_url in the config")
        return LiveBackend(
            base_url=base_url,
            model=values.get("live_model", "gpt-4o"),
            api_key_env=values.get("api_key_env", "PATHFINDER_API_KEY"),
        )
    raise ConfigError("scripted backend requires --scenario <file>")


@dataclass
class RunResult:
    outcome: RunOutcome
    manager: Manager
    gateway: Gateway
    trace_path: Path


def execute_run(question: str, config: RunConfig, values: dict[str, str],
                corpus_path: str | None = None,
                scenario_path: str | None = None,
                trace_dir: str | Path = "traces",
                run_id: str | None = None,
                hub: RunHub | None = None,
                backend=None) -> RunResult:
    run_id = run_id or uuid.uuid4().hex[:12]
    corpus = Corpus.load(corpus_path) if corpus_path else Corpus([])
    registry = default_registry(corpus)
    roster = build_roster(values)
    backend = backend or build_backend(config, values, scenario_path)
    gateway = Gateway(backend)
    trace = TraceStore(Path(trace_dir) / f"{run_id}.jsonl")

    assist = None
    if hub is not None:
        broker = AssistanceBroker(emit=trace.append, timeout=config.human_response_timeout)
        hub.register_run(run_id, broker)
        trace.observers.append(lambda event: hub.publish(run_id, event))
        if config.hitl_enabled:
            assist = broker.assist
    elif config.hitl_enabled:
        broker = AssistanceBroker(emit=trace.append, timeout=config.human_response_timeout)
        assist = broker.assist

    manager = Manager(gateway, roster, registry, trace, config, assist=assist)
    doc_titles = [d["title"] for d in corpus.documents]
    problem = Problem(id=run_id, question=question,
                     corpus_refs=tuple(doc_titles))
    outcome = manager.run(problem)
    trace.close()
    return RunResult(outcome=outcome, manager=manager, gateway=gateway,
                     trace_path=trace.path)


def execute_bench(dataset_path: str | Path, config: RunConfig, values: dict[str, str],
                  corpus_path: str | None = None,
                  scenario_path: str | None = None,
                  trace_dir: str | Path = "traces") -> BenchReport:
    """Run every case through the orchestrator with HITL disabled."""
    import json

    cases = load_dataset(dataset_path)
    per_case_scenarios: dict[str, Any] | None = None
    shared_scenario: dict[str, Any] | None = None
    if scenario_path:
        with open(scenario_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if "cases" in doc:
            per_case_scenarios = doc["cases"]
        else:
            shared_scenario = doc

    bench_config = RunConfig(**{**config.to_dict(), "hitl_enabled": False,
                                "backend_spec": config.backend_spec})

    def solve(case: BenchCase) -> tuple[str, str | None]:
        backend = None
        if per_case_scenarios is not None:
            case_doc = per_case_scenarios.get(case.id)
            if case_doc is None:
                return "unsolved", None
            backend = ScriptedBackend.from_dict(case_doc)
        elif shared_scenario is not None:
            backend = ScriptedBackend.from_dict(shared_scenario)
        result = execute_run(
            case.question, bench_config, values,
            corpus_path=corpus_path, trace_dir=trace_dir,
            run_id=f"bench-{case.id}", backend=backend,
            scenario_path=None if backend else scenario_path,
        )
        return result.outcome.status, result.outcome.answer

    return run_bench(cases, solve)
