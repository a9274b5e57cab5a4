"""Operator entry points: run one problem, run the benchmark, replay a trace,
serve the HITL gateway.

Exit codes: 0 solved, 2 unsolved, 1 usage/config error.
"""

from __future__ import annotations

import json
import sys
import threading

import click

from .runtime import (
    ConfigError,
    build_run_config,
    execute_bench,
    execute_run,
    load_config_file,
)
from .trace import TraceError, replay


def _load_values(config_path: str | None) -> dict[str, str]:
    if config_path is None:
        return {}
    return load_config_file(config_path)


@click.group()
def main() -> None:
    """Hierarchical multi-agent problem solver."""


@main.command("run")
@click.argument("question")
@click.option("--config", "config_path", type=str, default=None, help="Config file (key = value).")
@click.option("--corpus", "corpus_path", type=str, default=None, help="Corpus dir or JSONL file.")
@click.option("--scenario", "scenario_path", type=str, default=None,
              help="Scripted backend scenario file.")
@click.option("--hitl/--no-hitl", default=None, help="Enable human-in-the-loop assistance.")
@click.option("--max-replans", type=int, default=None)
@click.option("--max-iterations", "max_iterations", type=int, default=None,
              help="Per-step expert iteration budget.")
@click.option("--trace-dir", type=str, default="traces")
def cmd_run(question, config_path, corpus_path, scenario_path, hitl,
            max_replans, max_iterations, trace_dir) -> None:
    """Solve one question; prints the answer and the trace path."""
    try:
        values = _load_values(config_path)
        config = build_run_config(values, {
            "hitl_enabled": hitl,
            "max_replans": max_replans,
            "max_expert_iterations": max_iterations,
        })
        result = execute_run(question, config, values, corpus_path=corpus_path,
                             scenario_path=scenario_path, trace_dir=trace_dir)
    except ConfigError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"trace: {result.trace_path}", err=True)
    if result.outcome.status == "solved":
        click.echo(result.outcome.answer)
        sys.exit(0)
    click.echo(f"unsolved: {result.outcome.diagnostic}", err=True)
    sys.exit(2)


@main.command("bench")
@click.option("--dataset", required=True, type=str, help="JSONL of benchmark cases.")
@click.option("--config", "config_path", type=str, default=None)
@click.option("--corpus", "corpus_path", type=str, default=None)
@click.option("--scenario", "scenario_path", type=str, default=None)
@click.option("--report-json", type=str, default=None, help="Write machine-readable report here.")
@click.option("--trace-dir", type=str, default="traces")
def cmd_bench(dataset, config_path, corpus_path, scenario_path, report_json, trace_dir) -> None:
    """Run the benchmark and print the per-level accuracy table."""
    try:
        values = _load_values(config_path)
        config = build_run_config(values, {})
        report = execute_bench(dataset, config, values, corpus_path=corpus_path,
                               scenario_path=scenario_path, trace_dir=trace_dir)
    except (ConfigError, ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(report.render_table())
    if report_json:
        with open(report_json, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    sys.exit(0)


@main.command("replay")
@click.argument("trace_file")
def cmd_replay(trace_file) -> None:
    """Reconstruct a run's outcome from its trace file."""
    try:
        state = replay(trace_file)
    except (TraceError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    if not state.complete:
        click.echo("incomplete run", err=True)
        click.echo(json.dumps(state.snapshot(), indent=2))
        sys.exit(2)
    outcome = state.outcome or {}
    if outcome.get("status") == "solved":
        click.echo(outcome.get("answer", ""))
        sys.exit(0)
    click.echo(f"unsolved: {outcome.get('diagnostic')}", err=True)
    sys.exit(2)


@main.command("serve")
@click.option("--config", "config_path", type=str, default=None)
@click.option("--bind", type=str, default="127.0.0.1:8000", help="host:port to listen on.")
@click.option("--question", type=str, default=None,
              help="Optionally start one run (steerable from the dashboard).")
@click.option("--corpus", "corpus_path", type=str, default=None)
@click.option("--scenario", "scenario_path", type=str, default=None)
@click.option("--trace-dir", type=str, default="traces")
def cmd_serve(config_path, bind, question, corpus_path, scenario_path, trace_dir) -> None:
    """Serve the HITL gateway (and optionally launch a run against it)."""
    import uvicorn

    from .hitl import RunHub, create_app

    try:
        values = _load_values(config_path)
        config = build_run_config(values, {"hitl_enabled": True})
        host, _, port_text = bind.partition(":")
        port = int(port_text or "8000")
    except (ConfigError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)

    hub = RunHub()
    app = create_app(hub)

    if question:
        def launch() -> None:
            execute_run(question, config, values, corpus_path=corpus_path,
                        scenario_path=scenario_path, trace_dir=trace_dir, hub=hub)
        threading.Thread(target=launch, daemon=True).start()

    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=port, log_level="warning")
    except SystemExit:
        raise
    except OSError as exc:
        click.echo(f"error: cannot bind {bind}: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
