"""Top-level run state machine: analyze, plan, dispatch, evaluate, replan,
synthesize.  Single writer of the run's knowledge state; every state change
is emitted to the trace store before the run proceeds."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

from .agents import (
    AnalysisFailure,
    Analyzer,
    AssistFn,
    Expert,
    ExpertContext,
    ExpertRoster,
    Planner,
    PlanningFailure,
    load_prompt,
    select_ready_steps,
)
from .backend import Caller, ChatMessage, CompletionRequest, Gateway, ParseFailure
from .model import (
    EventKind,
    FeedbackReport,
    KnowledgeState,
    Plan,
    Problem,
    ProblemAnalysis,
    RunConfig,
    StepStatus,
    merge_feedback,
)
from .tools import ToolRegistry
from .trace import TraceStore

log = logging.getLogger(__name__)


class Phase(str, Enum):
    INIT = "init"
    ANALYZING = "analyzing"
    PLANNING = "planning"
    EXECUTING = "executing"
    EVALUATING = "evaluating"
    REPLANNING = "replanning"
    SYNTHESIZING = "synthesizing"
    DONE = "done"
    FAILED = "failed"


_LEGAL_TRANSITIONS: dict[Phase, set[Phase]] = {
    Phase.INIT: {Phase.ANALYZING},
    Phase.ANALYZING: {Phase.PLANNING, Phase.FAILED},
    Phase.PLANNING: {Phase.EXECUTING, Phase.FAILED},
    Phase.EXECUTING: {Phase.EVALUATING, Phase.FAILED},
    Phase.EVALUATING: {Phase.EXECUTING, Phase.REPLANNING, Phase.SYNTHESIZING, Phase.FAILED},
    Phase.REPLANNING: {Phase.EXECUTING, Phase.FAILED},
    Phase.SYNTHESIZING: {Phase.DONE, Phase.FAILED},
    Phase.DONE: set(),
    Phase.FAILED: set(),
}


class Decision(str, Enum):
    PROCEED = "proceed"
    REPLAN = "replan"
    SYNTHESIZE = "synthesize"
    ABORT = "abort"


@dataclass
class ManagerState:
    phase: Phase = Phase.INIT
    plan: Plan | None = None
    knowledge: KnowledgeState = field(default_factory=KnowledgeState)
    replans_used: int = 0
    total_iterations: int = 0

    def transition(self, to: Phase) -> None:
        if to not in _LEGAL_TRANSITIONS[self.phase]:
            raise RuntimeError(f"illegal phase transition {self.phase.value} -> {to.value}")
        self.phase = to

    def snapshot(self) -> dict[str, Any]:
        return {
            "phase": self.phase.value,
            "plan": self.plan.to_dict() if self.plan else None,
            "knowledge": self.knowledge.to_dict(),
            "replans_used": self.replans_used,
            "total_iterations": self.total_iterations,
        }


@dataclass(frozen=True)
class RunOutcome:
    status: str  # solved | unsolved
    answer: str | None
    plan_versions: int
    trace_ref: str
    diagnostic: str | None = None

    def __post_init__(self) -> None:
        if self.status == "solved" and not self.answer:
            raise ValueError("solved outcome must carry an answer")

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "answer": self.answer,
            "plan_versions": self.plan_versions,
            "trace_ref": self.trace_ref,
            "diagnostic": self.diagnostic,
        }


def evaluate_feedback(report_status: StepStatus, pending_remaining: bool,
                      replans_used: int, max_replans: int) -> Decision:
    """Deterministic post-feedback decision rule."""
    if report_status is StepStatus.ACHIEVED:
        return Decision.PROCEED if pending_remaining else Decision.SYNTHESIZE
    if replans_used < max_replans:
        return Decision.REPLAN
    return Decision.ABORT


class Manager:
    SYNTH_SCHEMA = {"answer": "string"}

    def __init__(self, gateway: Gateway, roster: ExpertRoster, registry: ToolRegistry,
                 trace: TraceStore, config: RunConfig,
                 assist: AssistFn | None = None, prompt_dir: str | None = None):
        self.gateway = gateway
        self.roster = roster
        self.registry = registry
        self.trace = trace
        self.config = config
        self.state = ManagerState()
        self.analyzer = Analyzer(gateway, prompt_dir)
        self.planner = Planner(gateway, roster, prompt_dir)
        self.expert = Expert(gateway, registry, emit=self.trace.append,
                             assist=assist, prompt_dir=prompt_dir)
        self.prompt_dir = prompt_dir
        self.analysis: ProblemAnalysis | None = None

    def run(self, problem: Problem) -> RunOutcome:
        self.trace.append(EventKind.RUN_STARTED, {
            "problem": problem.to_dict(), "config": self.config.to_dict(),
        })
        self.state.transition(Phase.ANALYZING)

        try:
            self.analysis = self.analyzer.analyze(
                problem.question, list(problem.corpus_refs))
        except AnalysisFailure as exc:
            return self._finish_unsolved(f"analysis failed: {exc}")
        # analysis constraints seed the knowledge state so replay can rebuild it
        self.state.knowledge = KnowledgeState(constraints=self.analysis.constraints)
        self.trace.append(EventKind.ANALYSIS_DONE, {"analysis": self.analysis.to_dict()})
        self.state.transition(Phase.PLANNING)

        try:
            plan = self.planner.plan_initial(self.analysis, self.state.knowledge)
        except PlanningFailure as exc:
            return self._finish_unsolved(f"planning failed: {exc}")
        self._install_plan(plan)

        while True:
            ready = select_ready_steps(self.state.plan)
            if not ready:
                if all(s.status is StepStatus.ACHIEVED for s in self.state.plan.steps):
                    return self._synthesize()
                return self._finish_unsolved("no dispatchable steps remain")

            step = ready[0]
            remaining = self.config.max_total_iterations - self.state.total_iterations
            if remaining <= 0:
                return self._finish_unsolved("total iteration budget exhausted")
            budget = min(self.config.max_expert_iterations, remaining)

            self.trace.append(EventKind.STEP_DISPATCHED, {
                "step_id": step.id, "plan_version": self.state.plan.version,
                "expert_role": step.expert_role, "budget": budget,
            })
            context = ExpertContext(
                analysis=self.analysis,
                prior_results={
                    s.id: s.result for s in self.state.plan.steps
                    if s.status is StepStatus.ACHIEVED and s.result
                },
                knowledge=self.state.knowledge,
            )
            report = self.expert.execute_step(step, self.state.plan.version, context, budget)
            decision = self.apply_feedback(report)

            if decision is Decision.PROCEED:
                continue
            if decision is Decision.SYNTHESIZE:
                return self._synthesize()
            if decision is Decision.REPLAN:
                self.state.transition(Phase.REPLANNING)
                self.trace.append(EventKind.REPLAN_TRIGGERED, {
                    "step_id": report.step_id,
                    "plan_version": report.plan_version,
                    "failure_reason": report.failure_reason,
                })
                self.state.replans_used += 1
                try:
                    new_plan = self.planner.replan(
                        self.state.plan, self.analysis, self.state.knowledge, report)
                except PlanningFailure as exc:
                    return self._finish_unsolved(f"replanning failed: {exc}")
                self._install_plan(new_plan)
                continue
            return self._finish_unsolved(
                f"exploration exhausted: step {report.step_id} failed with "
                f"{report.failure_reason!r} and no replans remain")

    def apply_feedback(self, report: FeedbackReport) -> Decision:
        """Merge an expert report and decide what happens next.

        Reports for a superseded plan version are dropped (warned, not merged).
        """
        assert self.state.plan is not None
        if report.plan_version != self.state.plan.version:
            log.warning("dropping stale feedback for step %s (plan v%d, current v%d)",
                        report.step_id, report.plan_version, self.state.plan.version)
            return Decision.PROCEED
        self.state.transition(Phase.EVALUATING)
        self.state.total_iterations += report.iterations_used
        self.trace.append(EventKind.FEEDBACK_SUBMITTED, {"report": report.to_dict()})
        self.state.knowledge = merge_feedback(self.state.knowledge, report)
        step = self.state.plan.step(report.step_id)
        self.state.plan = self.state.plan.with_step(
            replace(step, status=report.status, result=report.result))

        pending_remaining = any(
            s.status in (StepStatus.PENDING, StepStatus.RUNNING)
            for s in self.state.plan.steps)
        decision = evaluate_feedback(report.status, pending_remaining,
                                     self.state.replans_used, self.config.max_replans)
        if decision is Decision.PROCEED:
            self.state.transition(Phase.EXECUTING)
        return decision

    def _install_plan(self, plan: Plan) -> None:
        self.state.plan = plan
        self.trace.append(EventKind.PLAN_CREATED, {"plan": plan.to_dict()})
        if self.state.phase in (Phase.PLANNING, Phase.REPLANNING):
            self.state.transition(Phase.EXECUTING)

    def _synthesize(self) -> RunOutcome:
        assert self.state.plan is not None and self.analysis is not None
        if not self.state.plan.steps:
            return self._finish_unsolved("cannot synthesize from an empty plan")
        if self.state.phase is not Phase.EVALUATING:
            self.state.transition(Phase.EVALUATING)
        self.state.transition(Phase.SYNTHESIZING)
        lines = [
            f"{s.id}: {s.result.answer}" for s in self.state.plan.steps if s.result
        ]
        prompt = load_prompt("synthesis", self.prompt_dir).substitute(
            restatement=self.analysis.restatement,
            step_results="\n".join(f"- {line}" for line in lines),
        )
        request = CompletionRequest(
            messages=(ChatMessage("user", prompt),),
            caller=Caller("manager", self.state.plan.version, "-", 1),
            schema=self.SYNTH_SCHEMA,
        )
        try:
            parsed = self.gateway.complete_structured(request)
        except ParseFailure as exc:
            return self._finish_unsolved(f"synthesis failed: {exc}")
        answer = str(parsed["answer"])
        if not answer.strip():
            return self._finish_unsolved("synthesis produced an empty answer")
        self.trace.append(EventKind.SYNTHESIS_DONE, {"answer": answer})
        outcome = RunOutcome(
            status="solved", answer=answer,
            plan_versions=self.state.plan.version,
            trace_ref=str(self.trace.path),
        )
        self.trace.append(EventKind.RUN_FINISHED, {"outcome": outcome.to_dict()})
        self.state.transition(Phase.DONE)
        return outcome

    def _finish_unsolved(self, diagnostic: str) -> RunOutcome:
        log.info("run unsolved: %s", diagnostic)
        outcome = RunOutcome(
            status="unsolved", answer=None,
            plan_versions=self.state.plan.version if self.state.plan else 0,
            trace_ref=str(self.trace.path),
            diagnostic=diagnostic,
        )
        self.trace.append(EventKind.RUN_FINISHED, {"outcome": outcome.to_dict()})
        self.state.transition(Phase.FAILED)
        return outcome
