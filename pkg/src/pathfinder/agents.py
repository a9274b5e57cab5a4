"""The three LLM-backed agents: analyzer, planner, and the expert step loop.

Prompts are plain-text template files with ``$name`` placeholders, loaded
from the package's ``prompts/`` directory by default and overridable by path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from string import Template
from typing import Any, Callable

from .backend import Caller, ChatMessage, CompletionRequest, Gateway, ParseFailure
from .model import (
    Alternative,
    Constraint,
    ConstraintOrigin,
    EventKind,
    FeedbackReport,
    KnowledgeState,
    Plan,
    PlanStep,
    ProblemAnalysis,
    StepResult,
    StepStatus,
    validate_plan,
)
from .tools import ToolRegistry

log = logging.getLogger(__name__)

PROMPT_DIR = Path(__file__).parent / "prompts"
TRANSCRIPT_WINDOW = 20
NO_HUMAN_FALLBACK = "NO-HUMAN-AVAILABLE: proceed autonomously"

# (kind, payload) -> None; wired to the trace store by the manager
EmitFn = Callable[[EventKind, dict[str, Any]], None]
# (step id, question, transcript excerpt) -> observation text
AssistFn = Callable[[str, str, list[str]], str]


class AnalysisFailure(Exception):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class PlanningFailure(Exception):
    pass


def load_prompt(name: str, override_dir: str | None = None) -> Template:
    base = Path(override_dir) if override_dir else PROMPT_DIR
    return Template((base / f"{name}.txt").read_text(encoding="utf-8"))


def _lines(items: list[str], empty: str = "(none)") -> str:
    return "\n".join(f"- {item}" for item in items) if items else empty


@dataclass(frozen=True)
class ExpertRole:
    id: str
    description: str
    tools: tuple[str, ...] = ()


@dataclass(frozen=True)
class ExpertRoster:
    roles: tuple[ExpertRole, ...]

    def __post_init__(self) -> None:
        if not self.roles:
            raise ValueError("roster must contain at least one role")
        ids = [r.id for r in self.roles]
        if len(set(ids)) != len(ids):
            raise ValueError("roster role ids must be unique")

    def has(self, role_id: str) -> bool:
        return any(r.id == role_id for r in self.roles)

    def describe(self) -> str:
        return _lines([f"{r.id}: {r.description} (tools: {', '.join(r.tools) or 'none'})"
                       for r in self.roles])


class Analyzer:
    """Turns the question into a structured problem analysis with one call."""

    SCHEMA = {"restatement": "string", "constraints": "array",
              "requirements": "array", "assumptions": "array"}

    def __init__(self, gateway: Gateway, prompt_dir: str | None = None):
        self.gateway = gateway
        self.template = load_prompt("analyzer", prompt_dir)

    def analyze(self, question: str, doc_titles: list[str]) -> ProblemAnalysis:
        prompt = self.template.substitute(
            question=question,
            doc_titles=", ".join(doc_titles) or "(none)",
        )
        request = CompletionRequest(
            messages=(ChatMessage("user", prompt),),
            caller=Caller("analyzer", 0, "-", 1),
            schema=self.SCHEMA,
        )
        try:
            parsed = self.gateway.complete_structured(request)
        except ParseFailure as exc:
            raise AnalysisFailure(f"analysis parse failed: {exc}", raw=exc.raw) from exc

        restatement = str(parsed["restatement"])
        if not restatement.strip():
            raise AnalysisFailure("analysis restatement is empty")
        constraints = tuple(
            Constraint(
                id=f"c{i}",
                description=str(desc),
                origin=ConstraintOrigin.ANALYSIS,
                plan_version_discovered=0,
            )
            for i, desc in enumerate(parsed["constraints"], start=1)
            if str(desc).strip()
        )
        return ProblemAnalysis(
            restatement=restatement,
            constraints=constraints,
            requirements=tuple(str(r) for r in parsed["requirements"] if str(r).strip()),
            assumptions=tuple(str(a) for a in parsed["assumptions"]),
        )


class Planner:
    """Generates plan version 1 and evolved versions from feedback."""

    SCHEMA = {"rationale": "string", "steps": "array"}

    def __init__(self, gateway: Gateway, roster: ExpertRoster,
                 prompt_dir: str | None = None):
        self.gateway = gateway
        self.roster = roster
        self.initial_template = load_prompt("planner_initial", prompt_dir)
        self.replan_template = load_prompt("planner_replan", prompt_dir)

    def plan_initial(self, analysis: ProblemAnalysis, knowledge: KnowledgeState) -> Plan:
        prompt = self.initial_template.substitute(
            restatement=analysis.restatement,
            requirements=_lines(list(analysis.requirements)),
            assumptions=_lines(list(analysis.assumptions)),
            constraints=self._constraint_lines(analysis, knowledge),
            roster=self.roster.describe(),
        )
        return self._request_plan(prompt, version=1, carried=())

    def replan(self, current: Plan, analysis: ProblemAnalysis,
               knowledge: KnowledgeState, trigger: FeedbackReport) -> Plan:
        if trigger.status not in (StepStatus.INFEASIBLE, StepStatus.BUDGET_EXHAUSTED):
            raise ValueError("replan requires a failed trigger report")
        carried = tuple(s for s in current.steps if s.status is StepStatus.ACHIEVED)
        prompt = self.replan_template.substitute(
            restatement=analysis.restatement,
            version=current.version,
            plan=_lines([
                f"{s.id} [{s.status.value}] task={s.task} goal={s.goal} "
                f"expert={s.expert_role} depends_on={list(s.depends_on)}"
                for s in current.steps
            ]),
            failed_step=trigger.step_id,
            failure_reason=trigger.failure_reason or "",
            constraints=self._constraint_lines(analysis, knowledge),
            dead_ends=_lines([
                f"plan v{v} step {sid}: {reason}" for v, sid, reason in knowledge.dead_ends
            ]),
            insights=_lines(list(knowledge.insights)),
            roster=self.roster.describe(),
        )
        return self._request_plan(
            prompt, version=current.version + 1, carried=carried,
            supersedes=current.version,
        )

    def _constraint_lines(self, analysis: ProblemAnalysis, knowledge: KnowledgeState) -> str:
        merged: list[str] = []
        seen: set[str] = set()
        for c in tuple(analysis.constraints) + tuple(knowledge.constraints):
            if c.description not in seen:
                merged.append(c.description)
                seen.add(c.description)
        return _lines(merged)

    def _request_plan(self, prompt: str, version: int, carried: tuple[PlanStep, ...],
                      supersedes: int | None = None) -> Plan:
        request = CompletionRequest(
            messages=(ChatMessage("user", prompt),),
            caller=Caller("planner", version, "-", 1),
            schema=self.SCHEMA,
        )
        problems: list[str] = []
        for attempt in range(2):
            if attempt == 1:
                request = CompletionRequest(
                    messages=request.messages + (
                        ChatMessage(
                            "user",
                            "Your previous plan was invalid: "
                            + "; ".join(problems)
                            + ". Produce a corrected plan in the same JSON shape.",
                        ),
                    ),
                    caller=request.caller,
                    schema=request.schema,
                )
            try:
                parsed = self.gateway.complete_structured(request)
            except ParseFailure as exc:
                problems = [str(exc)]
                continue
            plan, problems = self._build_plan(parsed, version, carried, supersedes)
            if plan is not None:
                return plan
        raise PlanningFailure("plan invalid after corrective re-prompt: " + "; ".join(problems))

    def _build_plan(self, parsed: dict[str, Any], version: int,
                    carried: tuple[PlanStep, ...],
                    supersedes: int | None) -> tuple[Plan | None, list[str]]:
        steps: list[PlanStep] = list(carried)
        carried_ids = {s.id for s in carried}
        for raw in parsed.get("steps", []):
            if not isinstance(raw, dict):
                return None, ["each step must be an object"]
            sid = str(raw.get("id", ""))
            if sid in carried_ids:
                continue  # achieved steps are carried over verbatim
            steps.append(PlanStep(
                id=sid,
                task=str(raw.get("task", "")),
                goal=str(raw.get("goal", "")),
                expert_role=str(raw.get("expert_role", "")),
                depends_on=tuple(str(d) for d in raw.get("depends_on", [])),
            ))
        plan = Plan(
            version=version,
            steps=tuple(steps),
            rationale=str(parsed.get("rationale", "")),
            supersedes=supersedes,
        )
        problems = validate_plan(plan)
        for s in plan.steps:
            if not self.roster.has(s.expert_role):
                problems.append(f"unknown expert role {s.expert_role!r} on step {s.id!r}")
        return (plan, []) if not problems else (None, problems)


def select_ready_steps(plan: Plan) -> list[PlanStep]:
    """Pending steps whose dependencies are all achieved, in stable id order."""
    achieved = {s.id for s in plan.steps if s.status is StepStatus.ACHIEVED}
    ready = [
        s for s in plan.steps
        if s.status is StepStatus.PENDING and all(d in achieved for d in s.depends_on)
    ]
    return sorted(ready, key=lambda s: s.id)


@dataclass
class ExpertContext:
    analysis: ProblemAnalysis
    prior_results: dict[str, StepResult]
    knowledge: KnowledgeState


class Expert:
    """Bounded reason-act loop executing one plan step."""

    ACTION_SCHEMA = {"action": "string"}

    def __init__(self, gateway: Gateway, registry: ToolRegistry,
                 emit: EmitFn, assist: AssistFn | None = None,
                 prompt_dir: str | None = None):
        self.gateway = gateway
        self.registry = registry
        self.emit = emit
        self.assist = assist
        self.template = load_prompt("expert", prompt_dir)

    def execute_step(self, step: PlanStep, plan_version: int,
                     context: ExpertContext, budget: int) -> FeedbackReport:
        assert budget >= 1
        transcript: list[str] = []
        tool_calls = 0
        constraint_seq = 0

        for iteration in range(1, budget + 1):
            action = self._next_action(step, plan_version, context, transcript, iteration)
            kind = action.get("action") if isinstance(action, dict) else None
            observation: str | None = None

            if kind == "use_tool" and isinstance(action.get("arguments"), dict) \
                    and str(action.get("tool", "")):
                tool = str(action["tool"])
                result = self.registry.invoke(tool, action["arguments"])
                tool_calls += 1
                self.emit(EventKind.TOOL_INVOKED, {
                    "step_id": step.id, "plan_version": plan_version,
                    "tool": tool, "arguments": action["arguments"],
                    "ok": result.ok, "result": result.text,
                })
                status_word = "ok" if result.ok else "error"
                observation = f"tool {tool} [{status_word}]: {result.text}"

            elif kind == "request_assistance" and str(action.get("question", "")).strip():
                question = str(action["question"])
                if self.assist is not None:
                    try:
                        observation = self.assist(step.id, question, transcript[-5:])
                    except Exception as exc:  # gateway unavailable: same as timeout
                        log.warning("assistance gateway unavailable: %s", exc)
                        observation = NO_HUMAN_FALLBACK
                else:
                    observation = NO_HUMAN_FALLBACK
                observation = f"guidance: {observation}"

            elif kind == "declare_achieved":
                result_obj = action.get("result")
                answer = str((result_obj or {}).get("answer", "")) if isinstance(result_obj, dict) else ""
                if answer.strip():
                    step_result = StepResult(
                        answer=answer,
                        artifacts=tuple(sorted(
                            (str(k), str(v))
                            for k, v in (result_obj.get("artifacts") or {}).items()
                        )),
                        insights=tuple(str(i) for i in result_obj.get("insights", [])),
                    )
                    self._emit_iteration(step, plan_version, iteration, "declare_achieved",
                                         observation=None)
                    return FeedbackReport(
                        step_id=step.id, plan_version=plan_version,
                        status=StepStatus.ACHIEVED, result=step_result,
                        insights=step_result.insights,
                        iterations_used=iteration, tool_calls=tool_calls,
                    )
                observation = "malformed action"

            elif kind == "declare_infeasible" and str(action.get("failure_reason", "")).strip():
                constraints = []
                for desc in action.get("constraints", []):
                    if str(desc).strip():
                        constraint_seq += 1
                        constraints.append(Constraint(
                            id=f"{step.id}-fc{constraint_seq}",
                            description=str(desc),
                            origin=ConstraintOrigin.EXPERT_FEEDBACK,
                            plan_version_discovered=plan_version,
                        ))
                alternatives = tuple(
                    Alternative(str(a.get("approach", "")), str(a.get("outcome", "")))
                    for a in action.get("alternatives", [])
                    if isinstance(a, dict)
                )
                self._emit_iteration(step, plan_version, iteration, "declare_infeasible",
                                     observation=None)
                return FeedbackReport(
                    step_id=step.id, plan_version=plan_version,
                    status=StepStatus.INFEASIBLE,
                    failure_reason=str(action["failure_reason"]),
                    discovered_constraints=tuple(constraints),
                    attempted_alternatives=alternatives,
                    insights=tuple(str(i) for i in action.get("insights", [])),
                    iterations_used=iteration, tool_calls=tool_calls,
                )

            else:
                observation = "malformed action"

            transcript.append(observation)
            self._emit_iteration(step, plan_version, iteration,
                                 kind if isinstance(kind, str) else "malformed",
                                 observation=observation)

        last = transcript[-1] if transcript else None
        reason = "iteration budget exhausted"
        if last:
            reason += f"; last observation: {last}"
        return FeedbackReport(
            step_id=step.id, plan_version=plan_version,
            status=StepStatus.BUDGET_EXHAUSTED,
            failure_reason=reason,
            iterations_used=budget, tool_calls=tool_calls,
        )

    def _next_action(self, step: PlanStep, plan_version: int, context: ExpertContext,
                     transcript: list[str], iteration: int) -> dict[str, Any] | None:
        prompt = self.template.substitute(
            role=step.expert_role,
            task=step.task,
            goal=step.goal,
            restatement=context.analysis.restatement,
            prior_results=_lines([
                f"{sid}: {res.answer}" for sid, res in sorted(context.prior_results.items())
            ]),
            constraints=_lines([c.description for c in context.knowledge.constraints]
                               + [c.description for c in context.analysis.constraints]),
            tools=", ".join(self.registry.names()),
            transcript=_lines(transcript[-TRANSCRIPT_WINDOW:], empty="(no observations yet)"),
        )
        request = CompletionRequest(
            messages=(ChatMessage("user", prompt),),
            caller=Caller(step.expert_role, plan_version, step.id, iteration),
            schema=self.ACTION_SCHEMA,
        )
        try:
            return self.gateway.complete_structured(request)
        except ParseFailure:
            return None

    def _emit_iteration(self, step: PlanStep, plan_version: int, iteration: int,
                        action_kind: str, observation: str | None) -> None:
        self.emit(EventKind.EXPERT_ITERATION, {
            "step_id": step.id, "plan_version": plan_version,
            "iteration": iteration, "action": action_kind,
            "observation": observation,
        })
