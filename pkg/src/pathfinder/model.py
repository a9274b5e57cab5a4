"""Shared protocol types: problems, plans, feedback, knowledge, trace events.

All types are immutable values with a canonical JSON form (``to_dict`` /
``from_dict``).  Field names are part of the wire contract shared with the
trace files, the HITL gateway, and the dashboard; every top-level document
carries ``schema_version``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

SCHEMA_VERSION = 1

GLOBAL_SCOPE = "global"
_STEP_SCOPE_PREFIX = "step:"

_WS_RE = re.compile(r"\s+")


class ValidationError(ValueError):
    """A value violates one of its declared invariants."""


class StepStatus(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    ACHIEVED = "achieved"
    INFEASIBLE = "infeasible"
    BUDGET_EXHAUSTED = "budget_exhausted"


class ConstraintOrigin(str, Enum):
    ANALYSIS = "analysis"
    EXPERT_FEEDBACK = "expert-feedback"
    HUMAN = "human"


class EventKind(str, Enum):
    RUN_STARTED = "run_started"
    ANALYSIS_DONE = "analysis_done"
    PLAN_CREATED = "plan_created"
    STEP_DISPATCHED = "step_dispatched"
    EXPERT_ITERATION = "expert_iteration"
    TOOL_INVOKED = "tool_invoked"
    ASSISTANCE_REQUESTED = "assistance_requested"
    ASSISTANCE_RECEIVED = "assistance_received"
    FEEDBACK_SUBMITTED = "feedback_submitted"
    REPLAN_TRIGGERED = "replan_triggered"
    SYNTHESIS_DONE = "synthesis_done"
    RUN_FINISHED = "run_finished"


def normalize_description(text: str) -> str:
    """Deduplication key for constraint descriptions: casefold + collapse whitespace."""
    return _WS_RE.sub(" ", text.strip()).casefold()


def step_scope(step_id: str) -> str:
    return _STEP_SCOPE_PREFIX + step_id


def scope_step_id(scope: str) -> str | None:
    """Step id for a step-local scope, or None for the global scope."""
    if scope.startswith(_STEP_SCOPE_PREFIX):
        return scope[len(_STEP_SCOPE_PREFIX):]
    return None


@dataclass(frozen=True)
class Problem:
    id: str
    question: str
    corpus_refs: tuple[str, ...] = ()
    config_overrides: dict[str, str] | None = None

    def __post_init__(self) -> None:
        if not self.question.strip():
            raise ValidationError("Problem.question must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "question": self.question,
            "corpus_refs": list(self.corpus_refs),
            "config_overrides": dict(self.config_overrides or {}),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Problem":
        return cls(
            id=d["id"],
            question=d["question"],
            corpus_refs=tuple(d.get("corpus_refs", ())),
            config_overrides=dict(d.get("config_overrides") or {}) or None,
        )


@dataclass(frozen=True)
class Constraint:
    id: str
    description: str
    scope: str = GLOBAL_SCOPE  # "global" or "step:<id>"
    origin: ConstraintOrigin = ConstraintOrigin.ANALYSIS
    plan_version_discovered: int = 0

    def __post_init__(self) -> None:
        if not self.description.strip():
            raise ValidationError("Constraint.description must be non-empty")
        if self.scope != GLOBAL_SCOPE and scope_step_id(self.scope) in (None, ""):
            raise ValidationError(f"Constraint.scope malformed: {self.scope!r}")
        if self.plan_version_discovered < 0:
            raise ValidationError("Constraint.plan_version_discovered must be >= 0")

    def dedup_key(self) -> tuple[str, str]:
        return (normalize_description(self.description), self.scope)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "description": self.description,
            "scope": self.scope,
            "origin": self.origin.value,
            "plan_version_discovered": self.plan_version_discovered,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Constraint":
        return cls(
            id=d["id"],
            description=d["description"],
            scope=d.get("scope", GLOBAL_SCOPE),
            origin=ConstraintOrigin(d.get("origin", "analysis")),
            plan_version_discovered=int(d.get("plan_version_discovered", 0)),
        )


@dataclass(frozen=True)
class ProblemAnalysis:
    restatement: str
    constraints: tuple[Constraint, ...] = ()
    requirements: tuple[str, ...] = ()
    assumptions: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.restatement.strip():
            raise ValidationError("ProblemAnalysis.restatement must be non-empty")
        for req in self.requirements:
            if not req.strip():
                raise ValidationError("ProblemAnalysis requirements must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {
            "restatement": self.restatement,
            "constraints": [c.to_dict() for c in self.constraints],
            "requirements": list(self.requirements),
            "assumptions": list(self.assumptions),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ProblemAnalysis":
        return cls(
            restatement=d["restatement"],
            constraints=tuple(Constraint.from_dict(c) for c in d.get("constraints", ())),
            requirements=tuple(d.get("requirements", ())),
            assumptions=tuple(d.get("assumptions", ())),
        )


@dataclass(frozen=True)
class StepResult:
    answer: str
    artifacts: tuple[tuple[str, str], ...] = ()
    insights: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "answer": self.answer,
            "artifacts": dict(self.artifacts),
            "insights": list(self.insights),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StepResult":
        return cls(
            answer=d["answer"],
            artifacts=tuple(sorted((str(k), str(v)) for k, v in d.get("artifacts", {}).items())),
            insights=tuple(d.get("insights", ())),
        )


@dataclass(frozen=True)
class PlanStep:
    id: str
    task: str
    goal: str
    expert_role: str
    depends_on: tuple[str, ...] = ()
    status: StepStatus = StepStatus.PENDING
    result: StepResult | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "task": self.task,
            "goal": self.goal,
            "expert_role": self.expert_role,
            "depends_on": list(self.depends_on),
            "status": self.status.value,
            "result": self.result.to_dict() if self.result else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PlanStep":
        result = d.get("result")
        return cls(
            id=d["id"],
            task=d["task"],
            goal=d["goal"],
            expert_role=d["expert_role"],
            depends_on=tuple(d.get("depends_on", ())),
            status=StepStatus(d.get("status", "pending")),
            result=StepResult.from_dict(result) if result else None,
        )


@dataclass(frozen=True)
class Plan:
    version: int
    steps: tuple[PlanStep, ...]
    rationale: str = ""
    supersedes: int | None = None

    def step(self, step_id: str) -> PlanStep:
        for s in self.steps:
            if s.id == step_id:
                return s
        raise KeyError(step_id)

    def with_step(self, updated: PlanStep) -> "Plan":
        return replace(
            self,
            steps=tuple(updated if s.id == updated.id else s for s in self.steps),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "steps": [s.to_dict() for s in self.steps],
            "rationale": self.rationale,
            "supersedes": self.supersedes,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Plan":
        return cls(
            version=int(d["version"]),
            steps=tuple(PlanStep.from_dict(s) for s in d["steps"]),
            rationale=d.get("rationale", ""),
            supersedes=d.get("supersedes"),
        )


@dataclass(frozen=True)
class Alternative:
    approach: str
    outcome: str

    def to_dict(self) -> dict[str, Any]:
        return {"approach": self.approach, "outcome": self.outcome}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Alternative":
        return cls(approach=d["approach"], outcome=d["outcome"])


@dataclass(frozen=True)
class FeedbackReport:
    step_id: str
    plan_version: int
    status: StepStatus
    result: StepResult | None = None
    failure_reason: str | None = None
    discovered_constraints: tuple[Constraint, ...] = ()
    attempted_alternatives: tuple[Alternative, ...] = ()
    insights: tuple[str, ...] = ()
    iterations_used: int = 1
    tool_calls: int = 0

    def __post_init__(self) -> None:
        if self.status not in (
            StepStatus.ACHIEVED,
            StepStatus.INFEASIBLE,
            StepStatus.BUDGET_EXHAUSTED,
        ):
            raise ValidationError(f"FeedbackReport.status invalid: {self.status}")
        if self.status is StepStatus.ACHIEVED:
            if self.result is None:
                raise ValidationError("achieved report must carry a result")
            if not self.result.answer.strip():
                raise ValidationError("achieved report must carry a non-empty answer")
        else:
            if not (self.failure_reason and self.failure_reason.strip()):
                raise ValidationError("non-achieved report must carry a failure_reason")
        if self.iterations_used < 1:
            raise ValidationError("iterations_used must be >= 1")
        if self.tool_calls < 0:
            raise ValidationError("tool_calls must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "step_id": self.step_id,
            "plan_version": self.plan_version,
            "status": self.status.value,
            "result": self.result.to_dict() if self.result else None,
            "failure_reason": self.failure_reason,
            "discovered_constraints": [c.to_dict() for c in self.discovered_constraints],
            "attempted_alternatives": [a.to_dict() for a in self.attempted_alternatives],
            "insights": list(self.insights),
            "iterations_used": self.iterations_used,
            "tool_calls": self.tool_calls,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FeedbackReport":
        result = d.get("result")
        return cls(
            step_id=d["step_id"],
            plan_version=int(d["plan_version"]),
            status=StepStatus(d["status"]),
            result=StepResult.from_dict(result) if result else None,
            failure_reason=d.get("failure_reason"),
            discovered_constraints=tuple(
                Constraint.from_dict(c) for c in d.get("discovered_constraints", ())
            ),
            attempted_alternatives=tuple(
                Alternative.from_dict(a) for a in d.get("attempted_alternatives", ())
            ),
            insights=tuple(d.get("insights", ())),
            iterations_used=int(d.get("iterations_used", 1)),
            tool_calls=int(d.get("tool_calls", 0)),
        )


@dataclass(frozen=True)
class KnowledgeState:
    """Monotone accumulation of constraints, dead ends, and insights.

    ``merge`` only ever adds entries; constraints are deduplicated by
    normalized description + scope.
    """

    constraints: tuple[Constraint, ...] = ()
    dead_ends: tuple[tuple[int, str, str], ...] = ()  # (plan_version, step_id, reason)
    insights: tuple[str, ...] = ()
    feedback_history: tuple[FeedbackReport, ...] = ()

    def global_constraints(self) -> tuple[Constraint, ...]:
        return tuple(c for c in self.constraints if c.scope == GLOBAL_SCOPE)

    def to_dict(self) -> dict[str, Any]:
        return {
            "constraints": [c.to_dict() for c in self.constraints],
            "dead_ends": [list(d) for d in self.dead_ends],
            "insights": list(self.insights),
            "feedback_history": [r.to_dict() for r in self.feedback_history],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "KnowledgeState":
        return cls(
            constraints=tuple(Constraint.from_dict(c) for c in d.get("constraints", ())),
            dead_ends=tuple(
                (int(v), str(s), str(r)) for v, s, r in d.get("dead_ends", ())
            ),
            insights=tuple(d.get("insights", ())),
            feedback_history=tuple(
                FeedbackReport.from_dict(r) for r in d.get("feedback_history", ())
            ),
        )


@dataclass(frozen=True)
class RunConfig:
    max_replans: int = 3
    max_expert_iterations: int = 8
    max_total_iterations: int = 64
    human_response_timeout: float = 120.0
    hitl_enabled: bool = False
    backend_spec: str = "scripted"

    def __post_init__(self) -> None:
        if self.max_replans < 1 or self.max_expert_iterations < 1 or self.max_total_iterations < 1:
            raise ValidationError("all budgets must be >= 1")
        if self.human_response_timeout <= 0:
            raise ValidationError("human_response_timeout must be > 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_replans": self.max_replans,
            "max_expert_iterations": self.max_expert_iterations,
            "max_total_iterations": self.max_total_iterations,
            "human_response_timeout": self.human_response_timeout,
            "hitl_enabled": self.hitl_enabled,
            "backend_spec": self.backend_spec,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        return cls(
            max_replans=int(d.get("max_replans", 3)),
            max_expert_iterations=int(d.get("max_expert_iterations", 8)),
            max_total_iterations=int(d.get("max_total_iterations", 64)),
            human_response_timeout=float(d.get("human_response_timeout", 120.0)),
            hitl_enabled=bool(d.get("hitl_enabled", False)),
            backend_spec=str(d.get("backend_spec", "scripted")),
        )


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    timestamp: float
    kind: EventKind
    payload: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "seq": self.seq,
            "timestamp": self.timestamp,
            "kind": self.kind.value,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TraceEvent":
        return cls(
            seq=int(d["seq"]),
            timestamp=float(d["timestamp"]),
            kind=EventKind(d["kind"]),
            payload=d.get("payload", {}),
        )


def validate_plan(plan: Plan) -> list[str]:
    """Check every Plan/PlanStep invariant; returns all violations (empty = ok)."""
    violations: list[str] = []
    if plan.version < 1:
        violations.append("plan version must be >= 1")
    if plan.supersedes is not None and plan.supersedes != plan.version - 1:
        violations.append("supersedes must equal version - 1")

    ids = [s.id for s in plan.steps]
    seen: set[str] = set()
    for sid in ids:
        if sid in seen:
            violations.append(f"step ids unique: duplicate id {sid!r}")
        seen.add(sid)

    id_set = set(ids)
    for s in plan.steps:
        if not s.task.strip() or not s.goal.strip():
            violations.append(f"task and goal non-empty: step {s.id!r}")
        if not s.expert_role.strip():
            violations.append(f"expert_role non-empty: step {s.id!r}")
        for dep in s.depends_on:
            if dep not in id_set:
                violations.append(f"depends_on references unknown step {dep!r} from {s.id!r}")
        achieved = s.status is StepStatus.ACHIEVED
        if achieved != (s.result is not None):
            violations.append(f"status=achieved iff result present: step {s.id!r}")

    if _has_cycle(plan):
        violations.append("dependency graph acyclic")
    return violations


def _has_cycle(plan: Plan) -> bool:
    deps = {s.id: list(s.depends_on) for s in plan.steps}
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {sid: WHITE for sid in deps}

    def visit(sid: str) -> bool:
        color[sid] = GRAY
        for dep in deps.get(sid, ()):
            if dep not in color:
                continue
            if color[dep] == GRAY:
                return True
            if color[dep] == WHITE and visit(dep):
                return True
        color[sid] = BLACK
        return False

    return any(color[sid] == WHITE and visit(sid) for sid in deps)


def merge_feedback(state: KnowledgeState, report: FeedbackReport) -> KnowledgeState:
    """Fold a feedback report into the knowledge state.

    Never removes entries; duplicate constraints (same normalized description
    and scope) are skipped; a failed report adds exactly one dead end.
    """
    existing = {c.dedup_key() for c in state.constraints}
    new_constraints = list(state.constraints)
    for c in report.discovered_constraints:
        if c.dedup_key() not in existing:
            new_constraints.append(c)
            existing.add(c.dedup_key())

    dead_ends = list(state.dead_ends)
    if report.status in (StepStatus.INFEASIBLE, StepStatus.BUDGET_EXHAUSTED):
        dead_ends.append((report.plan_version, report.step_id, report.failure_reason or ""))

    return KnowledgeState(
        constraints=tuple(new_constraints),
        dead_ends=tuple(dead_ends),
        insights=state.insights + tuple(report.insights),
        feedback_history=state.feedback_history + (report,),
    )
