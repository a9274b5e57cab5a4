"""Hierarchical multi-agent problem-solving runtime with adaptive replanning,
structured failure feedback, a replayable trace store, human-in-the-loop
steering, and a benchmark harness."""

from .model import (
    Constraint,
    FeedbackReport,
    KnowledgeState,
    Plan,
    PlanStep,
    Problem,
    ProblemAnalysis,
    RunConfig,
    StepResult,
    StepStatus,
    TraceEvent,
    merge_feedback,
    validate_plan,
)

__all__ = [
    "Constraint",
    "FeedbackReport",
    "KnowledgeState",
    "Plan",
    "PlanStep",
    "Problem",
    "ProblemAnalysis",
    "RunConfig",
    "StepResult",
    "StepStatus",
    "TraceEvent",
    "merge_feedback",
    "validate_plan",
]

__version__ = "0.1.0"
