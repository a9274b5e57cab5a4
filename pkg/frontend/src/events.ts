/**
 * Canonical JSON shapes of the run-event stream, as emitted by the trace
 * log and the gateway's SSE endpoint. Field names are a versioned contract
 * (`schema_version`); the dashboard consumes nothing else.
 */

export type EventKind =
  | 'run_started'
  | 'analysis_done'
  | 'plan_created'
  | 'step_dispatched'
  | 'expert_iteration'
  | 'tool_invoked'
  | 'feedback_submitted'
  | 'replan_triggered'
  | 'assistance_requested'
  | 'assistance_received'
  | 'synthesis_done'
  | 'run_finished';

export interface TraceEvent {
  schema_version: number;
  seq: number;
  timestamp: number;
  kind: EventKind;
  payload: Record<string, unknown>;
}

export interface PlanStepDoc {
  id: string;
  task: string;
  goal: string;
  expert_role: string;
  depends_on: string[];
  status: string;
  result: { answer: string } | null;
}

export interface PlanDoc {
  version: number;
  steps: PlanStepDoc[];
  rationale: string;
  supersedes: number | null;
}

export interface ConstraintDoc {
  id: string;
  description: string;
  scope: string;
  origin: string;
  plan_version_discovered: number;
}

export interface FeedbackReportDoc {
  step_id: string;
  plan_version: number;
  status: string;
  result: { answer: string } | null;
  failure_reason: string | null;
  discovered_constraints: ConstraintDoc[];
  insights: string[];
  iterations_used: number;
  tool_calls: number;
}

export interface OutcomeDoc {
  status: string;
  answer: string | null;
  plan_versions: number;
  diagnostic: string | null;
}

export function parseTraceLine(line: string): TraceEvent {
  const doc = JSON.parse(line);
  if (typeof doc.seq !== 'number' || typeof doc.kind !== 'string') {
    throw new Error(`not a trace event: ${line.slice(0, 80)}`);
  }
  return doc as TraceEvent;
}
