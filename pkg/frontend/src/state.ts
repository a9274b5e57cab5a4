/**
 * Read model of a run, folded purely from trace events. No queries, no
 * hidden inputs: replaying the same event stream always reproduces the
 * same state, which is what the snapshot tests rely on.
 */

import type {
  ConstraintDoc,
  FeedbackReportDoc,
  OutcomeDoc,
  PlanDoc,
  TraceEvent,
} from './events.js';

export interface StepView {
  id: string;
  task: string;
  goal: string;
  expertRole: string;
  dependsOn: string[];
  status: string;
  answer: string | null;
}

export interface PlanView {
  version: number;
  rationale: string;
  superseded: boolean;
  steps: StepView[];
}

export interface AssistanceView {
  id: string;
  stepId: string;
  question: string;
  excerpt: string[];
  status: 'open' | 'answered' | 'timed_out';
  response: string | null;
  origin: string | null;
}

export interface TraceLine {
  seq: number;
  kind: string;
  summary: string;
}

export interface DashboardState {
  runStatus: 'waiting' | 'running' | 'finished';
  question: string | null;
  plans: PlanView[];
  constraints: ConstraintDoc[];
  insights: string[];
  assistance: AssistanceView[];
  traceLines: TraceLine[];
  outcome: OutcomeDoc | null;
  lastSeq: number;
}

export function initialState(): DashboardState {
  return {
    runStatus: 'waiting',
    question: null,
    plans: [],
    constraints: [],
    insights: [],
    assistance: [],
    traceLines: [],
    outcome: null,
    lastSeq: -1,
  };
}

const constraintKey = (c: ConstraintDoc) =>
  `${c.description.toLowerCase().split(/\s+/).join(' ').trim()}|${c.scope}`;

function addConstraints(state: DashboardState, found: ConstraintDoc[]): void {
  const seen = new Set(state.constraints.map(constraintKey));
  for (const c of found) {
    if (!seen.has(constraintKey(c))) {
      seen.add(constraintKey(c));
      state.constraints.push(c);
    }
  }
}

function toStepView(doc: PlanDoc['steps'][number]): StepView {
  return {
    id: doc.id,
    task: doc.task,
    goal: doc.goal,
    expertRole: doc.expert_role,
    dependsOn: doc.depends_on,
    status: doc.status,
    answer: doc.result?.answer ?? null,
  };
}

export function currentPlan(state: DashboardState): PlanView | null {
  return state.plans.length ? state.plans[state.plans.length - 1] : null;
}

function summarize(event: TraceEvent): string {
  const p = event.payload as Record<string, any>;
  switch (event.kind) {
    case 'run_started':
      return `run started: ${p.problem?.question ?? ''}`;
    case 'analysis_done':
      return `analysis: ${p.analysis?.restatement ?? ''}`;
    case 'plan_created':
      return `plan v${p.plan?.version} created (${p.plan?.steps?.length ?? 0} steps)`;
    case 'step_dispatched':
      return `step ${p.step_id} dispatched to ${p.expert_role}`;
    case 'expert_iteration':
      return `step ${p.step_id} iter ${p.iteration}: ${p.action}`;
    case 'tool_invoked':
      return `tool ${p.tool} invoked by step ${p.step_id}`;
    case 'feedback_submitted':
      return `step ${p.report?.step_id}: ${p.report?.status}` +
        (p.report?.failure_reason ? ` — ${p.report.failure_reason}` : '');
    case 'replan_triggered':
      return `replan triggered by step ${p.step_id}: ${p.failure_reason}`;
    case 'assistance_requested':
      return `assistance requested (${p.request_id}): ${p.question}`;
    case 'assistance_received':
      return `assistance resolved (${p.request_id}) via ${p.origin}`;
    case 'synthesis_done':
      return `synthesis: ${p.answer ?? ''}`;
    case 'run_finished':
      return `run finished: ${p.outcome?.status}`;
    default:
      return event.kind;
  }
}

/** Fold one event into the state (mutates and returns the same object). */
export function reduce(state: DashboardState, event: TraceEvent): DashboardState {
  if (event.seq <= state.lastSeq) return state; // catch-up duplicates
  state.lastSeq = event.seq;
  state.traceLines.push({ seq: event.seq, kind: event.kind, summary: summarize(event) });

  const p = event.payload as Record<string, any>;
  switch (event.kind) {
    case 'run_started':
      state.runStatus = 'running';
      state.question = p.problem?.question ?? null;
      break;
    case 'analysis_done':
      addConstraints(state, (p.analysis?.constraints ?? []) as ConstraintDoc[]);
      break;
    case 'plan_created': {
      const plan = p.plan as PlanDoc;
      for (const previous of state.plans) previous.superseded = true;
      state.plans.push({
        version: plan.version,
        rationale: plan.rationale,
        superseded: false,
        steps: plan.steps.map(toStepView),
      });
      break;
    }
    case 'step_dispatched': {
      const step = currentPlan(state)?.steps.find((s) => s.id === p.step_id);
      if (step) step.status = 'running';
      break;
    }
    case 'feedback_submitted': {
      const report = p.report as FeedbackReportDoc;
      const plan = state.plans.find((pl) => pl.version === report.plan_version);
      const step = plan?.steps.find((s) => s.id === report.step_id);
      if (step) {
        step.status = report.status;
        step.answer = report.result?.answer ?? null;
      }
      addConstraints(state, report.discovered_constraints ?? []);
      for (const insight of report.insights ?? []) {
        if (!state.insights.includes(insight)) state.insights.push(insight);
      }
      break;
    }
    case 'assistance_requested':
      state.assistance.push({
        id: p.request_id,
        stepId: p.step_id,
        question: p.question,
        excerpt: p.excerpt ?? [],
        status: 'open',
        response: null,
        origin: null,
      });
      break;
    case 'assistance_received': {
      const req = state.assistance.find((r) => r.id === p.request_id);
      if (req) {
        req.status = p.origin === 'timeout' ? 'timed_out' : 'answered';
        req.response = p.text ?? null;
        req.origin = p.origin ?? null;
      }
      break;
    }
    case 'run_finished':
      state.runStatus = 'finished';
      state.outcome = (p.outcome ?? null) as OutcomeDoc | null;
      break;
  }
  return state;
}

export function reduceAll(events: TraceEvent[]): DashboardState {
  return events.reduce(reduce, initialState());
}

/** Dependency depth of each step, for laying the graph out in columns. */
export function stepLevels(plan: PlanView): Map<string, number> {
  const levels = new Map<string, number>();
  const depthOf = (id: string, trail: Set<string>): number => {
    if (levels.has(id)) return levels.get(id)!;
    if (trail.has(id)) return 0; // defensive: cycles never pass validation
    trail.add(id);
    const step = plan.steps.find((s) => s.id === id);
    const deps = step?.dependsOn ?? [];
    const depth = deps.length
      ? 1 + Math.max(...deps.map((d) => depthOf(d, trail)))
      : 0;
    levels.set(id, depth);
    return depth;
  };
  for (const step of plan.steps) depthOf(step.id, new Set());
  return levels;
}
