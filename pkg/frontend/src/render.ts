/**
 * HTML view of the dashboard state. Pure string rendering: the page shell
 * swaps this into the DOM on every event, so the view is a function of
 * (state, connection flag) and nothing else.
 */

import { currentPlan, stepLevels } from './state.js';
import type { AssistanceView, DashboardState, PlanView } from './state.js';

const esc = (s: unknown): string =>
  String(s ?? '')
    .replaceAll('&', '&amp;')
    .replaceAll('<', '&lt;')
    .replaceAll('>', '&gt;')
    .replaceAll('"', '&quot;');

function renderStep(plan: PlanView, id: string): string {
  const step = plan.steps.find((s) => s.id === id)!;
  const deps = step.dependsOn.length ? `← ${step.dependsOn.join(', ')}` : '';
  const answer = step.answer ? `<div class="step-answer">${esc(step.answer)}</div>` : '';
  return `<div class="step status-${esc(step.status)}" data-step="${esc(step.id)}">
    <span class="step-id">${esc(step.id)}</span>
    <span class="step-role">${esc(step.expertRole)}</span>
    <span class="step-status">${esc(step.status)}</span>
    <div class="step-task">${esc(step.task)}</div>
    <div class="step-deps">${esc(deps)}</div>${answer}
  </div>`;
}

function renderPlan(plan: PlanView): string {
  const levels = stepLevels(plan);
  const depth = Math.max(0, ...levels.values());
  const columns: string[] = [];
  for (let level = 0; level <= depth; level++) {
    const ids = plan.steps.filter((s) => levels.get(s.id) === level).map((s) => s.id);
    if (!ids.length) continue;
    columns.push(
      `<div class="plan-column">${ids.map((id) => renderStep(plan, id)).join('')}</div>`,
    );
  }
  const badge = plan.superseded ? '<span class="badge badge-superseded">superseded</span>' : '';
  return `<section class="plan" data-version="${plan.version}">
    <h3>plan v${plan.version} ${badge}</h3>
    <div class="plan-rationale">${esc(plan.rationale)}</div>
    <div class="plan-graph">${columns.join('')}</div>
  </section>`;
}

function renderAssistance(req: AssistanceView): string {
  const answer =
    req.status === 'open'
      ? `<form class="assist-form" data-request="${esc(req.id)}">
          <input name="text" placeholder="your guidance" />
          <input name="author" placeholder="name" />
          <button type="submit">answer</button>
          <span class="assist-error"></span>
        </form>`
      : `<div class="assist-response">${esc(req.response)} <em>(${esc(req.origin)})</em></div>`;
  return `<div class="assist assist-${req.status}" data-request="${esc(req.id)}">
    <span class="assist-status">${esc(req.status)}</span>
    <span class="assist-step">step ${esc(req.stepId)}</span>
    <div class="assist-question">${esc(req.question)}</div>
    ${answer}
  </div>`;
}

export function renderView(state: DashboardState, connected = true): string {
  const banner = connected
    ? ''
    : '<div class="banner banner-disconnected">connection lost — reconnecting…</div>';
  const outcome = state.outcome
    ? `<div class="outcome outcome-${esc(state.outcome.status)}">
         ${esc(state.outcome.status)}${state.outcome.answer ? `: ${esc(state.outcome.answer)}` : ''}
         ${state.outcome.diagnostic ? `<em>${esc(state.outcome.diagnostic)}</em>` : ''}
       </div>`
    : '';
  const plans = state.plans.map(renderPlan).join('');
  const constraints = state.constraints
    .map(
      (c) =>
        `<li class="constraint" data-scope="${esc(c.scope)}">${esc(c.description)} <em>${esc(c.origin)}</em></li>`,
    )
    .join('');
  const insights = state.insights.map((i) => `<li class="insight">${esc(i)}</li>`).join('');
  const inbox = state.assistance.map(renderAssistance).join('');
  const trace = state.traceLines
    .map(
      (l) =>
        `<div class="trace-line kind-${esc(l.kind)}"><span class="trace-seq">${l.seq}</span> ${esc(l.summary)}</div>`,
    )
    .join('');

  const active = currentPlan(state);
  return `${banner}
<header class="topbar">
  <h1>run monitor</h1>
  <span class="run-status run-${esc(state.runStatus)}">${esc(state.runStatus)}</span>
  <span class="question">${esc(state.question ?? '')}</span>
  ${outcome}
</header>
<main class="layout">
  <section class="pane pane-plans" data-current-version="${active?.version ?? ''}">
    <h2>plans</h2>
    ${plans || '<div class="empty">no plan yet</div>'}
  </section>
  <section class="pane pane-knowledge">
    <h2>constraints</h2>
    <ul class="constraints">${constraints || '<li class="empty">none discovered</li>'}</ul>
    <h2>insights</h2>
    <ul class="insights">${insights || '<li class="empty">none yet</li>'}</ul>
  </section>
  <section class="pane pane-inbox">
    <h2>assistance</h2>
    ${inbox || '<div class="empty">no requests</div>'}
  </section>
  <section class="pane pane-trace">
    <h2>trace</h2>
    <div class="trace-scroll">${trace}</div>
  </section>
</main>`;
}
