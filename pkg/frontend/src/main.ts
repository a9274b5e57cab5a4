/**
 * Browser entry point: subscribes to one run's event stream and re-renders
 * on every event. The run id and gateway base come from the query string:
 * `index.html?run=<id>&gateway=http://127.0.0.1:8080`.
 */

import { submitAnswer, subscribeToRun } from './gateway.js';
import { renderView } from './render.js';
import { initialState, reduce } from './state.js';

const params = new URLSearchParams(location.search);
const runId = params.get('run') ?? '';
const baseUrl = params.get('gateway') ?? '';

const root = document.getElementById('app')!;
const state = initialState();
let connected = true;

function paint(): void {
  root.innerHTML = renderView(state, connected);
}

root.addEventListener('submit', async (raw) => {
  raw.preventDefault();
  const form = raw.target as HTMLFormElement;
  const requestId = form.dataset.request;
  if (!requestId) return;
  const text = (form.elements.namedItem('text') as HTMLInputElement).value;
  const author = (form.elements.namedItem('author') as HTMLInputElement).value || 'anonymous';
  const result = await submitAnswer(baseUrl, runId, requestId, text, author);
  if (!result.ok) {
    const slot = form.querySelector('.assist-error');
    if (slot) slot.textContent = result.message;
  }
  // on success the gateway emits assistance_received, which repaints
});

if (runId) {
  subscribeToRun(
    baseUrl,
    runId,
    (event) => {
      reduce(state, event);
      paint();
    },
    (isUp) => {
      connected = isUp;
      paint();
    },
  );
} else {
  root.innerHTML = '<div class="banner">missing ?run=&lt;id&gt; in the URL</div>';
}

paint();
