/**
 * Thin client for the run gateway: SSE subscription with automatic
 * reconnect (the server replays the full event history on reconnect, and
 * the reducer drops duplicate sequence numbers), plus assistance answers.
 */

import { parseTraceLine, type TraceEvent } from './events.js';

export interface SubmitResult {
  ok: boolean;
  message: string;
  /** true when retrying might succeed (network failure), false when the
   * gateway definitively rejected the answer (already resolved). */
  retriable: boolean;
}

/** Client-side check; returns an error message or null when postable. */
export function validateAnswerText(text: string): string | null {
  return text.trim() ? null : 'response text must be non-empty';
}

type FetchLike = (url: string, init?: Record<string, unknown>) => Promise<{
  status: number;
  json(): Promise<any>;
}>;

export async function submitAnswer(
  baseUrl: string,
  runId: string,
  requestId: string,
  text: string,
  author = 'anonymous',
  fetchImpl: FetchLike = fetch as unknown as FetchLike,
): Promise<SubmitResult> {
  const invalid = validateAnswerText(text);
  if (invalid) return { ok: false, message: invalid, retriable: false };
  try {
    const res = await fetchImpl(
      `${baseUrl}/runs/${encodeURIComponent(runId)}/assistance/${encodeURIComponent(requestId)}`,
      {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({ text, author }),
      },
    );
    const body = await res.json();
    if (res.status === 200) return { ok: true, message: body.message ?? 'accepted', retriable: false };
    return { ok: false, message: body.message ?? body.error ?? `HTTP ${res.status}`, retriable: false };
  } catch (err) {
    return { ok: false, message: `network failure: ${err} — retry`, retriable: true };
  }
}

export interface Subscription {
  close(): void;
}

interface EventSourceLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  onopen: ((ev: unknown) => void) | null;
  close(): void;
}

/**
 * Subscribe to a run's event stream. `onConnection(false)` fires when the
 * stream drops (reconnect banner); EventSource reconnects on its own and
 * the gateway's snapshot rule replays history, so no client-side cursor.
 */
export function subscribeToRun(
  baseUrl: string,
  runId: string,
  onEvent: (event: TraceEvent) => void,
  onConnection: (connected: boolean) => void = () => {},
  makeEventSource: (url: string) => EventSourceLike = (url) =>
    new EventSource(url) as unknown as EventSourceLike,
): Subscription {
  const source = makeEventSource(`${baseUrl}/runs/${encodeURIComponent(runId)}/events`);
  source.onopen = () => onConnection(true);
  source.onerror = () => onConnection(false);
  source.onmessage = (message) => {
    try {
      onEvent(parseTraceLine(message.data));
    } catch {
      // malformed frame: skip; the log is the source of truth
    }
  };
  return { close: () => source.close() };
}
