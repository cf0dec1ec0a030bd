// Pure UI state: the rendered queue is a projection of the last API
// response plus in-flight optimistic actions. A full reload reconstructs
// identical state from the server.

import type { TicketView } from "./api.js";

export interface Span {
  id: string;
  start: number;
  end: number;
}

export interface Segment {
  text: string;
  hit: boolean;
  ids: string[];
}

/** Queue order contract: score descending, then created ascending. */
export function orderQueue(tickets: TicketView[]): TicketView[] {
  return [...tickets].sort(
    (a, b) =>
      b.score - a.score ||
      a.created_at_ms - b.created_at_ms ||
      a.ticket_id.localeCompare(b.ticket_id),
  );
}

/** Parse the enrichment "spans" value: "$s3:10-24;$s4:0-2". */
export function parseSpans(spans: string | undefined): Span[] {
  if (!spans) return [];
  const out: Span[] = [];
  for (const part of spans.split(";")) {
    const m = /^(\$\w+):(\d+)-(\d+)$/.exec(part.trim());
    if (m) out.push({ id: m[1], start: Number(m[2]), end: Number(m[3]) });
  }
  return out.sort((a, b) => a.start - b.start || a.end - b.end);
}

/** Split a command line into plain/highlighted segments from match spans.
 * Overlapping spans merge; offsets never mutate the text. */
export function highlightSegments(command: string, spans: Span[]): Segment[] {
  const marks: { start: number; end: number; ids: string[] }[] = [];
  for (const span of spans) {
    const start = Math.max(0, Math.min(span.start, command.length));
    const end = Math.max(start, Math.min(span.end, command.length));
    if (end === start) continue;
    const last = marks[marks.length - 1];
    if (last && start <= last.end) {
      last.end = Math.max(last.end, end);
      if (!last.ids.includes(span.id)) last.ids.push(span.id);
    } else {
      marks.push({ start, end, ids: [span.id] });
    }
  }
  const segments: Segment[] = [];
  let pos = 0;
  for (const mark of marks) {
    if (mark.start > pos) segments.push({ text: command.slice(pos, mark.start), hit: false, ids: [] });
    segments.push({ text: command.slice(mark.start, mark.end), hit: true, ids: mark.ids });
    pos = mark.end;
  }
  if (pos < command.length) segments.push({ text: command.slice(pos), hit: false, ids: [] });
  return segments;
}

// --- verdict action state machine -------------------------------------------
// Buttons require one confirmation click (verdicts are irreversible), then
// the ticket is removed optimistically; a server rejection restores it.

export type PendingAction =
  | { kind: "idle" }
  | { kind: "confirm"; ticketId: string; decision: "escalated" | "false_positive" }
  | { kind: "inflight"; ticketId: string; decision: "escalated" | "false_positive" };

export interface QueueState {
  tickets: TicketView[];
  pending: PendingAction;
  hidden: Set<string>; // optimistically removed while awaiting the server
  conflict: string | null;
}

export function initialState(): QueueState {
  return { tickets: [], pending: { kind: "idle" }, hidden: new Set(), conflict: null };
}

/** Merge a fresh server page; optimistic hides persist until acknowledged. */
export function applyServerPage(state: QueueState, tickets: TicketView[]): QueueState {
  const open = new Set(tickets.map((t) => t.ticket_id));
  const hidden = new Set([...state.hidden].filter((id) => open.has(id)));
  return { ...state, tickets: orderQueue(tickets), hidden };
}

export function visibleQueue(state: QueueState): TicketView[] {
  return state.tickets.filter((t) => !state.hidden.has(t.ticket_id));
}

export function requestVerdict(
  state: QueueState,
  ticketId: string,
  decision: "escalated" | "false_positive",
): QueueState {
  const p = state.pending;
  if (p.kind === "confirm" && p.ticketId === ticketId && p.decision === decision) {
    // Second click: commit optimistically.
    const hidden = new Set(state.hidden);
    hidden.add(ticketId);
    return { ...state, pending: { kind: "inflight", ticketId, decision }, hidden, conflict: null };
  }
  return { ...state, pending: { kind: "confirm", ticketId, decision }, conflict: null };
}

export function verdictAcknowledged(state: QueueState, ticketId: string): QueueState {
  return {
    ...state,
    pending: { kind: "idle" },
    tickets: state.tickets.filter((t) => t.ticket_id !== ticketId),
    hidden: new Set([...state.hidden].filter((id) => id !== ticketId)),
  };
}

/** Rejection (double verdict, closed elsewhere): restore and surface why. */
export function verdictRejected(state: QueueState, ticketId: string, reason: string): QueueState {
  const hidden = new Set(state.hidden);
  hidden.delete(ticketId);
  return { ...state, pending: { kind: "idle" }, hidden, conflict: reason };
}

export function needsConfirm(state: QueueState, ticketId: string, decision: string): boolean {
  return (
    state.pending.kind === "confirm" &&
    state.pending.ticketId === ticketId &&
    state.pending.decision === decision
  );
}
