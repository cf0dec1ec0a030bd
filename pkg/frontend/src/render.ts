// DOM builders. Rendering is a pure projection of QueueState and API
// payloads; nothing here mutates server state.

import type { MetricsView, ScenarioRow, TicketView } from "./api.js";
import { renderPrecisionChart } from "./chart.js";
import {
  QueueState,
  highlightSegments,
  needsConfirm,
  parseSpans,
  visibleQueue,
} from "./state.js";

export interface Handlers {
  onVerdict(ticketId: string, decision: "escalated" | "false_positive"): void;
  onSelect(ticketId: string): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderCommand(doc: Document, ticket: TicketView): HTMLElement {
  const container = el(doc, "code", "command");
  const spans = parseSpans(ticket.enrichment["spans"]);
  for (const segment of highlightSegments(ticket.representative_event.command_line, spans)) {
    if (segment.hit) {
      const mark = el(doc, "mark", "rule-hit", segment.text);
      mark.title = segment.ids.join(", ");
      container.appendChild(mark);
    } else {
      container.appendChild(doc.createTextNode(segment.text));
    }
  }
  return container;
}

function verdictButton(
  doc: Document,
  state: QueueState,
  ticket: TicketView,
  decision: "escalated" | "false_positive",
  label: string,
  handlers: Handlers,
): HTMLButtonElement {
  const confirming = needsConfirm(state, ticket.ticket_id, decision);
  const button = el(doc, "button", `verdict ${decision}${confirming ? " confirming" : ""}`);
  button.textContent = confirming ? `confirm ${label}?` : label;
  button.dataset.ticket = ticket.ticket_id;
  button.dataset.decision = decision;
  button.addEventListener("click", () => handlers.onVerdict(ticket.ticket_id, decision));
  return button;
}

export function renderQueue(
  doc: Document,
  root: HTMLElement,
  state: QueueState,
  handlers: Handlers,
): void {
  root.textContent = "";
  if (state.conflict) {
    root.appendChild(el(doc, "div", "banner conflict", `verdict rejected: ${state.conflict}`));
  }
  const tickets = visibleQueue(state);
  if (tickets.length === 0) {
    root.appendChild(el(doc, "p", "empty-state", "No open tickets. The queue is clear."));
    return;
  }
  const table = el(doc, "table", "queue");
  const head = el(doc, "tr");
  for (const h of ["score", "ticket", "command", "dups", "created", "verdict"]) {
    head.appendChild(el(doc, "th", undefined, h));
  }
  table.appendChild(head);
  for (const ticket of tickets) {
    const row = el(doc, "tr", "ticket-row");
    row.dataset.ticket = ticket.ticket_id;
    row.appendChild(el(doc, "td", "score", ticket.score.toFixed(3)));
    const idCell = el(doc, "td", "ticket-id");
    const link = el(doc, "a", undefined, ticket.ticket_id);
    link.addEventListener("click", () => handlers.onSelect(ticket.ticket_id));
    idCell.appendChild(link);
    row.appendChild(idCell);
    const commandCell = el(doc, "td");
    commandCell.appendChild(renderCommand(doc, ticket));
    row.appendChild(commandCell);
    row.appendChild(el(doc, "td", "dups", String(ticket.duplicate_count)));
    row.appendChild(
      el(doc, "td", "created", new Date(ticket.created_at_ms).toISOString().slice(0, 16)),
    );
    const actions = el(doc, "td", "actions");
    actions.appendChild(verdictButton(doc, state, ticket, "escalated", "escalate", handlers));
    actions.appendChild(
      verdictButton(doc, state, ticket, "false_positive", "false positive", handlers),
    );
    row.appendChild(actions);
    table.appendChild(row);
  }
  root.appendChild(table);
}

export function renderDetail(doc: Document, root: HTMLElement, ticket: TicketView): void {
  root.textContent = "";
  root.appendChild(el(doc, "h3", undefined, `ticket ${ticket.ticket_id} (${ticket.status})`));
  root.appendChild(renderCommand(doc, ticket));
  const list = el(doc, "dl", "enrichment");
  const event = ticket.representative_event;
  const rows: [string, string][] = [
    ["score", ticket.score.toFixed(4)],
    ["host", event.host],
    ["user", event.user],
    ["process", event.process],
    ["duplicates", String(ticket.duplicate_count)],
  ];
  for (const [k, v] of Object.entries(ticket.enrichment)) {
    if (k !== "spans") rows.push([k, v]);
  }
  for (const [k, v] of rows) {
    list.appendChild(el(doc, "dt", undefined, k));
    list.appendChild(el(doc, "dd", undefined, v));
  }
  root.appendChild(list);
}

export function renderFunnel(doc: Document, root: HTMLElement, rows: ScenarioRow[]): void {
  root.textContent = "";
  const table = el(doc, "table", "funnel");
  const head = el(doc, "tr");
  for (const h of ["scenario", "model", "raw", "filtered", "scored ≥ θ", "tickets", "open"]) {
    head.appendChild(el(doc, "th", undefined, h));
  }
  table.appendChild(head);
  for (const row of rows) {
    const tr = el(doc, "tr");
    tr.appendChild(el(doc, "td", undefined, row.scenario_id));
    tr.appendChild(el(doc, "td", undefined, `v${row.serving_version ?? "-"}`));
    tr.appendChild(el(doc, "td", "num", String(row.counters.raw_events)));
    tr.appendChild(el(doc, "td", "num", String(row.counters.filter_hits)));
    tr.appendChild(el(doc, "td", "num", String(row.counters.above_threshold)));
    tr.appendChild(el(doc, "td", "num", String(row.counters.tickets_created)));
    tr.appendChild(el(doc, "td", "num", String(row.open_tickets)));
    table.appendChild(tr);
  }
  root.appendChild(table);
}

export function renderMetrics(doc: Document, root: HTMLElement, metrics: MetricsView): void {
  root.textContent = "";
  root.appendChild(
    el(
      doc,
      "h3",
      undefined,
      `rolling precision (last ${metrics.window} verdicts; ${metrics.verdict_count} total)`,
    ),
  );
  if (metrics.precision_series.length === 0) {
    root.appendChild(el(doc, "p", "empty-state", "No verdicts yet."));
    return;
  }
  root.appendChild(renderPrecisionChart(doc, metrics.precision_series));
  const last = metrics.precision_series[metrics.precision_series.length - 1];
  root.appendChild(el(doc, "p", "current", `current: ${(last.precision * 100).toFixed(1)}%`));
}
