// App wiring: polling loop, scenario tabs, verdict actions. Polling (5 s
// default) fits desk-scale ticket rates; every poll fully reconciles UI
// state with the server.

import { ApiError, Client } from "./api.js";
import { renderDetail, renderFunnel, renderMetrics, renderQueue } from "./render.js";
import {
  QueueState,
  applyServerPage,
  initialState,
  requestVerdict,
  verdictAcknowledged,
  verdictRejected,
} from "./state.js";

const POLL_MS = 5000;

interface App {
  client: Client;
  scenario: string;
  status: string;
  analyst: string;
  state: QueueState;
  selected: string | null;
}

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function refresh(app: App): Promise<void> {
  try {
    const [scenarios, page, metrics] = await Promise.all([
      app.client.scenarios(),
      app.client.tickets(app.scenario, app.status, 200),
      app.client.metrics(app.scenario),
    ]);
    app.state = applyServerPage(app.state, page.tickets);
    renderQueue(document, byId("queue"), app.state, handlers(app));
    renderFunnel(document, byId("funnel"), scenarios.scenarios);
    renderMetrics(document, byId("metrics"), metrics);
    byId("status").textContent = `connected — ${page.total} open`;
    byId("status").className = "status ok";
    if (app.selected) {
      const ticket = app.state.tickets.find((t) => t.ticket_id === app.selected);
      if (ticket) renderDetail(document, byId("detail"), ticket);
    }
  } catch (err) {
    byId("status").textContent = `API unreachable, retrying (${String(err)})`;
    byId("status").className = "status down";
  }
}

function handlers(app: App) {
  return {
    onSelect(ticketId: string) {
      app.selected = ticketId;
      const ticket = app.state.tickets.find((t) => t.ticket_id === ticketId);
      if (ticket) renderDetail(document, byId("detail"), ticket);
    },
    onVerdict(ticketId: string, decision: "escalated" | "false_positive") {
      const before = app.state;
      app.state = requestVerdict(before, ticketId, decision);
      renderQueue(document, byId("queue"), app.state, handlers(app));
      if (app.state.pending.kind !== "inflight") return; // confirmation click pending
      app.client
        .submitVerdict(ticketId, decision, app.analyst)
        .then(() => {
          app.state = verdictAcknowledged(app.state, ticketId);
          return refresh(app);
        })
        .catch((err) => {
          const reason = err instanceof ApiError ? err.detail : String(err);
          app.state = verdictRejected(app.state, ticketId, reason);
          return refresh(app);
        });
    },
  };
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(location.search);
  const base = params.get("api") ?? "";
  const token = params.get("token") ?? "";
  const client = new Client(base, token);
  const app: App = {
    client,
    scenario: params.get("scenario") ?? "",
    status: params.get("status") ?? "open",
    analyst: params.get("analyst") ?? "analyst",
    state: initialState(),
    selected: null,
  };
  if (!app.scenario) {
    const listing = await client.scenarios();
    app.scenario = listing.scenarios[0]?.scenario_id ?? "reverse_shell";
  }
  byId("scenario-name").textContent = app.scenario;
  const statusFilter = byId("status-filter") as HTMLSelectElement;
  statusFilter.value = app.status;
  statusFilter.addEventListener("change", () => {
    app.status = statusFilter.value;
    void refresh(app);
  });
  await refresh(app);
  setInterval(() => void refresh(app), POLL_MS);
}

void boot();
