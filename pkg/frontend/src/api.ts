// Typed client for the pipeline service HTTP API. Field names mirror the
// server's record formats.

export interface EventView {
  event_id: string;
  timestamp_ms: number;
  host: string;
  user: string;
  process: string;
  command_line: string;
}

export interface TicketView {
  ticket_id: string;
  created_at_ms: number;
  scenario_id: string;
  score: number;
  duplicate_count: number;
  status: string;
  enrichment: Record<string, string>;
  representative_event: EventView;
}

export interface ScenarioRow {
  scenario_id: string;
  serving_version: number | null;
  threshold: number | null;
  budget_n: number;
  open_tickets: number;
  counters: {
    raw_events: number;
    filter_hits: number;
    above_threshold: number;
    tickets_created: number;
  };
  span_days: number;
}

export interface TicketPage {
  total: number;
  offset: number;
  tickets: TicketView[];
}

export interface MetricsView {
  scenario_id: string;
  window: number;
  verdict_count: number;
  precision_series: { decided_at_ms: number; precision: number }[];
  funnel_days: Record<string, ScenarioRow["counters"]>;
}

export type Decision = "escalated" | "false_positive";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export class Client {
  constructor(
    private baseUrl: string,
    private token: string = "",
  ) {}

  private headers(): Record<string, string> {
    const h: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    return h;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      ...init,
      headers: { ...this.headers(), ...(init?.headers ?? {}) },
    });
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        detail = body.detail ?? body.error ?? detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  scenarios(): Promise<{ scenarios: ScenarioRow[] }> {
    return this.request("/api/scenarios");
  }

  tickets(scenario: string, status = "open", limit = 50, offset = 0): Promise<TicketPage> {
    const q = new URLSearchParams({
      scenario,
      status,
      limit: String(limit),
      offset: String(offset),
    });
    return this.request(`/api/tickets?${q}`);
  }

  ticket(id: string): Promise<TicketView> {
    return this.request(`/api/tickets/${encodeURIComponent(id)}`);
  }

  submitVerdict(id: string, decision: Decision, analyst: string): Promise<{ ticket: TicketView }> {
    return this.request(`/api/tickets/${encodeURIComponent(id)}/verdict`, {
      method: "POST",
      body: JSON.stringify({ decision, analyst }),
    });
  }

  metrics(scenario: string, k = 100): Promise<MetricsView> {
    const q = new URLSearchParams({ scenario, k: String(k) });
    return this.request(`/api/metrics?${q}`);
  }
}
