// Contract tests against a live pipeline service: the UI consumes only the
// HTTP API, and verdicts must land in the scenario's feedback file. Runs in
// the node environment so fetch hits the real network; the DOM assertion
// builds its own happy-dom window.

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { Window } from "happy-dom";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, Client } from "../src/api.js";
import { renderQueue } from "../src/render.js";
import {
  applyServerPage,
  initialState,
  orderQueue,
  requestVerdict,
  verdictRejected,
} from "../src/state.js";

const PORT = 8922;
const BASE = `http://127.0.0.1:${PORT}`;
const POLL_MS = 5000;

let workdir: string;
let server: ChildProcess | undefined;
let client: Client;

const PREP = `
import sys
from cmdsift import core
from cmdsift.cli import main
from cmdsift.evalharness import StreamSpec, make_stream
from cmdsift.fixtures import data_path, reverse_shell_rule_path

workdir = sys.argv[1]
config = f"""
[scenario reverse_shell]
rule_file = {reverse_shell_rule_path()}
budget_n = 10

[vectorizer]
dimensions = 8192

[classifier]
hidden_units = 16
epochs = 40
learning_rate = 0.5
batch_size = 128
dropout_rate = 0.1
rng_seed = 1

[service]
retrain_daily = false
"""
open(f"{workdir}/cmdsift.conf", "w").write(config)
assert main(["generate-data", "--plan", str(data_path("plans", "reverse_shell.plan")),
             "--backend", "mock", "--seed", "7", "--positive", "60", "--negative", "60",
             "--out", f"{workdir}/synthetic.tsv", "--now-ms", "1749000000000"]) == 0
assert main(["train", "--config", f"{workdir}/cmdsift.conf", "--state-dir", f"{workdir}/state",
             "--scenario", "reverse_shell", "--data", f"{workdir}/synthetic.tsv",
             "--now-ms", "1749900000000"]) == 0
stream = make_stream(StreamSpec(days=1, events_per_day=400, malicious_rate=0.05), 12)
core.write_events(f"{workdir}/events.tsv", [e for e, _ in stream])
assert main(["replay", "--config", f"{workdir}/cmdsift.conf", "--state-dir", f"{workdir}/state",
             "--scenario", "reverse_shell", "--events", f"{workdir}/events.tsv"]) == 0
print("PREP OK")
`;

async function waitForServer(): Promise<void> {
  const deadline = Date.now() + 20_000;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/api/scenarios`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error("pipeline service never came up");
}

beforeAll(async () => {
  workdir = mkdtempSync(join(tmpdir(), "cmdsift-ui-"));
  const out = execFileSync("python3", ["-c", PREP, workdir], { encoding: "utf-8" });
  expect(out).toContain("PREP OK");
  server = spawn(
    "python3",
    ["-m", "cmdsift.cli", "serve", "--config", join(workdir, "cmdsift.conf"),
     "--state-dir", join(workdir, "state"), "--port", String(PORT)],
    { stdio: "ignore" },
  );
  client = new Client(BASE);
  await waitForServer();
}, 120_000);

afterAll(() => {
  server?.kill("SIGKILL");
});

describe("queue contract", () => {
  it("has open tickets to triage", async () => {
    const page = await client.tickets("reverse_shell");
    expect(page.total).toBeGreaterThan(0);
  });

  it("UI ordering projection matches the API's triage order", async () => {
    const page = await client.tickets("reverse_shell", "open", 200);
    const apiOrder = page.tickets.map((t) => t.ticket_id);
    const uiOrder = orderQueue([...page.tickets].reverse()).map((t) => t.ticket_id);
    expect(uiOrder).toEqual(apiOrder);
  });

  it("pagination slices the same ordering", async () => {
    const full = await client.tickets("reverse_shell", "open", 200);
    const page = await client.tickets("reverse_shell", "open", 2, 1);
    expect(page.tickets.map((t) => t.ticket_id)).toEqual(
      full.tickets.slice(1, 3).map((t) => t.ticket_id),
    );
  });
});

describe("verdict contract", () => {
  it("a submitted verdict appears in the feedback file within one poll cycle", async () => {
    const page = await client.tickets("reverse_shell", "open", 200);
    const target = page.tickets[0];
    await client.submitVerdict(target.ticket_id, "escalated", "ui-test");

    const feedbackPath = join(workdir, "state", "reverse_shell", "feedback.tsv");
    const deadline = Date.now() + POLL_MS;
    let found = false;
    while (Date.now() < deadline && !found) {
      const content = readFileSync(feedbackPath, "utf-8");
      found = content.includes(target.ticket_id);
      if (!found) await new Promise((r) => setTimeout(r, 200));
    }
    expect(found).toBe(true);

    const refreshed = await client.tickets("reverse_shell", "open", 200);
    expect(refreshed.tickets.map((t) => t.ticket_id)).not.toContain(target.ticket_id);
  });

  it("a double verdict conflicts and the conflict is rendered", async () => {
    const page = await client.tickets("reverse_shell", "open", 200);
    const target = page.tickets[0];
    await client.submitVerdict(target.ticket_id, "false_positive", "analyst-a");

    let error: ApiError | undefined;
    try {
      await client.submitVerdict(target.ticket_id, "escalated", "analyst-b");
    } catch (err) {
      error = err as ApiError;
    }
    expect(error).toBeDefined();
    expect(error?.status).toBe(409);

    // Drive the UI state machine through the same rejection and render it.
    let state = applyServerPage(initialState(), page.tickets);
    state = requestVerdict(state, target.ticket_id, "escalated");
    state = requestVerdict(state, target.ticket_id, "escalated");
    state = verdictRejected(state, target.ticket_id, error!.detail);
    const dom = new Window();
    const doc = dom.document as unknown as Document;
    const root = doc.createElement("div");
    renderQueue(doc, root, state, { onVerdict: () => {}, onSelect: () => {} });
    const banner = root.querySelector(".banner.conflict");
    expect(banner?.textContent).toContain("verdict rejected");
    expect(root.textContent).toContain(target.ticket_id);
  });
});

describe("metrics contract", () => {
  it("metrics series matches the API values exactly", async () => {
    const metrics = await client.metrics("reverse_shell");
    expect(metrics.verdict_count).toBeGreaterThanOrEqual(2);
    for (const point of metrics.precision_series) {
      expect(point.precision).toBeGreaterThanOrEqual(0);
      expect(point.precision).toBeLessThanOrEqual(1);
    }
  });

  it("funnel counters decrease stage over stage on replay data", async () => {
    const listing = await client.scenarios();
    const c = listing.scenarios[0].counters;
    expect(c.raw_events).toBeGreaterThanOrEqual(c.filter_hits);
    expect(c.filter_hits).toBeGreaterThanOrEqual(c.above_threshold);
    expect(c.above_threshold).toBeGreaterThanOrEqual(c.tickets_created);
  });
});
