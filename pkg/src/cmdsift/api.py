"""HTTP API over the pipeline engines: triage queue, ticket detail,
verdict submission, model metadata and rolling metrics. JSON field names
mirror the on-disk record formats."""

from __future__ import annotations

import os
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from cmdsift import evalharness
from cmdsift.core import Decision, Event, Ticket, Verdict
from cmdsift.service import ScenarioEngine, VerdictError

TOKEN_ENV = "CMDSIFT_API_TOKEN"


def _event_json(e: Event) -> dict:
    return {
        "event_id": e.event_id,
        "timestamp_ms": e.timestamp_ms,
        "host": e.host,
        "user": e.user,
        "process": e.process,
        "command_line": e.command_line,
    }


def _ticket_json(t: Ticket) -> dict:
    return {
        "ticket_id": t.ticket_id,
        "created_at_ms": t.created_at_ms,
        "scenario_id": t.scenario_id,
        "score": t.score,
        "duplicate_count": t.duplicate_count,
        "status": t.status.value,
        "enrichment": dict(t.enrichment),
        "representative_event": _event_json(t.representative_event),
    }


def create_app(engines: dict[str, ScenarioEngine], static_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="cmdsift", version="0.1.0")
    token = os.environ.get(TOKEN_ENV, "")

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        if token and request.url.path.startswith("/api/"):
            supplied = request.headers.get("authorization", "")
            if supplied != f"Bearer {token}":
                return JSONResponse({"error": "unauthorized"}, status_code=401)
        return await call_next(request)

    def engine_or_404(scenario: str) -> ScenarioEngine:
        engine = engines.get(scenario)
        if engine is None:
            raise HTTPException(status_code=404, detail=f"unknown scenario {scenario!r}")
        return engine

    @app.get("/api/scenarios")
    def scenarios():
        out = []
        for sid, engine in sorted(engines.items()):
            totals = engine.store.totals()
            days = engine.store.counters
            out.append(
                {
                    "scenario_id": sid,
                    "serving_version": engine.serving_version,
                    "threshold": engine.serving.artifact.threshold if engine.serving else None,
                    "budget_n": engine.scenario.budget_n,
                    "open_tickets": len(engine.store.open_tickets()),
                    "counters": totals.as_dict(),
                    "span_days": len(days) if days else 0,
                }
            )
        return {"scenarios": out}

    @app.get("/api/tickets")
    def tickets(
        scenario: str, status: str = "open", limit: int = 50, offset: int = 0
    ):
        engine = engine_or_404(scenario)
        try:
            queue = engine.triage_queue(status=status)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        page = queue[offset : offset + limit]
        return {
            "total": len(queue),
            "offset": offset,
            "tickets": [_ticket_json(t) for t in page],
        }

    @app.get("/api/tickets/{ticket_id}")
    def ticket_detail(ticket_id: str):
        for engine in engines.values():
            t = engine.store.tickets.get(ticket_id)
            if t is not None:
                return _ticket_json(t)
        raise HTTPException(status_code=404, detail=f"unknown ticket {ticket_id!r}")

    @app.post("/api/tickets/{ticket_id}/verdict")
    def submit_verdict(ticket_id: str, body: dict):
        decision = body.get("decision")
        analyst = body.get("analyst", "")
        if decision not in (Decision.ESCALATED.value, Decision.FALSE_POSITIVE.value):
            raise HTTPException(status_code=400, detail=f"bad decision {decision!r}")
        if not analyst:
            raise HTTPException(status_code=400, detail="analyst is required")
        for engine in engines.values():
            t = engine.store.tickets.get(ticket_id)
            if t is None:
                continue
            decided_at = body.get("decided_at_ms") or t.created_at_ms
            verdict = Verdict(
                ticket_id=ticket_id,
                decision=Decision(decision),
                analyst=analyst,
                decided_at_ms=int(decided_at),
            )
            try:
                sample = engine.submit_verdict(verdict)
            except VerdictError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            return {
                "ticket": _ticket_json(engine.store.tickets[ticket_id]),
                "feedback_label": sample.label.value,
            }
        raise HTTPException(status_code=404, detail=f"unknown ticket {ticket_id!r}")

    @app.get("/api/model/{scenario}")
    def model_info(scenario: str):
        engine = engine_or_404(scenario)
        serving = engine.serving
        if serving is None:
            raise HTTPException(status_code=404, detail="no published model")
        a = serving.artifact
        return {
            "scenario_id": scenario,
            "version": a.version,
            "threshold": a.threshold,
            "trained_at_ms": a.trained_at_ms,
            "training_set_digest": a.training_set_digest,
            "parameter_count": int(a.parameters.size),
            "shapes": [list(s) for s in a.shapes],
            "vectorizer": a.vectorizer_config.to_dict(),
            "meta": dict(a.meta),
        }

    @app.get("/api/metrics")
    def metrics(scenario: str, k: int = 100):
        engine = engine_or_404(scenario)
        verdicts = engine.store.verdicts_ordered()
        series = evalharness.rolling_precision(verdicts, k)
        per_day = {
            str(day): counters.as_dict()
            for day, counters in sorted(engine.store.counters.items())
        }
        return {
            "scenario_id": scenario,
            "window": k,
            "verdict_count": len(verdicts),
            "precision_series": [
                {"decided_at_ms": ts, "precision": p} for ts, p in series
            ],
            "funnel_days": per_day,
        }

    if static_dir and os.path.isdir(static_dir):
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
