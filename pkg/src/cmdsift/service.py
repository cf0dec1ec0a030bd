"""The per-scenario pipeline engine: Stage-1 rule filtering, Stage-2
scoring, deduplication into tickets, verdict ingestion, and scheduled
retrains with atomic model swap.

Replay mode treats event timestamps as the clock, which makes end-to-end
runs deterministic; live mode ticks on wall time.
"""

from __future__ import annotations

import hashlib
import logging
import threading
from dataclasses import dataclass, replace
from typing import Iterable, Optional

from cmdsift import classifier as clf
from cmdsift import core, trainer
from cmdsift.calibrate import CalibrationError
from cmdsift.core import Event, LabeledSample, ModelArtifact, Ticket, TicketStatus, Verdict
from cmdsift.rules import CompiledRule, evaluate
from cmdsift.store import ScenarioStore, VerdictError
from cmdsift.vectorize import VectorizerConfig, template_key, vectorize

logger = logging.getLogger(__name__)

__all__ = [
    "EngineError",
    "ProcessOutcome",
    "ScenarioEngine",
    "ServiceConfig",
    "VerdictError",
    "replay_events",
]


class EngineError(RuntimeError):
    """The engine cannot serve (typically: no published model artifact)."""


@dataclass(frozen=True)
class ServiceConfig:
    dedup_window_hours: float = 24.0
    history_span_days: float = 30.0
    retrain_daily: bool = True
    warm_start: bool = True
    freeze_layers: int = 1


@dataclass(frozen=True)
class ProcessOutcome:
    filtered: bool  # passed Stage 1
    score: Optional[float] = None
    ticket_id: Optional[str] = None
    action: str = "none"  # none | ticket_created | duplicate | quarantined


@dataclass(frozen=True)
class ServingModel:
    artifact: ModelArtifact
    model: clf.TrainedModel


def _dedup_key(scenario_id: str, rule_name: str, command_line: str) -> str:
    template_hash = hashlib.blake2b(
        template_key(command_line).encode("utf-8"), digest_size=8
    ).hexdigest()
    return f"{scenario_id}|{rule_name}|{template_hash}"


def _ticket_id(dedup_key: str, first_event_id: str) -> str:
    digest = hashlib.blake2b(
        f"{dedup_key}|{first_event_id}".encode("utf-8"), digest_size=8
    ).hexdigest()
    return f"t-{digest}"


class ScenarioEngine:
    def __init__(
        self,
        scenario: core.DetectionScenario,
        store: ScenarioStore,
        rules: list[CompiledRule],
        vec_config: VectorizerConfig,
        clf_config: clf.ClassifierConfig,
        synthetic: list[LabeledSample],
        service_config: ServiceConfig = ServiceConfig(),
    ):
        if not rules:
            raise ValueError("engine needs at least one compiled rule")
        self.scenario = scenario
        self.store = store
        self.rules = rules
        self.vec_config = vec_config
        self.clf_config = clf_config
        self.synthetic = synthetic
        self.config = service_config
        self._state_lock = threading.RLock()
        self._retrain_lock = threading.Lock()
        self._last_retrain_day: Optional[int] = None
        self.quarantined = 0
        self.serving: Optional[ServingModel] = None
        artifact = store.load_current_artifact()
        if artifact is not None:
            self.serving = ServingModel(artifact, trainer.model_from_artifact(artifact))
        # Rebuild the dedup index from persisted tickets.
        self._dedup: dict[str, tuple[str, int]] = {}
        for t in store.tickets.values():
            key = t.enrichment.get("dedup_key")
            if key:
                prev = self._dedup.get(key)
                if prev is None or t.created_at_ms > prev[1]:
                    self._dedup[key] = (t.ticket_id, t.created_at_ms)

    # -- lifecycle ---------------------------------------------------------------

    def bootstrap(self, now_ms: int) -> ModelArtifact:
        """Train and publish the first artifact from the synthetic set alone."""
        artifact = self.retrain_now(now_ms)
        if artifact is None:
            raise EngineError("bootstrap retrain failed")
        return artifact

    @property
    def serving_version(self) -> Optional[int]:
        serving = self.serving
        return serving.artifact.version if serving else None

    # -- ingest -------------------------------------------------------------------

    def process_event(self, event: Event) -> ProcessOutcome:
        serving = self.serving
        if serving is None:
            raise EngineError(
                f"scenario {self.scenario.scenario_id!r} has no published model artifact"
            )
        day = self.store.day(event.timestamp_ms)
        day.raw_events += 1

        hit = None
        for rule in self.rules:
            result = evaluate(rule, event.command_line)
            if result.matched:
                hit = (rule, result)
                break
        if hit is None:
            return ProcessOutcome(filtered=False)
        rule, result = hit
        day.filter_hits += 1
        self.store.append_history(event.command_line, event.timestamp_ms)

        try:
            score = clf.score(
                serving.model, vectorize(self.vec_config, event.command_line)
            )
        except Exception as exc:
            self.quarantined += 1
            self.store.quarantine(event, f"scoring failure: {exc}")
            return ProcessOutcome(filtered=True, action="quarantined")

        if score < serving.artifact.threshold:
            return ProcessOutcome(filtered=True, score=score)
        day.above_threshold += 1
        with self._state_lock:
            return self._ticket_or_duplicate(event, rule.name, result, score, serving, day)

    def _ticket_or_duplicate(self, event, rule_name, result, score, serving, day):
        key = _dedup_key(self.scenario.scenario_id, rule_name, event.command_line)
        window_ms = int(self.config.dedup_window_hours * 3_600_000)
        existing = self._dedup.get(key)
        if existing and event.timestamp_ms - existing[1] < window_ms:
            ticket = self.store.tickets.get(existing[0])
            if ticket is not None:
                updated = replace(ticket, duplicate_count=ticket.duplicate_count + 1)
                self.store.update_ticket(updated)
                return ProcessOutcome(
                    filtered=True, score=score, ticket_id=ticket.ticket_id, action="duplicate"
                )
        ticket_id = _ticket_id(key, event.event_id)
        spans = ";".join(
            f"{sid}:{a}-{b}" for sid, (a, b) in sorted(result.spans.items())
        )
        ticket = Ticket(
            ticket_id=ticket_id,
            created_at_ms=event.timestamp_ms,
            scenario_id=self.scenario.scenario_id,
            score=score,
            representative_event=event,
            duplicate_count=0,
            enrichment={
                "rule": rule_name,
                "matched": ",".join(result.matched_ids),
                "spans": spans,
                "score": repr(score),
                "model_version": str(serving.artifact.version),
                "host": event.host,
                "user": event.user,
                "dedup_key": key,
            },
        )
        created = self.store.insert_ticket(ticket)
        self._dedup[key] = (ticket_id, event.timestamp_ms)
        if created:
            day.tickets_created += 1
            return ProcessOutcome(
                filtered=True, score=score, ticket_id=ticket_id, action="ticket_created"
            )
        # Replay after a crash: the ticket already exists; treat as duplicate.
        return ProcessOutcome(
            filtered=True, score=score, ticket_id=ticket_id, action="duplicate"
        )

    # -- triage ---------------------------------------------------------------------

    def triage_queue(self, limit: Optional[int] = None, status: str = "open") -> list[Ticket]:
        if status == "all":
            tickets = list(self.store.tickets.values())
        else:
            tickets = [
                t for t in self.store.tickets.values() if t.status is TicketStatus(status)
            ]
        tickets.sort(key=lambda t: (-t.score, t.created_at_ms, t.ticket_id))
        return tickets[:limit] if limit is not None else tickets

    def submit_verdict(self, verdict: Verdict) -> LabeledSample:
        with self._state_lock:
            return self.store.submit_verdict(verdict)

    # -- retraining -------------------------------------------------------------------

    def on_clock(self, now_ms: int) -> Optional[ModelArtifact]:
        """Advance the (simulated or wall) clock; retrain at day boundaries."""
        if not self.config.retrain_daily:
            return None
        day = now_ms // core.MS_PER_DAY
        if self._last_retrain_day is None:
            self._last_retrain_day = day
            return None
        if day > self._last_retrain_day:
            self._last_retrain_day = day
            return self.retrain_now(now_ms)
        return None

    def retrain_now(self, now_ms: int) -> Optional[ModelArtifact]:
        """Run one retrain cycle; on failure the previous artifact stays."""
        if not self._retrain_lock.acquire(blocking=False):
            logger.warning("retrain tick overlaps a running retrain; skipped")
            self.store.audit(f"retrain skipped (overlap) at {now_ms}")
            return None
        try:
            previous = self.serving.artifact if self.serving else None
            since = now_ms - int(self.config.history_span_days * core.MS_PER_DAY)
            history = self.store.history(since_ms=since)
            # Project daily volume over the span the history actually covers
            # (a fresh deployment has minutes of history, not the full window).
            span_days = self.config.history_span_days
            if history:
                observed = (now_ms - min(ts for _, ts in history)) / core.MS_PER_DAY
                span_days = min(span_days, max(observed, 1.0 / 24))
            try:
                result = trainer.retrain_cycle(
                    self.scenario,
                    self.synthetic,
                    self.store.feedback_samples(),
                    history,
                    previous,
                    now_ms=now_ms,
                    vec_config=self.vec_config,
                    clf_config=self.clf_config,
                    history_span_days=span_days,
                    warm_start=self.config.warm_start,
                    freeze_layers=self.config.freeze_layers,
                )
            except (trainer.AssemblyError, clf.DegenerateDataError, clf.TrainingError,
                    CalibrationError, ValueError) as exc:
                logger.error("retrain failed; keeping version %s: %s",
                             previous.version if previous else None, exc)
                self.store.audit(f"retrain FAILED at {now_ms}: {exc}")
                return None
            self.store.publish_artifact(result.artifact)
            self.store.audit(trainer.audit_record(result))
            with self._state_lock:
                self.serving = ServingModel(result.artifact, result.model)
            return result.artifact
        finally:
            self._retrain_lock.release()


def replay_events(
    engine: ScenarioEngine,
    events: Iterable[Event],
    flush_every: int = 2000,
) -> dict[str, int]:
    """Drive the engine from an event sequence using event time as the clock."""
    stats = {"events": 0, "filter_hits": 0, "tickets": 0, "duplicates": 0, "quarantined": 0}
    for event in events:
        engine.on_clock(event.timestamp_ms)
        outcome = engine.process_event(event)
        stats["events"] += 1
        if outcome.filtered:
            stats["filter_hits"] += 1
        if outcome.action == "ticket_created":
            stats["tickets"] += 1
        elif outcome.action == "duplicate":
            stats["duplicates"] += 1
        elif outcome.action == "quarantined":
            stats["quarantined"] += 1
        if stats["events"] % flush_every == 0:
            engine.store.flush_counters()
    engine.store.flush_counters()
    return stats
