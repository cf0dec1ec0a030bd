"""Append-only persistence for one detection scenario.

Tickets, verdicts and feedback live in line-oriented files. The verdict
line is the write-ahead intent record: once it is on disk the verdict is
acknowledged, and load() idempotently re-derives everything it implies
(ticket status, feedback sample), so a crash between the writes loses
nothing. Ticket rows are appended on every change and the last row per
ticket id wins; compact() rewrites the file to drop stale rows.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from cmdsift import core
from cmdsift.core import (
    Decision,
    FormatError,
    LabeledSample,
    ModelArtifact,
    Ticket,
    TicketStatus,
    Verdict,
)

logger = logging.getLogger(__name__)


class VerdictError(ValueError):
    """Unknown ticket or a second verdict for an already-closed ticket."""


def _append_line(path: Path, line: str, sync: bool = False) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()
        if sync:
            os.fsync(fh.fileno())


def _read_lines(path: Path) -> list[str]:
    # split("\n"), not splitlines(): fields legally contain \x1e/\x1f, which
    # splitlines() would treat as line boundaries.
    if not path.exists():
        return []
    with open(path, "r", encoding="utf-8") as fh:
        return [line for line in fh.read().split("\n") if line]


@dataclass
class DayCounters:
    raw_events: int = 0
    filter_hits: int = 0
    above_threshold: int = 0
    tickets_created: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "raw_events": self.raw_events,
            "filter_hits": self.filter_hits,
            "above_threshold": self.above_threshold,
            "tickets_created": self.tickets_created,
        }


class ScenarioStore:
    """Owns the on-disk state of one scenario under <state_dir>/<scenario_id>/."""

    def __init__(self, state_dir: str, scenario_id: str):
        self.scenario_id = scenario_id
        self.root = Path(state_dir) / scenario_id
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "models").mkdir(exist_ok=True)
        self.tickets_path = self.root / "tickets.tsv"
        self.verdicts_path = self.root / "verdicts.tsv"
        self.feedback_path = self.root / "feedback.tsv"
        self.history_path = self.root / "history.tsv"
        self.audit_path = self.root / "audit.log"
        self.quarantine_path = self.root / "quarantine.tsv"
        self.counters_path = self.root / "counters.tsv"
        self.current_model_path = self.root / "models" / "CURRENT"

        self.tickets: dict[str, Ticket] = {}
        self.verdicts: dict[str, Verdict] = {}
        self.counters: dict[int, DayCounters] = {}
        self.malformed_lines = 0
        self.load()

    # -- loading / recovery ---------------------------------------------------

    def load(self) -> None:
        self.tickets.clear()
        self.verdicts.clear()
        self.counters.clear()
        for line in _read_lines(self.tickets_path):
            try:
                t = core.parse_ticket(line)
                self.tickets[t.ticket_id] = t
            except (FormatError, ValueError):
                self.malformed_lines += 1
        for line in _read_lines(self.verdicts_path):
            try:
                v = core.parse_verdict(line)
                self.verdicts[v.ticket_id] = v
            except (FormatError, ValueError):
                self.malformed_lines += 1
        for line in _read_lines(self.counters_path):
            try:
                day, raw, hits, above, created = line.split("\t")
                self.counters[int(day)] = DayCounters(
                    int(raw), int(hits), int(above), int(created)
                )
            except ValueError:
                self.malformed_lines += 1
        self._repair()

    def _repair(self) -> None:
        """Re-derive the effects implied by acknowledged verdict lines."""
        feedback_tickets = {
            s.source_ticket for s in self.feedback_samples() if s.source_ticket
        }
        for ticket_id, verdict in self.verdicts.items():
            ticket = self.tickets.get(ticket_id)
            if ticket is None:
                continue  # verdict for a compacted-away ticket; nothing to do
            wanted = (
                TicketStatus.ESCALATED
                if verdict.decision is Decision.ESCALATED
                else TicketStatus.CLOSED_FALSE_POSITIVE
            )
            if ticket.status is not wanted:
                ticket = ticket.with_status(wanted)
                self.tickets[ticket_id] = ticket
                _append_line(self.tickets_path, core.serialize_ticket(ticket))
                logger.info("repaired ticket status for %s", ticket_id)
            if ticket_id not in feedback_tickets:
                sample = core.verdict_to_sample(verdict, ticket)
                _append_line(self.feedback_path, core.serialize_sample(sample), sync=True)
                logger.info("repaired missing feedback for %s", ticket_id)

    # -- tickets ----------------------------------------------------------------

    def insert_ticket(self, ticket: Ticket) -> bool:
        """Persist a new ticket; returns False if the id already exists."""
        if ticket.ticket_id in self.tickets:
            return False
        self.tickets[ticket.ticket_id] = ticket
        _append_line(self.tickets_path, core.serialize_ticket(ticket), sync=True)
        return True

    def update_ticket(self, ticket: Ticket, sync: bool = False) -> None:
        if ticket.ticket_id not in self.tickets:
            raise VerdictError(f"unknown ticket {ticket.ticket_id!r}")
        self.tickets[ticket.ticket_id] = ticket
        _append_line(self.tickets_path, core.serialize_ticket(ticket), sync=sync)

    def open_tickets(self) -> list[Ticket]:
        return [t for t in self.tickets.values() if t.status is TicketStatus.OPEN]

    def submit_verdict(self, verdict: Verdict) -> LabeledSample:
        """Acknowledge a verdict: persist intent, then apply its effects."""
        ticket = self.tickets.get(verdict.ticket_id)
        if ticket is None:
            raise VerdictError(f"unknown ticket {verdict.ticket_id!r}")
        if ticket.status is not TicketStatus.OPEN or verdict.ticket_id in self.verdicts:
            raise VerdictError(f"ticket {verdict.ticket_id!r} already has a verdict")
        new_status = (
            TicketStatus.ESCALATED
            if verdict.decision is Decision.ESCALATED
            else TicketStatus.CLOSED_FALSE_POSITIVE
        )
        updated = ticket.with_status(new_status)
        sample = core.verdict_to_sample(verdict, updated)
        # Order matters: the verdict line makes the rest recoverable.
        _append_line(self.verdicts_path, core.serialize_verdict(verdict), sync=True)
        self.verdicts[verdict.ticket_id] = verdict
        _append_line(self.feedback_path, core.serialize_sample(sample), sync=True)
        self.update_ticket(updated, sync=True)
        self.audit(
            f"verdict ticket={verdict.ticket_id} decision={verdict.decision.value} "
            f"analyst={verdict.analyst}"
        )
        return sample

    def verdicts_ordered(self) -> list[Verdict]:
        return sorted(self.verdicts.values(), key=lambda v: (v.decided_at_ms, v.ticket_id))

    # -- feedback / history -----------------------------------------------------

    def feedback_samples(self) -> list[LabeledSample]:
        out = []
        for line in _read_lines(self.feedback_path):
            try:
                out.append(core.parse_sample(line))
            except (FormatError, ValueError):
                self.malformed_lines += 1
        return out

    def append_history(self, command_line: str, timestamp_ms: int) -> None:
        _append_line(
            self.history_path,
            f"{timestamp_ms}\t{core.escape_field(command_line)}",
        )

    def history(self, since_ms: int = 0) -> list[tuple[str, int]]:
        out = []
        for line in _read_lines(self.history_path):
            ts_str, _, cmd = line.partition("\t")
            try:
                ts = int(ts_str)
            except ValueError:
                self.malformed_lines += 1
                continue
            if ts >= since_ms:
                out.append((core.unescape_field(cmd), ts))
        return out

    def quarantine(self, event: core.Event, reason: str) -> None:
        _append_line(
            self.quarantine_path,
            core.escape_field(reason) + "\t" + core.serialize_event(event),
        )

    def audit(self, message: str) -> None:
        _append_line(self.audit_path, message.replace("\n", " "))

    # -- counters -----------------------------------------------------------------

    def day(self, timestamp_ms: int) -> DayCounters:
        key = timestamp_ms // core.MS_PER_DAY
        if key not in self.counters:
            self.counters[key] = DayCounters()
        return self.counters[key]

    def flush_counters(self) -> None:
        tmp = self.counters_path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for day in sorted(self.counters):
                c = self.counters[day]
                fh.write(
                    f"{day}\t{c.raw_events}\t{c.filter_hits}\t"
                    f"{c.above_threshold}\t{c.tickets_created}\n"
                )
        tmp.replace(self.counters_path)

    def totals(self) -> DayCounters:
        total = DayCounters()
        for c in self.counters.values():
            total.raw_events += c.raw_events
            total.filter_hits += c.filter_hits
            total.above_threshold += c.above_threshold
            total.tickets_created += c.tickets_created
        return total

    # -- model artifacts -----------------------------------------------------------

    def publish_artifact(self, artifact: ModelArtifact) -> Path:
        """Write the artifact file, then atomically repoint CURRENT at it."""
        path = self.root / "models" / f"v{artifact.version}.model"
        core.write_artifact(str(path), artifact)
        tmp = self.current_model_path.with_suffix(".tmp")
        tmp.write_text(path.name, encoding="utf-8")
        tmp.replace(self.current_model_path)
        return path

    def load_current_artifact(self) -> Optional[ModelArtifact]:
        if not self.current_model_path.exists():
            return None
        name = self.current_model_path.read_text(encoding="utf-8").strip()
        path = self.root / "models" / name
        if not path.exists():
            logger.warning("CURRENT points at missing artifact %s", name)
            return None
        return core.read_artifact(str(path))

    # -- maintenance -----------------------------------------------------------------

    def compact(self) -> None:
        """Drop superseded ticket rows and trim history to the trailing span."""
        tmp = self.tickets_path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for t in sorted(self.tickets.values(), key=lambda t: (t.created_at_ms, t.ticket_id)):
                fh.write(core.serialize_ticket(t) + "\n")
        tmp.replace(self.tickets_path)

    def trim_history(self, keep_since_ms: int) -> None:
        rows = self.history(since_ms=keep_since_ms)
        tmp = self.history_path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for cmd, ts in rows:
                fh.write(f"{ts}\t{core.escape_field(cmd)}\n")
        tmp.replace(self.history_path)
