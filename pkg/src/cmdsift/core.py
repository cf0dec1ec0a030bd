"""Shared domain types and their line-oriented file formats.

Everything that flows between pipeline stages (events, labeled samples,
tickets, verdicts, model artifacts) is defined here as an immutable value
object together with its canonical serialization. All timestamps are UTC
milliseconds since the epoch.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Iterator, Optional

import numpy as np

from cmdsift.vectorize import VectorizerConfig

MS_PER_DAY = 86_400_000

class Label(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"

class Origin(str, Enum):
    SYNTHETIC = "synthetic"
    FEEDBACK = "feedback"

class TicketStatus(str, Enum):
    OPEN = "open"
    CLOSED_FALSE_POSITIVE = "closed_false_positive"
    ESCALATED = "escalated"

class Decision(str, Enum):
    FALSE_POSITIVE = "false_positive"
    ESCALATED = "escalated"

# The only legal status transitions: open tickets close exactly once.
_TICKET_TRANSITIONS = {
    (TicketStatus.OPEN, TicketStatus.CLOSED_FALSE_POSITIVE),
    (TicketStatus.OPEN, TicketStatus.ESCALATED),
}

class CoreError(ValueError):
    """Invalid value object or rejected state transition."""

@dataclass(frozen=True)
class Event:
    """One observed command-line execution."""

    event_id: str
    timestamp_ms: int
    host: str
    user: str
    process: str
    command_line: str

    def __post_init__(self):
        if not self.event_id:
            raise CoreError("event_id must be non-empty")

@dataclass(frozen=True)
class DetectionScenario:
    """Per-detection configuration: rule set, ticket budget, decay policy knobs."""

    scenario_id: str
    rule_file: str
    budget_n: int = 5
    decay_horizon_days: float = 180.0
    feedback_ratio: float = 1.0

    def __post_init__(self):
        if self.budget_n < 1:
            raise CoreError("budget_n must be >= 1")
        if self.decay_horizon_days <= 0:
            raise CoreError("decay_horizon_days must be > 0")
        if self.feedback_ratio <= 0:
            raise CoreError("feedback_ratio must be > 0")

@dataclass(frozen=True)
class LabeledSample:
    command_line: str
    label: Label
    origin: Origin
    labeled_at_ms: int
    source_ticket: Optional[str] = None

    def __post_init__(self):
        if self.origin is Origin.FEEDBACK and not self.source_ticket:
            raise CoreError("feedback samples must carry a source_ticket")

@dataclass(frozen=True)
class WeightedSample:
    sample: LabeledSample
    weight: float

    def __post_init__(self):
        if not np.isfinite(self.weight) or self.weight < 0:
            raise CoreError(f"weight must be finite and >= 0, got {self.weight}")

@dataclass(frozen=True)
class Ticket:
    ticket_id: str
    created_at_ms: int
    scenario_id: str
    score: float
    representative_event: Event
    duplicate_count: int = 0
    enrichment: dict[str, str] = field(default_factory=dict)
    status: TicketStatus = TicketStatus.OPEN

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise CoreError(f"score must be in [0,1], got {self.score}")
        if self.duplicate_count < 0:
            raise CoreError("duplicate_count must be >= 0")

    def with_status(self, new: TicketStatus) -> "Ticket":
        if (self.status, new) not in _TICKET_TRANSITIONS:
            raise CoreError(f"illegal ticket transition {self.status.value} -> {new.value}")
        return replace(self, status=new)

@dataclass(frozen=True)
class Verdict:
    ticket_id: str
    decision: Decision
    analyst: str
    decided_at_ms: int

@dataclass(frozen=True)
class ModelArtifact:
    """A trained classifier plus its calibrated threshold, published as one unit."""

    version: int
    vectorizer_config: VectorizerConfig
    shapes: tuple[tuple[int, ...], ...]
    parameters: np.ndarray
    threshold: float
    trained_at_ms: int
    training_set_digest: str
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise CoreError(f"threshold must be strictly inside (0,1), got {self.threshold}")
        declared = sum(int(np.prod(s)) for s in self.shapes)
        if declared != self.parameters.size:
            raise CoreError(
                f"parameter count {self.parameters.size} does not match shapes ({declared})"
            )

def verdict_to_sample(verdict: Verdict, ticket: Ticket) -> LabeledSample:
    """Turn an analyst verdict into a feedback training sample."""
    if verdict.ticket_id != ticket.ticket_id:
        raise CoreError(
            f"verdict ticket {verdict.ticket_id!r} does not match ticket {ticket.ticket_id!r}"
        )
    label = Label.POSITIVE if verdict.decision is Decision.ESCALATED else Label.NEGATIVE
    return LabeledSample(
        command_line=ticket.representative_event.command_line,
        label=label,
        origin=Origin.FEEDBACK,
        labeled_at_ms=verdict.decided_at_ms,
        source_ticket=ticket.ticket_id,
    )

# ---------------------------------------------------------------------------
# Line formats. One record per line, tab-separated, UTF-8. Tabs, newlines and
# backslashes inside fields are escaped so any string round-trips.
# ---------------------------------------------------------------------------

def escape_field(value: str) -> str:
    return (
        value.replace("\\", "\\\\")
        .replace("\t", "\\t")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )

def unescape_field(value: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(value):
        ch = value[i]
        if ch == "\\" and i + 1 < len(value):
            nxt = value[i + 1]
            out.append({"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)

class FormatError(ValueError):
    """Malformed record line."""

def _split_line(line: str, n_fields: int, kind: str) -> list[str]:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != n_fields:
        raise FormatError(f"{kind} line has {len(parts)} fields, expected {n_fields}")
    return [unescape_field(p) for p in parts]

def serialize_event(e: Event) -> str:
    fields = [e.event_id, str(e.timestamp_ms), e.host, e.user, e.process, e.command_line]
    return "\t".join(escape_field(f) for f in fields)

def parse_event(line: str) -> Event:
    f = _split_line(line, 6, "event")
    try:
        ts = int(f[1])
    except ValueError as exc:
        raise FormatError(f"bad timestamp {f[1]!r}") from exc
    return Event(f[0], ts, f[2], f[3], f[4], f[5])

def serialize_sample(s: LabeledSample) -> str:
    fields = [
        s.label.value,
        s.origin.value,
        str(s.labeled_at_ms),
        s.source_ticket or "",
        s.command_line,
    ]
    return "\t".join(escape_field(f) for f in fields)

def parse_sample(line: str) -> LabeledSample:
    f = _split_line(line, 5, "sample")
    return LabeledSample(
        command_line=f[4],
        label=Label(f[0]),
        origin=Origin(f[1]),
        labeled_at_ms=int(f[2]),
        source_ticket=f[3] or None,
    )

def serialize_ticket(t: Ticket) -> str:
    e = t.representative_event
    enrichment = "\x1e".join(f"{k}\x1f{v}" for k, v in sorted(t.enrichment.items()))
    fields = [
        t.ticket_id,
        str(t.created_at_ms),
        t.scenario_id,
        repr(t.score),
        str(t.duplicate_count),
        t.status.value,
        enrichment,
        e.event_id,
        str(e.timestamp_ms),
        e.host,
        e.user,
        e.process,
        e.command_line,
    ]
    return "\t".join(escape_field(f) for f in fields)

def parse_ticket(line: str) -> Ticket:
    f = _split_line(line, 13, "ticket")
    enrichment: dict[str, str] = {}
    if f[6]:
        for pair in f[6].split("\x1e"):
            k, _, v = pair.partition("\x1f")
            enrichment[k] = v
    event = Event(f[7], int(f[8]), f[9], f[10], f[11], f[12])
    return Ticket(
        ticket_id=f[0],
        created_at_ms=int(f[1]),
        scenario_id=f[2],
        score=float(f[3]),
        representative_event=event,
        duplicate_count=int(f[4]),
        enrichment=enrichment,
        status=TicketStatus(f[5]),
    )

def serialize_verdict(v: Verdict) -> str:
    fields = [v.ticket_id, v.decision.value, v.analyst, str(v.decided_at_ms)]
    return "\t".join(escape_field(f) for f in fields)

def parse_verdict(line: str) -> Verdict:
    f = _split_line(line, 4, "verdict")
    return Verdict(f[0], Decision(f[1]), f[2], int(f[3]))

class EventReader:
    """Iterate events from a file, skipping (and counting) malformed lines."""

    def __init__(self, path: str):
        self.path = path
        self.skipped = 0

    def __iter__(self) -> Iterator[Event]:
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                try:
                    yield parse_event(line)
                except (FormatError, CoreError):
                    self.skipped += 1

def write_events(path: str, events: Iterable[Event]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(serialize_event(e) + "\n")
            n += 1
    return n

def read_samples(path: str) -> list[LabeledSample]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(parse_sample(line))
    return out

def write_samples(path: str, samples: Iterable[LabeledSample]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(serialize_sample(s) + "\n")
            n += 1
    return n

def training_set_digest(weighted: Iterable[WeightedSample]) -> str:
    """Content hash over sorted (command_line, label, weight) triples."""
    triples = sorted(
        (w.sample.command_line, w.sample.label.value, repr(float(w.weight))) for w in weighted
    )
    h = hashlib.sha256()
    for cmd, label, weight in triples:
        h.update(escape_field(cmd).encode("utf-8"))
        h.update(b"\x1f")
        h.update(label.encode("ascii"))
        h.update(b"\x1f")
        h.update(weight.encode("ascii"))
        h.update(b"\x1e")
    return "sha256:" + h.hexdigest()

# ---------------------------------------------------------------------------
# Model artifact file: UTF-8 key = value header, blank line, then the flat
# parameter array as little-endian float64.
# ---------------------------------------------------------------------------

_ARTIFACT_MAGIC = "cmdsift-model/1"

def write_artifact(path: str, artifact: ModelArtifact) -> None:
    header_lines = [f"format = {_ARTIFACT_MAGIC}"]
    header_lines.append(f"version = {artifact.version}")
    header_lines.append(f"trained_at_ms = {artifact.trained_at_ms}")
    header_lines.append(f"threshold = {artifact.threshold!r}")
    header_lines.append(f"training_set_digest = {artifact.training_set_digest}")
    for k, v in artifact.vectorizer_config.to_dict().items():
        header_lines.append(f"vectorizer.{k} = {v}")
    header_lines.append(
        "shapes = " + ";".join(",".join(str(d) for d in s) for s in artifact.shapes)
    )
    for k in sorted(artifact.meta):
        header_lines.append(f"meta.{k} = {escape_field(artifact.meta[k])}")
    header_lines.append(f"params_count = {artifact.parameters.size}")
    payload = np.ascontiguousarray(artifact.parameters, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(("\n".join(header_lines) + "\n\n").encode("utf-8"))
        fh.write(payload)

def read_artifact(path: str) -> ModelArtifact:
    with open(path, "rb") as fh:
        blob = fh.read()
    sep = blob.find(b"\n\n")
    if sep < 0:
        raise FormatError("artifact file missing header terminator")
    header, payload = blob[:sep].decode("utf-8"), blob[sep + 2 :]
    kv: dict[str, str] = {}
    for line in header.splitlines():
        if not line.strip():
            continue
        key, eq, value = line.partition(" = ")
        if not eq:
            raise FormatError(f"bad artifact header line: {line!r}")
        kv[key] = value
    if kv.get("format") != _ARTIFACT_MAGIC:
        raise FormatError(f"unsupported artifact format {kv.get('format')!r}")
    count = int(kv["params_count"])
    if len(payload) != count * 8:
        raise FormatError(f"artifact payload is {len(payload)} bytes, expected {count * 8}")
    params = np.frombuffer(payload, dtype="<f8", count=count).astype(np.float64)
    shapes = tuple(
        tuple(int(d) for d in part.split(",")) for part in kv["shapes"].split(";") if part
    )
    vec_kv = {k[len("vectorizer.") :]: v for k, v in kv.items() if k.startswith("vectorizer.")}
    meta = {k[len("meta.") :]: unescape_field(v) for k, v in kv.items() if k.startswith("meta.")}
    return ModelArtifact(
        version=int(kv["version"]),
        vectorizer_config=VectorizerConfig.from_dict(vec_kv),
        shapes=shapes,
        parameters=params,
        threshold=float(kv["threshold"]),
        trained_at_ms=int(kv["trained_at_ms"]),
        training_set_digest=kv["training_set_digest"],
        meta=meta,
    )
