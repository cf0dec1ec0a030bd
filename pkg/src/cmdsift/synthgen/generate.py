"""Per-example generation loop: sample a (strategy, taxonomy-leaf) mix,
expand it into concrete scenarios, generate one command with metadata, and
gate acceptance on a dual critic (the plausibility question and its
negation must disagree in the right direction)."""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass, field
from typing import Optional

from cmdsift.core import Label, LabeledSample, Origin
from cmdsift.synthgen.backends import BackendError
from cmdsift.synthgen.plan import GenerationPlan, GenerationStrategy
from cmdsift.synthgen.prompts import render
from cmdsift.synthgen.taxonomy import TaxonomyNode

logger = logging.getLogger(__name__)


class GenerationError(RuntimeError):
    """Dataset generation cannot proceed (coverage or acceptance floor)."""


@dataclass(frozen=True)
class Mix:
    strategy: str
    leaf_path: tuple[str, ...]


@dataclass
class GeneratedSample:
    command_line: str
    classification: str
    score: int
    rationale: str
    mix: Mix
    scenario: str
    accepted: bool
    discard_reason: Optional[str] = None


@dataclass
class GenStats:
    attempts: int = 0
    accepted: int = 0
    discarded: dict[str, int] = field(default_factory=dict)

    def discard(self, reason: str) -> None:
        self.discarded[reason] = self.discarded.get(reason, 0) + 1

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0


def sample_mix(
    plan: GenerationPlan,
    taxonomies: dict[str, TaxonomyNode],
    rng: random.Random,
) -> Mix:
    """Draw a strategy per configured proportions, then a leaf uniformly."""
    names = [s.name for s in plan.strategies]
    weights = [s.proportion for s in plan.strategies]
    for name in names:
        root = taxonomies.get(name)
        if root is None or not root.leaf_paths() or root.leaf_paths() == [(root.name,)]:
            raise GenerationError(f"strategy {name!r} has no built taxonomy with leaves")
    strategy = rng.choices(names, weights=weights, k=1)[0]
    leaves = taxonomies[strategy].leaf_paths()
    return Mix(strategy=strategy, leaf_path=tuple(rng.choice(leaves)))


def expand_scenarios(
    mix: Mix,
    strategy: GenerationStrategy,
    backend,
    k: int,
) -> list[str]:
    """Ask for k distinct scenario sentences; proceed with what parses."""
    if k < 1:
        raise ValueError("k must be >= 1")
    reply = backend.complete(
        render(
            "expand_scenarios",
            strategy=strategy.name,
            label=strategy.label.value,
            path=" > ".join(mix.leaf_path),
            k=k,
            overall_guidance=strategy.overall_guidance,
        )
    )
    scenarios = []
    for line in reply.splitlines():
        line = line.strip()
        m = re.match(r"^\d+[\.\)]\s*(.+)$", line)
        if m:
            scenarios.append(m.group(1).strip())
        elif line:
            scenarios.append(line)
    if not scenarios:
        raise BackendError("no scenarios parsed from backend reply")
    return scenarios[:k]


def build_meta_prompt(
    mix: Mix, strategy: GenerationStrategy, scenario: str, variant: int = 0
) -> str:
    prompt = render(
        "generate_sample",
        strategy=strategy.name,
        label=strategy.label.value,
        path=" > ".join(mix.leaf_path),
        scenario=scenario,
        overall_guidance=strategy.overall_guidance,
        field_guidance=strategy.field_guidance,
    )
    # Extra per-attempt context so repeated draws of one mix still vary.
    return f"{prompt}\nVARIANT: {variant}\n" if variant else prompt


_FIELD_RE = {
    "command": re.compile(r"^COMMAND:\s*(.+)$", re.MULTILINE),
    "class": re.compile(r"^CLASS:\s*(\S+)", re.MULTILINE),
    "score": re.compile(r"^SCORE:\s*(\d+)", re.MULTILINE),
    "rationale": re.compile(r"^RATIONALE:\s*(.+)$", re.MULTILINE),
}


def generate_and_critique(
    meta_prompt: str,
    expected_label: Label,
    backend,
    *,
    mix: Mix,
    scenario: str,
) -> GeneratedSample:
    """One generation attempt plus the dual-critic quality gate."""
    reply = backend.complete(meta_prompt)
    fields = {}
    for key, rx in _FIELD_RE.items():
        m = rx.search(reply)
        fields[key] = m.group(1).strip() if m else None
    if not fields["command"] or not fields["class"]:
        return GeneratedSample(
            command_line=fields["command"] or "",
            classification=fields["class"] or "",
            score=int(fields["score"] or 0),
            rationale=fields["rationale"] or "",
            mix=mix,
            scenario=scenario,
            accepted=False,
            discard_reason="unparseable",
        )
    command, classification = fields["command"], fields["class"]
    sample = GeneratedSample(
        command_line=command,
        classification=classification,
        score=int(fields["score"] or 0),
        rationale=fields["rationale"] or "",
        mix=mix,
        scenario=scenario,
        accepted=False,
    )
    positive_q = render("judge_sample", command=command, classification=classification)
    negated_q = render("judge_sample_negated", command=command, classification=classification)
    yes_plain, _ = backend.judge(positive_q)
    yes_negated, _ = backend.judge(negated_q)
    # Accept only when both formulations agree the sample is plausible.
    if yes_plain and not yes_negated:
        sample.accepted = True
    else:
        sample.discard_reason = "critic_disagreement"
    return sample


def check_coverage(plan: GenerationPlan, taxonomies: dict[str, TaxonomyNode]) -> None:
    for s in plan.strategies:
        root = taxonomies.get(s.name)
        leaves = root.leaf_paths() if root else []
        n = 0 if (not root or leaves == [(root.name,)]) else len(leaves)
        if n < plan.min_leaves:
            raise GenerationError(
                f"strategy {s.name!r} has {n} taxonomy leaves, below floor {plan.min_leaves}"
            )


_PROBE_BATCH = 50


def generate_dataset(
    plan: GenerationPlan,
    taxonomies: dict[str, TaxonomyNode],
    counts: dict[Label, int],
    backend,
    seed: int,
    now_ms: int,
) -> tuple[list[LabeledSample], list[GeneratedSample], GenStats]:
    """Loop the per-example phase until each label's accepted quota is met.

    With the mock backend this is a pure function of (plan, taxonomies,
    counts, seed, now_ms).
    """
    check_coverage(plan, taxonomies)
    rng = random.Random(seed)
    strategies = {s.name: s for s in plan.strategies}
    remaining = {label: int(n) for label, n in counts.items() if n > 0}
    total_needed = sum(remaining.values())
    samples: list[LabeledSample] = []
    generated: list[GeneratedSample] = []
    stats = GenStats()
    max_attempts = max(1000, 40 * total_needed)

    while remaining and stats.attempts < max_attempts:
        mix = sample_mix(plan, taxonomies, rng)
        strategy = strategies[mix.strategy]
        if strategy.label not in remaining:
            continue  # that label's quota is already met
        stats.attempts += 1
        try:
            scenarios = expand_scenarios(mix, strategy, backend, plan.scenarios_per_mix)
            scenario = rng.choice(scenarios)
            gen = generate_and_critique(
                build_meta_prompt(mix, strategy, scenario, variant=rng.randrange(1, 10**9)),
                strategy.label,
                backend,
                mix=mix,
                scenario=scenario,
            )
        except BackendError as exc:
            stats.discard(f"backend_error:{exc}")
            continue
        generated.append(gen)
        if not gen.accepted:
            stats.discard(gen.discard_reason or "rejected")
        else:
            stats.accepted += 1
            samples.append(
                LabeledSample(
                    command_line=gen.command_line,
                    label=strategy.label,
                    origin=Origin.SYNTHETIC,
                    labeled_at_ms=now_ms,
                )
            )
            remaining[strategy.label] -= 1
            if remaining[strategy.label] <= 0:
                del remaining[strategy.label]
        if stats.attempts == _PROBE_BATCH and stats.acceptance_rate < plan.acceptance_floor:
            raise GenerationError(
                f"acceptance rate {stats.acceptance_rate:.2f} after {_PROBE_BATCH} attempts "
                f"is below floor {plan.acceptance_floor}; discards: {stats.discarded}"
            )
    if remaining:
        raise GenerationError(
            f"attempt cap {max_attempts} reached with quotas unmet: "
            f"{ {k.value: v for k, v in remaining.items()} }; discards: {stats.discarded}"
        )
    return samples, generated, stats
