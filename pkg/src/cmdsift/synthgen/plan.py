"""Generation plans: strategies plus the constants steering taxonomy
construction and per-example generation. Stored as a human-editable
section/key file so analysts tune prompts, not code."""

from __future__ import annotations

from dataclasses import dataclass, field

from cmdsift.core import Label


class PlanError(ValueError):
    """Malformed or incomplete plan file."""


@dataclass(frozen=True)
class GenerationStrategy:
    name: str
    label: Label
    overall_guidance: str
    field_guidance: str
    taxonomy_root: str
    taxonomy_instruction: str
    proportion: float = 1.0

    def __post_init__(self):
        if not self.overall_guidance or not self.field_guidance:
            raise PlanError(f"strategy {self.name!r}: guidance must be non-empty")
        if self.proportion <= 0:
            raise PlanError(f"strategy {self.name!r}: proportion must be > 0")


@dataclass
class GenerationPlan:
    name: str
    strategies: list[GenerationStrategy] = field(default_factory=list)
    max_depth: int = 3
    best_of_n: int = 3
    critic_iterations: int = 2
    max_retries: int = 3
    min_leaves: int = 10
    scenarios_per_mix: int = 3
    acceptance_floor: float = 0.2

    def strategy(self, name: str) -> GenerationStrategy:
        for s in self.strategies:
            if s.name == name:
                return s
        raise PlanError(f"unknown strategy {name!r}")


_PLAN_KEYS = {
    "name": str,
    "max_depth": int,
    "best_of_n": int,
    "critic_iterations": int,
    "max_retries": int,
    "min_leaves": int,
    "scenarios_per_mix": int,
    "acceptance_floor": float,
}
_STRATEGY_KEYS = {
    "label",
    "proportion",
    "overall_guidance",
    "field_guidance",
    "taxonomy_root",
    "taxonomy_instruction",
}


def parse_plan(text: str) -> GenerationPlan:
    plan_kv: dict[str, str] = {}
    strategies: list[tuple[str, dict[str, str]]] = []
    current: dict[str, str] | None = None
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section == "plan":
                current = plan_kv
            elif section.startswith("strategy "):
                current = {}
                strategies.append((section[len("strategy ") :].strip(), current))
            else:
                raise PlanError(f"line {lineno}: unknown section [{section}]")
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise PlanError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = key.strip(), value.strip()
        if current is None:
            raise PlanError(f"line {lineno}: key outside any section")
        if current is plan_kv:
            if key not in _PLAN_KEYS:
                raise PlanError(f"line {lineno}: unknown plan key {key!r}")
        elif key not in _STRATEGY_KEYS:
            raise PlanError(f"line {lineno}: unknown strategy key {key!r}")
        current[key] = value

    plan = GenerationPlan(name=plan_kv.get("name", "unnamed"))
    for key, cast in _PLAN_KEYS.items():
        if key in plan_kv and key != "name":
            setattr(plan, key, cast(plan_kv[key]))
    seen: set[str] = set()
    for name, kv in strategies:
        if name in seen:
            raise PlanError(f"duplicate strategy {name!r}")
        seen.add(name)
        missing = _STRATEGY_KEYS - set(kv) - {"proportion"}
        if missing:
            raise PlanError(f"strategy {name!r} missing keys: {sorted(missing)}")
        plan.strategies.append(
            GenerationStrategy(
                name=name,
                label=Label(kv["label"]),
                overall_guidance=kv["overall_guidance"],
                field_guidance=kv["field_guidance"],
                taxonomy_root=kv["taxonomy_root"],
                taxonomy_instruction=kv["taxonomy_instruction"],
                proportion=float(kv.get("proportion", "1.0")),
            )
        )
    if not plan.strategies:
        raise PlanError("plan declares no strategies")
    return plan


def emit_plan(plan: GenerationPlan) -> str:
    lines = ["[plan]", f"name = {plan.name}"]
    for key in _PLAN_KEYS:
        if key == "name":
            continue
        lines.append(f"{key} = {getattr(plan, key)}")
    for s in plan.strategies:
        lines.append("")
        lines.append(f"[strategy {s.name}]")
        lines.append(f"label = {s.label.value}")
        lines.append(f"proportion = {s.proportion}")
        lines.append(f"overall_guidance = {s.overall_guidance}")
        lines.append(f"field_guidance = {s.field_guidance}")
        lines.append(f"taxonomy_root = {s.taxonomy_root}")
        lines.append(f"taxonomy_instruction = {s.taxonomy_instruction}")
    return "\n".join(lines) + "\n"


def load_plan(path: str) -> GenerationPlan:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_plan(fh.read())


def draft_plan(objective: str, backend) -> str:
    """Agent-assisted planning: ask the backend for a complete plan file,
    validate it parses, and return the text for human review and edit."""
    from cmdsift.synthgen.prompts import render

    text = backend.complete(render("draft_plan", objective=objective))
    parse_plan(text)  # reject drafts that do not even parse
    return text
