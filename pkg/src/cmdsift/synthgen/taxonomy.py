"""Level-by-level taxonomy construction via a generator-critic loop.

Each level is built from the union of several independent child-set
proposals, refined by a critic that names missing or superfluous nodes,
then a consistent plan for the next level is requested before recursing.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Optional

from cmdsift.synthgen.backends import BackendError
from cmdsift.synthgen.plan import GenerationPlan, GenerationStrategy
from cmdsift.synthgen.prompts import render

logger = logging.getLogger(__name__)


@dataclass
class TaxonomyNode:
    name: str
    children: list["TaxonomyNode"] = field(default_factory=list)
    level_plan: Optional[str] = None  # plan governing this node's children
    error: Optional[str] = None

    def leaf_paths(self) -> list[tuple[str, ...]]:
        if not self.children:
            return [(self.name,)]
        paths = []
        for child in self.children:
            paths.extend((self.name,) + p for p in child.leaf_paths())
        return paths

    def find(self, path: tuple[str, ...]) -> Optional["TaxonomyNode"]:
        if not path or path[0] != self.name:
            return None
        node = self
        for name in path[1:]:
            node = next((c for c in node.children if c.name == name), None)
            if node is None:
                return None
        return node


@dataclass
class BuildStats:
    proposals: int = 0
    malformed: int = 0
    critic_rounds: int = 0
    backend_failures: int = 0


_NAME_LINE = re.compile(r"^[\-\*\d\.\)\s]*([A-Za-z][A-Za-z0-9 ::\-_/&']*)$")


def _parse_names(text: str) -> list[str]:
    names = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        m = _NAME_LINE.match(line)
        if m:
            names.append(m.group(1).strip())
    return names


def _dedupe(names: list[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for n in names:
        key = n.lower()
        if key not in seen:
            seen.add(key)
            out.append(n)
    return out


def _complete_with_retry(backend, prompt: str, retries: int, stats: BuildStats) -> Optional[str]:
    for _ in range(max(1, retries)):
        try:
            return backend.complete(prompt)
        except BackendError as exc:
            stats.backend_failures += 1
            logger.warning("backend failure: %s", exc)
    return None


def build_taxonomy(
    strategy: GenerationStrategy,
    instruction: str,
    backend,
    plan: GenerationPlan,
) -> tuple[TaxonomyNode, BuildStats]:
    """Build the strategy's taxonomy tree, bounded by plan.max_depth."""
    if not instruction:
        raise ValueError("taxonomy instruction must be non-empty")
    stats = BuildStats()
    root = TaxonomyNode(name=strategy.taxonomy_root)
    frontier = [(root, (strategy.taxonomy_root,))]
    for _depth in range(plan.max_depth):
        next_frontier: list[tuple[TaxonomyNode, tuple[str, ...]]] = []
        for node, path in frontier:
            if node.level_plan == "STOP":
                continue
            children = _build_children(strategy, instruction, backend, plan, node, path, stats)
            if not children:
                continue
            node.children = [TaxonomyNode(name=c) for c in children]
            level_plan = _next_level_plan(
                strategy, instruction, backend, plan, path, children, stats
            )
            for child in node.children:
                child.level_plan = level_plan
                next_frontier.append((child, path + (child.name,)))
        if not next_frontier:
            break
        frontier = next_frontier
    return root, stats


def _build_children(
    strategy: GenerationStrategy,
    instruction: str,
    backend,
    plan: GenerationPlan,
    node: TaxonomyNode,
    path: tuple[str, ...],
    stats: BuildStats,
) -> list[str]:
    path_text = " > ".join(path)
    union: list[str] = []
    for i in range(plan.best_of_n):
        prompt = render(
            "propose_children",
            strategy=strategy.name,
            path=path_text,
            node=node.name,
            level_plan=node.level_plan or "",
            instruction=instruction,
            overall_guidance=strategy.overall_guidance,
        ) + f"\nPROPOSAL: {i + 1}\n"
        reply = _complete_with_retry(backend, prompt, plan.max_retries, stats)
        if reply is None:
            node.error = "backend failed during proposal"
            continue
        stats.proposals += 1
        names = _parse_names(reply)
        if not names and reply.strip():
            stats.malformed += 1
        union = _dedupe(union + names)
    if not union:
        return []

    for _round in range(plan.critic_iterations):
        prompt = render(
            "critique_children",
            strategy=strategy.name,
            path=path_text,
            node=node.name,
            instruction=instruction,
            children=", ".join(union),
        )
        reply = _complete_with_retry(backend, prompt, plan.max_retries, stats)
        if reply is None:
            node.error = "backend failed during critique"
            break
        stats.critic_rounds += 1
        if "COMPLETE" in reply.upper() and "INCOMPLETE" not in reply.upper():
            break
        changed = False
        m = re.search(r"missing:\s*(.+)", reply, re.IGNORECASE)
        if m:
            additions = [n.strip().rstrip(".") for n in m.group(1).split(",") if n.strip()]
            before = len(union)
            union = _dedupe(union + additions)
            changed = changed or len(union) != before
        m = re.search(r"remove:\s*(.+)", reply, re.IGNORECASE)
        if m:
            removals = {n.strip().rstrip(".").lower() for n in m.group(1).split(",")}
            kept = [n for n in union if n.lower() not in removals]
            changed = changed or len(kept) != len(union)
            union = kept
        if not changed:
            break
    return union


def _next_level_plan(
    strategy: GenerationStrategy,
    instruction: str,
    backend,
    plan: GenerationPlan,
    path: tuple[str, ...],
    children: list[str],
    stats: BuildStats,
) -> Optional[str]:
    prompt = render(
        "plan_next_level",
        strategy=strategy.name,
        path=" > ".join(path),
        instruction=instruction,
        children=", ".join(children),
    )
    reply = _complete_with_retry(backend, prompt, plan.max_retries, stats)
    if reply is None:
        return None
    reply = reply.strip()
    return "STOP" if reply.upper().startswith("STOP") else reply


# --- persistence: indented text, two spaces per level ------------------------


def dump_taxonomy(root: TaxonomyNode) -> str:
    lines: list[str] = []

    def walk(node: TaxonomyNode, depth: int) -> None:
        lines.append("  " * depth + node.name)
        if node.level_plan:
            lines.append("  " * (depth + 1) + "!plan " + node.level_plan)
        if node.error:
            lines.append("  " * (depth + 1) + "!error " + node.error)
        for child in node.children:
            walk(child, depth + 1)

    walk(root, 0)
    return "\n".join(lines) + "\n"


def parse_taxonomy(text: str) -> TaxonomyNode:
    root: Optional[TaxonomyNode] = None
    stack: list[TaxonomyNode] = []
    for raw in text.splitlines():
        if not raw.strip():
            continue
        depth = (len(raw) - len(raw.lstrip(" "))) // 2
        content = raw.strip()
        if content.startswith("!plan "):
            stack[depth - 1].level_plan = content[len("!plan ") :]
            continue
        if content.startswith("!error "):
            stack[depth - 1].error = content[len("!error ") :]
            continue
        node = TaxonomyNode(name=content)
        if depth == 0:
            if root is not None:
                raise ValueError("taxonomy file has multiple roots")
            root = node
            stack = [node]
        else:
            if depth > len(stack):
                raise ValueError(f"bad indentation at line {raw!r}")
            stack[depth - 1].children.append(node)
            stack = stack[:depth] + [node]
    if root is None:
        raise ValueError("empty taxonomy file")
    return root
