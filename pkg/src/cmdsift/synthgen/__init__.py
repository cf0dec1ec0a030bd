"""Synthetic labeled-dataset generation: plans, taxonomies, and the
generator-critic per-example loop, against a pluggable text backend."""

from cmdsift.synthgen.backends import BackendError, GenerationBackend, HttpBackend, MockBackend
from cmdsift.synthgen.generate import (
    GeneratedSample,
    GenerationError,
    GenStats,
    Mix,
    expand_scenarios,
    generate_and_critique,
    generate_dataset,
    sample_mix,
)
from cmdsift.synthgen.plan import GenerationPlan, GenerationStrategy, PlanError, draft_plan, emit_plan, load_plan, parse_plan
from cmdsift.synthgen.taxonomy import TaxonomyNode, build_taxonomy, dump_taxonomy, parse_taxonomy

__all__ = [
    "BackendError",
    "GenerationBackend",
    "HttpBackend",
    "MockBackend",
    "GeneratedSample",
    "GenerationError",
    "GenStats",
    "Mix",
    "expand_scenarios",
    "generate_and_critique",
    "generate_dataset",
    "sample_mix",
    "GenerationPlan",
    "GenerationStrategy",
    "PlanError",
    "draft_plan",
    "emit_plan",
    "load_plan",
    "parse_plan",
    "TaxonomyNode",
    "build_taxonomy",
    "dump_taxonomy",
    "parse_taxonomy",
]
