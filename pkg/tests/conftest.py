"""Shared fixtures: one mock-generated dataset and one trained setup model,
built once per session. Experiment configs here are sized for desk-scale
tests; library defaults are exercised separately."""

from __future__ import annotations

import pytest

from cmdsift.classifier import ClassifierConfig
from cmdsift.core import DetectionScenario, Label
from cmdsift.fixtures import data_path, reverse_shell_rule_path
from cmdsift.rules import load_rules
from cmdsift.synthgen import MockBackend, build_taxonomy, generate_dataset, load_plan
from cmdsift.trainer import retrain_cycle
from cmdsift.vectorize import VectorizerConfig

GEN_NOW_MS = 1_749_000_000_000
SETUP_NOW_MS = 1_749_900_000_000


@pytest.fixture(scope="session")
def rs_plan():
    return load_plan(str(data_path("plans", "reverse_shell.plan")))


@pytest.fixture(scope="session")
def mock_backend():
    return MockBackend(seed=3)


@pytest.fixture(scope="session")
def rs_taxonomies(rs_plan, mock_backend):
    return {
        s.name: build_taxonomy(s, s.taxonomy_instruction, mock_backend, rs_plan)[0]
        for s in rs_plan.strategies
    }


@pytest.fixture(scope="session")
def rs_synthetic(rs_plan, rs_taxonomies, mock_backend):
    samples, _, _ = generate_dataset(
        rs_plan,
        rs_taxonomies,
        {Label.POSITIVE: 200, Label.NEGATIVE: 200},
        mock_backend,
        seed=5,
        now_ms=GEN_NOW_MS,
    )
    return samples


@pytest.fixture(scope="session")
def desk_vec():
    return VectorizerConfig(dimensions=2**13)


@pytest.fixture(scope="session")
def desk_clf():
    return ClassifierConfig(
        hidden_units=16,
        epochs=40,
        learning_rate=0.5,
        batch_size=128,
        dropout_rate=0.1,
        rng_seed=1,
    )


@pytest.fixture(scope="session")
def rs_scenario():
    return DetectionScenario(
        "reverse_shell", str(reverse_shell_rule_path()), budget_n=10
    )


@pytest.fixture(scope="session")
def rs_rules():
    return load_rules(str(reverse_shell_rule_path()))


@pytest.fixture(scope="session")
def rs_setup(rs_scenario, rs_synthetic, desk_vec, desk_clf):
    """Setup-time retrain: synthetic data only, empty feedback and history."""
    return retrain_cycle(
        rs_scenario,
        rs_synthetic,
        [],
        [],
        None,
        now_ms=SETUP_NOW_MS,
        vec_config=desk_vec,
        clf_config=desk_clf,
    )
