"""Training-set assembly and the periodic retrain cycle.

Feedback samples enter with an aggregate mass ratio relative to the
synthetic set, decay linearly to zero over a horizon, and the smaller class
is rescaled so positive and negative weight sums match. A retrain trains,
calibrates against the scenario's ticket budget, and emits one immutable
versioned artifact; any failure leaves the previous artifact current.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from cmdsift import classifier as clf
from cmdsift import core
from cmdsift.calibrate import CalibrationInput, CalibrationResult, calibrate
from cmdsift.core import Label, LabeledSample, ModelArtifact, WeightedSample
from cmdsift.vectorize import VectorizerConfig, to_csr, vectorize

logger = logging.getLogger(__name__)

MS_PER_DAY = core.MS_PER_DAY


class AssemblyError(ValueError):
    """Assembly produced no trainable mass in one of the classes."""


@dataclass(frozen=True)
class DecayPolicy:
    horizon_days: float = 180.0
    ratio: float = 1.0

    def __post_init__(self):
        if self.horizon_days <= 0:
            raise ValueError("horizon_days must be > 0")
        if self.ratio <= 0:
            raise ValueError("ratio must be > 0")


def decay_weight(policy: DecayPolicy, base: float, age_days: float) -> float:
    """Linear decay to zero at the horizon."""
    if age_days < 0:
        raise ValueError(f"age_days must be >= 0, got {age_days}")
    return base * max(0.0, 1.0 - age_days / policy.horizon_days)


@dataclass(frozen=True)
class TrainingAssembly:
    samples: tuple[WeightedSample, ...]
    retrain_time_ms: int
    synthetic_mass: float
    feedback_mass: float
    positive_mass: float
    negative_mass: float


def assemble(
    synthetic: Sequence[LabeledSample],
    feedback: Sequence[LabeledSample],
    policy: DecayPolicy,
    now_ms: int,
) -> TrainingAssembly:
    """Weight synthetic samples at 1, spread the ratio-scaled feedback mass
    over current feedback with age decay, then balance the classes."""
    if not synthetic:
        raise AssemblyError("synthetic dataset is empty")

    weighted: list[WeightedSample] = [WeightedSample(s, 1.0) for s in synthetic]
    syn_mass = float(len(synthetic))
    fb_base = policy.ratio * syn_mass / max(1, len(feedback))
    for s in feedback:
        # Clock skew upstream of the decay math: future labels count as fresh.
        age_days = max(0.0, (now_ms - s.labeled_at_ms) / MS_PER_DAY)
        w = decay_weight(policy, fb_base, age_days)
        if w > 0:
            weighted.append(WeightedSample(s, w))

    pos = sum(w.weight for w in weighted if w.sample.label is Label.POSITIVE)
    neg = sum(w.weight for w in weighted if w.sample.label is Label.NEGATIVE)
    if pos <= 0 or neg <= 0:
        raise AssemblyError(
            f"one class has zero mass after decay (positive={pos}, negative={neg})"
        )
    if pos != neg:
        small = Label.POSITIVE if pos < neg else Label.NEGATIVE
        factor = max(pos, neg) / min(pos, neg)
        weighted = [
            WeightedSample(w.sample, w.weight * factor) if w.sample.label is small else w
            for w in weighted
        ]

    fb_mass = sum(w.weight for w in weighted if w.sample.origin is core.Origin.FEEDBACK)
    pos = sum(w.weight for w in weighted if w.sample.label is Label.POSITIVE)
    neg = sum(w.weight for w in weighted if w.sample.label is Label.NEGATIVE)
    return TrainingAssembly(
        samples=tuple(weighted),
        retrain_time_ms=now_ms,
        synthetic_mass=sum(
            w.weight for w in weighted if w.sample.origin is core.Origin.SYNTHETIC
        ),
        feedback_mass=fb_mass,
        positive_mass=pos,
        negative_mass=neg,
    )


@dataclass(frozen=True)
class RetrainResult:
    artifact: ModelArtifact
    assembly: TrainingAssembly
    calibration: CalibrationResult
    model: clf.TrainedModel


def retrain_cycle(
    scenario: core.DetectionScenario,
    synthetic: Sequence[LabeledSample],
    feedback: Sequence[LabeledSample],
    history: Sequence[tuple[str, int]],
    previous: Optional[ModelArtifact],
    *,
    now_ms: int,
    vec_config: VectorizerConfig,
    clf_config: clf.ClassifierConfig,
    history_span_days: float = 30.0,
    warm_start: bool = True,
    freeze_layers: int = 1,
) -> RetrainResult:
    """One full retrain: assemble, vectorize, train, calibrate, package.

    Raises on any stage failure; the caller keeps serving the previous
    artifact in that case.
    """
    policy = DecayPolicy(horizon_days=scenario.decay_horizon_days, ratio=scenario.feedback_ratio)
    assembly = assemble(synthetic, feedback, policy, now_ms)
    digest = core.training_set_digest(assembly.samples)

    X = to_csr([vectorize(vec_config, w.sample.command_line) for w in assembly.samples])
    y = np.array([1.0 if w.sample.label is Label.POSITIVE else 0.0 for w in assembly.samples])
    w = np.array([w.weight for w in assembly.samples])

    init = None
    if warm_start and previous is not None:
        warm = clf.model_from_flat(previous.shapes, previous.parameters, clf_config)
        layers = min(freeze_layers, warm.layer_count - 1)
        init = clf.freeze_prefix(warm, layers)
    model = clf.train(clf_config, (X, y, w), init=init)

    labeled_scores = tuple(
        (float(s), bool(lbl > 0.5)) for s, lbl in zip(clf.score_matrix(model, X), y)
    )
    hist_scores: tuple[float, ...] = ()
    if history:
        hx = to_csr([vectorize(vec_config, cmd) for cmd, _ in history])
        hist_scores = tuple(float(s) for s in clf.score_matrix(model, hx))
    calibration = calibrate(
        CalibrationInput(
            labeled_scores=labeled_scores,
            historical_scores=hist_scores,
            budget_n=scenario.budget_n,
            history_span_days=history_span_days,
        )
    )
    if calibration.budget_unmet:
        logger.warning(
            "scenario %s: no threshold meets budget %d (projected %.2f/day)",
            scenario.scenario_id,
            scenario.budget_n,
            calibration.projected_daily_tickets,
        )

    shapes, flat = model.flatten()
    meta = {
        "scenario_id": scenario.scenario_id,
        "f1_at_threshold": repr(calibration.f1_at_threshold),
        "projected_daily_tickets": repr(calibration.projected_daily_tickets),
        "budget_unmet": str(calibration.budget_unmet).lower(),
        "synthetic_mass": repr(assembly.synthetic_mass),
        "feedback_mass": repr(assembly.feedback_mass),
        "feedback_count": str(len(feedback)),
    }
    for k, v in clf_config.to_dict().items():
        meta[f"clf.{k}"] = v
    artifact = ModelArtifact(
        version=(previous.version + 1) if previous is not None else 1,
        vectorizer_config=vec_config,
        shapes=shapes,
        parameters=flat,
        threshold=calibration.threshold,
        trained_at_ms=now_ms,
        training_set_digest=digest,
        meta=meta,
    )
    return RetrainResult(artifact=artifact, assembly=assembly, calibration=calibration, model=model)


def classifier_config_from_artifact(artifact: ModelArtifact) -> clf.ClassifierConfig:
    d = {k[len("clf.") :]: v for k, v in artifact.meta.items() if k.startswith("clf.")}
    return clf.ClassifierConfig.from_dict(d) if d else clf.ClassifierConfig()


def model_from_artifact(artifact: ModelArtifact) -> clf.TrainedModel:
    return clf.model_from_flat(
        artifact.shapes, artifact.parameters, classifier_config_from_artifact(artifact)
    )


def audit_record(result: RetrainResult) -> str:
    """One line per retrain cycle for the append-only audit log."""
    a = result.artifact
    return "\t".join(
        [
            str(a.version),
            str(a.trained_at_ms),
            a.meta.get("scenario_id", ""),
            repr(result.calibration.threshold),
            repr(result.calibration.f1_at_threshold),
            repr(result.calibration.projected_daily_tickets),
            repr(result.assembly.positive_mass),
            repr(result.assembly.negative_mass),
            repr(result.assembly.feedback_mass),
            a.training_set_digest,
        ]
    )
