"""Operating-threshold selection: best F1 on labeled scores subject to a
projected daily ticket budget over unlabeled historical scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


class CalibrationError(ValueError):
    """Labeled scores do not contain both classes."""


@dataclass(frozen=True)
class CalibrationInput:
    labeled_scores: tuple[tuple[float, bool], ...]  # (score, is_positive)
    historical_scores: tuple[float, ...]
    budget_n: int
    history_span_days: float

    def __post_init__(self):
        if self.history_span_days <= 0:
            raise ValueError("history_span_days must be > 0")
        if self.budget_n < 1:
            raise ValueError("budget_n must be >= 1")


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    f1_at_threshold: float
    projected_daily_tickets: float
    budget_unmet: bool = False


def f1_at(labeled: Sequence[tuple[float, bool]], threshold: float) -> float:
    tp = sum(1 for s, pos in labeled if pos and s >= threshold)
    fp = sum(1 for s, pos in labeled if not pos and s >= threshold)
    fn = sum(1 for s, pos in labeled if pos and s < threshold)
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def candidate_thresholds(
    labeled: Sequence[tuple[float, bool]], historical: Sequence[float]
) -> list[float]:
    """Midpoints between consecutive distinct scores, plus 0.5."""
    scores = sorted({s for s, _ in labeled} | set(historical))
    cands = {0.5}
    for a, b in zip(scores, scores[1:]):
        cands.add((a + b) / 2.0)
    return sorted(cands)


def projected_daily(historical: Sequence[float], threshold: float, span_days: float) -> float:
    return sum(1 for s in historical if s >= threshold) / span_days


def calibrate(inp: CalibrationInput) -> CalibrationResult:
    labeled = inp.labeled_scores
    if not any(pos for _, pos in labeled) or not any(not pos for _, pos in labeled):
        raise CalibrationError("labeled scores must contain both classes")

    cands = candidate_thresholds(labeled, inp.historical_scores)
    feasible: list[tuple[float, float, float]] = []  # (f1, threshold, projected)
    infeasible: list[tuple[float, float]] = []  # (projected, threshold)
    for t in cands:
        projected = projected_daily(inp.historical_scores, t, inp.history_span_days)
        if projected <= inp.budget_n:
            feasible.append((f1_at(labeled, t), t, projected))
        else:
            infeasible.append((projected, t))

    if feasible:
        # Max F1 inside the budget; ties broken by the higher threshold.
        f1, t, projected = max(feasible, key=lambda item: (item[0], item[1]))
        return CalibrationResult(
            threshold=t, f1_at_threshold=f1, projected_daily_tickets=projected
        )
    projected, t = min(infeasible, key=lambda item: (item[0], -item[1]))
    return CalibrationResult(
        threshold=t,
        f1_at_threshold=f1_at(labeled, t),
        projected_daily_tickets=projected,
        budget_unmet=True,
    )


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    precision: float
    recall: float
    degenerate: bool = False  # no predicted positives; precision 1.0 by convention


def pr_curve(labeled: Sequence[tuple[float, bool]]) -> list[PrPoint]:
    """One point per distinct score used as threshold, sorted descending."""
    if not any(pos for _, pos in labeled) or not any(not pos for _, pos in labeled):
        raise CalibrationError("labeled scores must contain both classes")
    points = []
    total_pos = sum(1 for _, pos in labeled if pos)
    for t in sorted({s for s, _ in labeled}, reverse=True):
        tp = sum(1 for s, pos in labeled if pos and s >= t)
        predicted = sum(1 for s, _ in labeled if s >= t)
        if predicted == 0:
            points.append(PrPoint(threshold=t, precision=1.0, recall=0.0, degenerate=True))
        else:
            points.append(
                PrPoint(threshold=t, precision=tp / predicted, recall=tp / total_pos)
            )
    return points


def max_f1(labeled: Sequence[tuple[float, bool]]) -> float:
    """Best F1 over all distinct-score thresholds."""
    best = 0.0
    for t in {s for s, _ in labeled}:
        best = max(best, f1_at(labeled, t))
    return best
