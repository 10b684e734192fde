"""Evaluation metrics: localization accuracy, OOS classification, recall@K."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from momentrl.timeline import Interval, Verdict, tiou


@dataclass(frozen=True)
class MetricsRow:
    """Headline numbers for one evaluation, all as percentages."""

    acc50: float
    acc70: float
    oos_accuracy: float | None = None
    oos_f1: float | None = None
    r_at: dict[int, float] = field(default_factory=dict)


def acc_at(results: Sequence[tuple[Interval, Interval]], threshold: float) -> float:
    """Percentage of predictions whose IoU with the truth strictly exceeds
    the threshold; ties at the threshold do not count."""
    if not results:
        raise ValueError("acc_at needs at least one (prediction, truth) pair")
    hits = sum(1 for pred, gt in results if tiou(pred, gt) > threshold)
    return 100.0 * hits / len(results)


def oos_metrics(decisions: Sequence[tuple[Verdict, Verdict]]) -> tuple[float, float]:
    """(accuracy, F1) percentages of (verdict, label) pairs, OOS positive."""
    if not decisions:
        raise ValueError("oos_metrics needs at least one decision")
    tp = fp = fn = correct = 0
    for verdict, label in decisions:
        if verdict == label:
            correct += 1
        if verdict is Verdict.OOS and label is Verdict.OOS:
            tp += 1
        elif verdict is Verdict.OOS and label is Verdict.MATCH:
            fp += 1
        elif verdict is Verdict.MATCH and label is Verdict.OOS:
            fn += 1
    accuracy = 100.0 * correct / len(decisions)
    denom = 2 * tp + fp + fn
    f1 = 0.0 if denom == 0 else 100.0 * 2 * tp / denom
    return accuracy, f1


def recall_at_k(
    rankings: Mapping[str, Sequence[str]], truth: Mapping[str, str], k: int
) -> float:
    """Percentage of queries whose true video appears in the top-k ranking."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not rankings:
        raise ValueError("recall_at_k needs at least one query")
    hits = sum(1 for q, ranked in rankings.items() if truth[q] in list(ranked)[:k])
    return 100.0 * hits / len(rankings)
