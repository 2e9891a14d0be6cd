"""Ranking quality metrics and fold aggregation.

All metrics treat relevance as binary and take the ranking as a sequence
of ids, best first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInput, InvalidK, UndefinedMetric

PRECISION_K_GRID = (10, 25, 50, 100)
DEFAULT_RECALL_TARGET = 0.15


def precision_at_k(ranked: Sequence[str], relevant: set, k: int) -> float:
    """Fraction of the top k that is relevant.

    >>> precision_at_k(["a", "b", "c", "d"], {"a", "c"}, 4)
    0.5
    """
    if k < 1 or k > len(ranked):
        raise InvalidK(f"k={k} outside [1, {len(ranked)}]")
    hits = sum(1 for item in ranked[:k] if item in relevant)
    return hits / k


def recall_at_k(ranked: Sequence[str], relevant: set, k: int) -> float:
    if not relevant:
        raise UndefinedMetric("empty relevant set")
    if k < 1 or k > len(ranked):
        raise InvalidK(f"k={k} outside [1, {len(ranked)}]")
    hits = sum(1 for item in ranked[:k] if item in relevant)
    return hits / len(relevant)


def precision_at_recall(ranked: Sequence[str], relevant: set, r: float = DEFAULT_RECALL_TARGET) -> float:
    """Precision at the first position achieving recall r.

    Needs ceil(r * |relevant|) relevant items retrieved; returns 0 when
    the ranking never gets there.
    """
    if not relevant:
        raise UndefinedMetric("empty relevant set")
    if not 0 < r <= 1:
        raise InvalidInput(f"recall target {r} outside (0, 1]")
    needed = int(np.ceil(r * len(relevant)))
    found = 0
    for position, item in enumerate(ranked, start=1):
        if item in relevant:
            found += 1
            if found == needed:
                return needed / position
    return 0.0


def average_precision(ranked: Sequence[str], relevant: set) -> float:
    """Mean of precision at each relevant item's rank, over all relevant items.

    >>> average_precision(["x", "r", "y"], {"r"})
    0.5
    """
    if not relevant:
        raise UndefinedMetric("empty relevant set")
    found = 0
    total = 0.0
    for position, item in enumerate(ranked, start=1):
        if item in relevant:
            found += 1
            total += found / position
    return total / len(relevant)


def aggregate(values: Iterable[float]) -> tuple[float, float | None]:
    """(arithmetic mean, sample std with n-1); std is None for one value."""
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size == 0:
        raise InvalidInput("nothing to aggregate")
    mean = float(vals.mean())
    std = float(vals.std(ddof=1)) if vals.size > 1 else None
    return mean, std


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float | None
    n: int

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "n": self.n}


@dataclass(frozen=True)
class EvalReport:
    """Per-metric mean/std plus the counts behind them."""

    metrics: dict[str, MetricSummary]
    folds: int
    repeats: int
    labeled_images: int

    def to_dict(self) -> dict:
        return {
            "metrics": {name: summary.to_dict() for name, summary in sorted(self.metrics.items())},
            "folds": self.folds,
            "repeats": self.repeats,
            "labeled_images": self.labeled_images,
        }

    def to_text_table(self) -> str:
        lines = [f"{'metric':<28} {'mean':>10} {'std':>10} {'n':>5}"]
        for name, s in sorted(self.metrics.items()):
            std = f"{s.std:.4f}" if s.std is not None else "-"
            lines.append(f"{name:<28} {s.mean:>10.4f} {std:>10} {s.n:>5}")
        lines.append(
            f"folds={self.folds} repeats={self.repeats} labeled_images={self.labeled_images}"
        )
        return "\n".join(lines)


def summarize(values_by_metric: dict[str, list[float]], folds: int, repeats: int,
              labeled_images: int) -> EvalReport:
    metrics = {}
    for name, values in values_by_metric.items():
        if not values:
            continue
        mean, std = aggregate(values)
        metrics[name] = MetricSummary(mean=mean, std=std, n=len(values))
    return EvalReport(metrics=metrics, folds=folds, repeats=repeats, labeled_images=labeled_images)


def evaluate_ranking(ranked: Sequence[str], relevant: set,
                     k_grid: Sequence[int] = PRECISION_K_GRID,
                     recall_target: float = DEFAULT_RECALL_TARGET) -> EvalReport:
    """Single-ranking report: the k grid is clipped to the list length."""
    if not relevant:
        raise UndefinedMetric("empty relevant set")
    values: dict[str, list[float]] = {}
    for k in k_grid:
        if k <= len(ranked):
            values[f"precision_at_{k}"] = [precision_at_k(ranked, relevant, k)]
    values[f"precision_at_recall_{recall_target:g}"] = [precision_at_recall(ranked, relevant, recall_target)]
    values["average_precision"] = [average_precision(ranked, relevant)]
    return summarize(values, folds=1, repeats=1, labeled_images=len(ranked))


def precision_curve(ranked: Sequence[str], relevant: set) -> list[tuple[int, float]]:
    """Full precision@k curve for k = 1..n, for CSV export and plotting."""
    curve = []
    hits = 0
    for position, item in enumerate(ranked, start=1):
        if item in relevant:
            hits += 1
        curve.append((position, hits / position))
    return curve
