"""Prototype-based reranking with pseudo-relevance and learned linear weights.

Online path: visual prototypes come from the top text-ranked images that
survive the symbolic filter; each candidate gets a 10-dimensional meta
feature vector (six textual bits, max/mean prototype similarity, the
pseudo-relevance of its k-means cluster, and a naturalness score) which
is combined linearly into the rerank score.

Offline path: ridge regression on human-labeled rows learns the weights
once; the model carries no per-query state, so it applies unchanged to
unseen queries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kmeans
from .corpus import ImageRecord
from .errors import (
    DegenerateTraining,
    InsufficientData,
    InvalidInput,
    NoPrototypes,
)
from .evaluation import (
    DEFAULT_RECALL_TARGET,
    PRECISION_K_GRID,
    EvalReport,
    average_precision,
    precision_at_k,
    precision_at_recall,
    summarize,
)
from .textual import BIT_NAMES, TextBits
from .visual import SYMBOLIC_RULE_COUNT, NaturalnessVerdict

META_FEATURE_NAMES = BIT_NAMES + ("proto_max", "proto_mean", "cluster_rel", "natural")
META_DIM = len(META_FEATURE_NAMES)

DEFAULT_PROTOTYPES = 25
DEFAULT_PSEUDO_POSITIVES = 50
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Prototype:
    image_id: str
    vector: np.ndarray


@dataclass(frozen=True)
class RerankModel:
    weights: np.ndarray  # (META_DIM,)
    ridge_lambda: float = 1.0
    prototype_count: int = DEFAULT_PROTOTYPES
    pseudo_positive_count: int = DEFAULT_PSEUDO_POSITIVES
    k: int | None = None
    standardization_ref: str = "per-query"
    seed: int = 42
    version: int = MODEL_FORMAT_VERSION

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (META_DIM,):
            raise InvalidInput(f"model needs {META_DIM} weights, got shape {w.shape}")
        if self.ridge_lambda < 0:
            raise InvalidInput("ridge lambda must be >= 0")
        object.__setattr__(self, "weights", w)

    @classmethod
    def zero(cls, **kwargs) -> "RerankModel":
        return cls(weights=np.zeros(META_DIM), **kwargs)

    def to_dict(self) -> dict:
        return {
            "weights": [float(f"{w:.12g}") for w in self.weights],
            "feature_names": list(META_FEATURE_NAMES),
            "ridge_lambda": self.ridge_lambda,
            "prototype_count": self.prototype_count,
            "pseudo_positive_count": self.pseudo_positive_count,
            "k": self.k,
            "standardization_ref": self.standardization_ref,
            "seed": self.seed,
            "version": self.version,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RerankModel":
        return cls(
            weights=np.asarray(obj["weights"], dtype=np.float64),
            ridge_lambda=float(obj.get("ridge_lambda", 1.0)),
            prototype_count=int(obj.get("prototype_count", DEFAULT_PROTOTYPES)),
            pseudo_positive_count=int(obj.get("pseudo_positive_count", DEFAULT_PSEUDO_POSITIVES)),
            k=obj.get("k"),
            standardization_ref=obj.get("standardization_ref", "per-query"),
            seed=int(obj.get("seed", 42)),
            version=int(obj.get("version", MODEL_FORMAT_VERSION)),
        )

    def fingerprint(self) -> str:
        import hashlib

        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Path | str) -> "RerankModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class RankedItem:
    image_id: str
    score: float
    new_rank: int
    original_rank: int


@dataclass(frozen=True)
class RankedList:
    query_id: str
    items: tuple[RankedItem, ...]

    def ids(self) -> list[str]:
        return [item.image_id for item in self.items]

    def to_rows(self) -> list[dict]:
        return [
            {
                "query_id": self.query_id,
                "image_id": it.image_id,
                "score": float(f"{it.score:.12g}"),
                "new_rank": it.new_rank,
                "original_rank": it.original_rank,
            }
            for it in self.items
        ]

    @classmethod
    def from_rows(cls, rows: Sequence[dict]) -> "RankedList":
        items = tuple(
            RankedItem(
                image_id=row["image_id"],
                score=float(row["score"]),
                new_rank=int(row["new_rank"]),
                original_rank=int(row["original_rank"]),
            )
            for row in rows
        )
        qid = rows[0]["query_id"] if rows else ""
        return cls(query_id=qid, items=items)


# -- prototypes ---------------------------------------------------------------


def build_prototypes(records: Sequence[ImageRecord], vectors_by_id: dict[str, np.ndarray],
                     symbolic_ids: set, n_prototypes: int = DEFAULT_PROTOTYPES) -> list[Prototype]:
    """Standardized vectors of the first n non-symbolic records, in rank order."""
    if n_prototypes < 1:
        raise InvalidInput("need at least one prototype")
    if not records:
        raise InvalidInput("no records")
    survivors = [r for r in records if r.id not in symbolic_ids]
    if not survivors:
        raise NoPrototypes("every top candidate was classified symbolic")
    return [Prototype(r.id, vectors_by_id[r.id]) for r in survivors[:n_prototypes]]


def median_pairwise_sigma(prototypes: Sequence[Prototype]) -> float:
    """Median pairwise distance among prototypes; 1.0 when degenerate."""
    if len(prototypes) < 2:
        return 1.0
    vectors = np.stack([p.vector for p in prototypes])
    diffs = vectors[:, None, :] - vectors[None, :, :]
    dists = np.sqrt((diffs ** 2).sum(axis=2))
    upper = dists[np.triu_indices(len(prototypes), k=1)]
    med = float(np.median(upper))
    return med if med > 0 else 1.0


def prototype_similarity(x: np.ndarray, prototype: Prototype, sigma: float) -> float:
    """Gaussian kernel exp(-||x - p||^2 / (2 sigma^2)), in (0, 1]."""
    if sigma <= 0:
        raise InvalidInput("sigma must be positive")
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(prototype.vector, dtype=np.float64)
    if x.shape != p.shape:
        raise InvalidInput(f"dimension mismatch: {x.shape} vs {p.shape}")
    d2 = float(((x - p) ** 2).sum())
    return float(np.exp(-d2 / (2.0 * sigma * sigma)))


def prototype_scores(x: np.ndarray, prototypes: Sequence[Prototype], sigma: float) -> tuple[float, float]:
    """(max, mean) prototype similarity; (0, 0) when there are no prototypes."""
    if not prototypes:
        return 0.0, 0.0
    sims = [prototype_similarity(x, p, sigma) for p in prototypes]
    return max(sims), float(np.mean(sims))


# -- pseudo-relevance ---------------------------------------------------------


def pseudo_relevance_with_model(ids: Sequence[str], vectors: np.ndarray, top_ids: set,
                                k: int, seed: int) -> tuple[dict[str, float], "kmeans.ClusterModel"]:
    """Cluster all candidates; score = fraction of each cluster inside top_ids."""
    model = kmeans.fit(vectors, k=k, seed=seed)
    top_mask = np.array([iid in top_ids for iid in ids])
    scores: dict[str, float] = {}
    for j in range(model.k):
        members = model.assignment == j
        count = int(members.sum())
        if count == 0:
            continue
        rel = float(top_mask[members].sum()) / count
        for idx in np.nonzero(members)[0]:
            scores[ids[int(idx)]] = rel
    return scores, model


def pseudo_relevance_scores(ids: Sequence[str], vectors: np.ndarray, top_ids: set,
                            k: int, seed: int) -> dict[str, float]:
    return pseudo_relevance_with_model(ids, vectors, top_ids, k, seed)[0]


# -- meta features and combination ---------------------------------------------


def meta_features(bits: TextBits, proto_max: float, proto_mean: float,
                  cluster_rel: float, verdict: NaturalnessVerdict) -> np.ndarray:
    natural = min(max(1.0 - verdict.score / SYMBOLIC_RULE_COUNT, 0.0), 1.0)
    return np.concatenate([
        bits.as_array(),
        [proto_max, proto_mean, cluster_rel, natural],
    ])


def combine(features: np.ndarray, model: RerankModel) -> float:
    f = np.asarray(features, dtype=np.float64)
    if f.shape != model.weights.shape:
        raise InvalidInput(f"feature vector shape {f.shape} does not match weights")
    return float(model.weights @ f)


def rerank(records: Sequence[ImageRecord], meta_by_id: dict[str, np.ndarray],
           model: RerankModel, query_id: str = "") -> RankedList:
    """Order by combined score descending, ties by original rank ascending."""
    scored = [(combine(meta_by_id[r.id], model), r) for r in records]
    scored.sort(key=lambda pair: (-pair[0], pair[1].original_rank))
    items = tuple(
        RankedItem(image_id=r.id, score=score, new_rank=rank, original_rank=r.original_rank)
        for rank, (score, r) in enumerate(scored, start=1)
    )
    qid = query_id or (records[0].query_id if records else "")
    return RankedList(query_id=qid, items=items)


# -- weight learning -----------------------------------------------------------


def learn_weights(features: np.ndarray, labels: Sequence[float], ridge_lambda: float = 1.0) -> np.ndarray:
    """Ridge regression on +-1 labels via normal equations.

    Solves (F^T F + lambda I) w = F^T y; with lambda = 0 a singular system
    falls back to the minimum-norm solution.
    """
    f = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] != y.shape[0]:
        raise InvalidInput("features/labels shape mismatch")
    if ridge_lambda < 0:
        raise InvalidInput("ridge lambda must be >= 0")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise DegenerateTraining("training rows are all one sign")
    gram = f.T @ f + ridge_lambda * np.eye(f.shape[1])
    rhs = f.T @ y
    if ridge_lambda > 0:
        return np.linalg.solve(gram, rhs)
    return np.linalg.lstsq(gram, rhs, rcond=None)[0]


def ridge_objective(weights: np.ndarray, features: np.ndarray, labels, ridge_lambda: float) -> float:
    w = np.asarray(weights, dtype=np.float64)
    f = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    residual = f @ w - y
    return float(residual @ residual + ridge_lambda * (w @ w))


# -- intermediate elimination ----------------------------------------------------


def eliminate_intermediate(records: Sequence[ImageRecord], vectors: np.ndarray,
                           top_ids: set, k: int, seed: int,
                           runs: int = 5, majority: float = 0.8) -> tuple[list[ImageRecord], list[str]]:
    """Drop images whose pseudo-relevance class flips across reruns.

    An image is positive in one run iff its cluster relevance >= 0.5; it
    is kept when one class wins at least majority * runs of the runs.
    """
    if runs < 1:
        raise InvalidInput("runs must be >= 1")
    if not 0.5 < majority <= 1.0:
        raise InvalidInput("majority must be in (0.5, 1]")
    ids = [r.id for r in records]
    positive_counts = {iid: 0 for iid in ids}
    for run in range(runs):
        scores = pseudo_relevance_scores(ids, vectors, top_ids, k=k, seed=seed + run)
        for iid in ids:
            if scores[iid] >= 0.5:
                positive_counts[iid] += 1
    threshold = majority * runs - 1e-9
    kept: list[ImageRecord] = []
    eliminated: list[str] = []
    for record in records:
        positives = positive_counts[record.id]
        if max(positives, runs - positives) >= threshold:
            kept.append(record)
        else:
            eliminated.append(record.id)
    return kept, eliminated


# -- cross-validation -------------------------------------------------------------


@dataclass(frozen=True)
class FoldAssignment:
    repeat: int
    fold: int
    row_index: int


def stratified_folds(labels: Sequence[float], folds: int, repeats: int, seed: int) -> list[FoldAssignment]:
    """Round-robin fold deal per class; every row lands in exactly one fold per repeat."""
    y = np.asarray(labels, dtype=np.float64)
    assignments: list[FoldAssignment] = []
    for repeat in range(repeats):
        rng = np.random.default_rng([seed, repeat])
        for cls in (1.0, -1.0):
            indices = np.nonzero(y == cls)[0]
            rng.shuffle(indices)
            for position, row in enumerate(indices):
                assignments.append(FoldAssignment(repeat, position % folds, int(row)))
        for row in np.nonzero((y != 1.0) & (y != -1.0))[0]:
            raise InvalidInput(f"label at row {row} is not +-1")
    return assignments


def cross_validate(features: np.ndarray, labels: Sequence[float], row_ids: Sequence[str],
                   folds: int = 10, repeats: int = 5, seed: int = 42, ridge_lambda: float = 1.0,
                   k_grid: Sequence[int] = PRECISION_K_GRID,
                   recall_target: float = DEFAULT_RECALL_TARGET,
                   ) -> tuple[EvalReport, list[FoldAssignment], list[dict]]:
    """Repeated stratified k-fold over pooled labeled rows.

    Trains ridge weights on the other folds and ranks the held-out fold;
    returns (report, fold assignments, per-fold metric rows) so callers
    can dump both the partition and the raw values.
    """
    f = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    n = f.shape[0]
    if n < folds:
        raise InsufficientData(f"{n} labeled rows < {folds} folds")
    if np.sum(y > 0) < 2 or np.sum(y < 0) < 2:
        raise InsufficientData("need at least 2 labeled rows of each class")

    assignments = stratified_folds(y, folds, repeats, seed)
    fold_of: dict[tuple[int, int], int] = {}
    for a in assignments:
        fold_of[(a.repeat, a.row_index)] = a.fold

    values: dict[str, list[float]] = {}
    fold_rows: list[dict] = []
    for repeat in range(repeats):
        marks = np.array([fold_of[(repeat, i)] for i in range(n)])
        for fold in range(folds):
            test = marks == fold
            if not test.any():
                continue
            train = ~test
            try:
                weights = learn_weights(f[train], y[train], ridge_lambda)
            except DegenerateTraining:
                continue
            scores = f[test] @ weights
            test_indices = np.nonzero(test)[0]
            order = sorted(range(len(test_indices)), key=lambda i: (-scores[i], int(test_indices[i])))
            ranked = [row_ids[int(test_indices[i])] for i in order]
            relevant = {row_ids[int(i)] for i in test_indices if y[int(i)] > 0}

            metrics_here: dict[str, float] = {}
            if relevant:
                metrics_here[f"precision_at_recall_{recall_target:g}"] = precision_at_recall(
                    ranked, relevant, recall_target)
                metrics_here["average_precision"] = average_precision(ranked, relevant)
                for k in k_grid:
                    if k <= len(ranked):
                        metrics_here[f"precision_at_{k}"] = precision_at_k(ranked, relevant, k)
            for name, value in metrics_here.items():
                values.setdefault(name, []).append(value)
                fold_rows.append({"repeat": repeat, "fold": fold, "metric": name,
                                  "value": float(f"{value:.12g}")})

    report = summarize(values, folds=folds, repeats=repeats, labeled_images=n)
    return report, assignments, fold_rows
