"""Deterministic Lloyd k-means with seeded k-means++ initialization.

Reproducibility contract: fit is bit-identical for fixed inputs, and the
final partition/inertia do not depend on input row order. The effective
RNG seed is user_seed XOR a hash of the sorted point bytes, and both
initialization and Lloyd updates run over a canonically sorted copy of
the points, so every floating-point summation happens in one fixed
order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, InvalidK


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return (x - self.mean) / self.std


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray  # (k, d)
    assignment: np.ndarray  # (n,) cluster index per input point
    inertia: float
    iterations_run: int
    seed: int
    inertia_history: tuple[float, ...] = field(default=(), compare=False)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "inertia": float(f"{self.inertia:.9g}"),
            "iterations_run": self.iterations_run,
            "centroids": [[float(f"{v:.9g}") for v in c] for c in self.centroids],
        }


def _as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InvalidInput(f"expected an (n, d) point matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("points contain non-finite values")
    return x


def standardize(points) -> tuple[np.ndarray, Standardization]:
    """Per-dimension zero mean, unit sample std (ddof=1).

    Zero-variance dimensions pass through unscaled, recorded with mean 0
    and std 1 so transform() reproduces the pass-through on new points.
    """
    x = _as_points(points)
    if x.shape[0] < 2:
        raise InvalidInput("standardize needs at least 2 points")
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    flat = std < 1e-12
    mean = np.where(flat, 0.0, mean)
    std = np.where(flat, 1.0, std)
    stats = Standardization(mean=mean, std=std)
    return stats.transform(x), stats


def _canonical_order(x: np.ndarray) -> tuple[list[int], bytes]:
    rows = [x[i].astype("<f8").tobytes() for i in range(x.shape[0])]
    order = sorted(range(x.shape[0]), key=rows.__getitem__)
    digest = hashlib.sha256(b"".join(rows[i] for i in order)).digest()
    return order, digest


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def fit(points, k: int, seed: int, max_iter: int = 100, tol: float = 1e-6) -> ClusterModel:
    """Lloyd's algorithm; stops when the inertia improvement drops below tol.

    Nearest-centroid ties break to the lowest cluster index; an emptied
    cluster is reseeded to the point farthest from its previous centroid
    (lowest canonical index among ties).
    """
    x = _as_points(points)
    n = x.shape[0]
    if k < 1 or k > n:
        raise InvalidK(f"k={k} outside [1, {n}]")

    order, digest = _canonical_order(x)
    canon = x[order]
    effective_seed = (int(seed) ^ int.from_bytes(digest[:8], "big")) & (2 ** 63 - 1)
    rng = np.random.default_rng(effective_seed)
    centroids = _kmeanspp(canon, k, rng)

    history: list[float] = []
    prev_inertia = np.inf
    assignment = np.zeros(n, dtype=np.int64)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = ((canon[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assignment = d2.argmin(axis=1)  # argmin takes the lowest index on ties
        inertia = float(d2[np.arange(n), assignment].sum())
        if inertia > prev_inertia * (1 + 1e-12) + 1e-12:
            raise AssertionError(
                f"inertia increased across Lloyd iterations: {prev_inertia} -> {inertia}"
            )
        history.append(inertia)
        if prev_inertia - inertia < tol:
            break
        prev_inertia = inertia

        new_centroids = centroids.copy()
        for j in range(k):
            members = assignment == j
            if members.any():
                new_centroids[j] = canon[members].mean(axis=0)
            else:
                far = ((canon - centroids[j]) ** 2).sum(axis=1)
                new_centroids[j] = canon[int(far.argmax())]
        centroids = new_centroids

    final_assignment = np.empty(n, dtype=np.int64)
    for canon_pos, original_index in enumerate(order):
        final_assignment[original_index] = assignment[canon_pos]
    return ClusterModel(
        centroids=centroids,
        assignment=final_assignment,
        inertia=history[-1],
        iterations_run=iterations,
        seed=int(seed),
        inertia_history=tuple(history),
    )


def assign(model: ClusterModel, x) -> int:
    """Nearest centroid for one point; ties break to the lowest index."""
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (model.centroids.shape[1],):
        raise InvalidInput(
            f"point has dimension {v.shape}, model expects ({model.centroids.shape[1]},)"
        )
    d2 = ((model.centroids - v) ** 2).sum(axis=1)
    return int(d2.argmin())


def default_k(n: int) -> int:
    """sqrt(n/2) heuristic, at least 2, clamped to the point count."""
    if n < 1:
        raise InvalidInput("no points")
    return min(n, max(2, round((n / 2.0) ** 0.5)))
