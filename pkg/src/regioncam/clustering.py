"""Cosine-distance K-means over spatial feature points.

Clustering a layer's [h,w,k] features partitions the grid into superpixel
regions whose points carry similar feature vectors.  Assignment minimizes
cosine distance ``1 - p.mu / (|p||mu|)``; centroids are plain arithmetic
means.  That pair is not a consistent descent scheme, so the loop refuses
any iterate that would raise the objective and stops there, which keeps the
reported objective trace non-increasing.

Everything is deterministic for a fixed seed: k-means++-style init from a
seeded generator, ties broken toward the lowest cluster index, empty
clusters refilled with the worst-served point, and final labels renumbered
by first occurrence in row-major order so identical partitions compare
equal.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import LayerRecord
from .errors import DegenerateInput, TooFewPoints

EPS = 1e-12
_GUARD = 1e-12


@dataclass
class LabelMap:
    """Integer superpixel assignment grid for one layer; values in [0, m)."""

    layer_name: str
    labels: np.ndarray
    m: int

    @property
    def hw(self) -> tuple[int, int]:
        return self.labels.shape[0], self.labels.shape[1]


@dataclass
class KMeansResult:
    labels: np.ndarray            # flat int32 [n], canonical numbering
    centroids: np.ndarray         # [m, d] float64, rows permuted with labels
    objective: float
    iterations: int
    converged: bool
    objective_trace: list[float] = field(default_factory=list)


def _distances(points: np.ndarray, norms: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    cnorms = np.linalg.norm(centroids, axis=1)
    sims = (points @ centroids.T) / ((norms[:, None] + EPS) * (cnorms[None, :] + EPS))
    return 1.0 - sims


def _assign(points, norms, centroids):
    dists = _distances(points, norms, centroids)
    labels = np.argmin(dists, axis=1)
    point_dists = dists[np.arange(len(labels)), labels]
    return labels, point_dists


def _init_plusplus(points, norms, m, rng):
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    min_dist = _distances(points, norms, points[chosen])[:, 0]
    while len(chosen) < m:
        weights = np.maximum(min_dist, 0.0) ** 2
        total = weights.sum()
        if total > 0.0:
            idx = int(rng.choice(n, p=weights / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        new_dist = _distances(points, norms, points[[idx]])[:, 0]
        min_dist = np.minimum(min_dist, new_dist)
    return points[chosen].copy()


def _exact_means(points, labels, m, fallback):
    counts = np.bincount(labels, minlength=m)
    sums = np.zeros((m, points.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, points)
    centroids = fallback.copy()
    nonempty = counts > 0
    centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
    return counts, centroids


def _consistent_state(points, norms, labels, m, fallback_centroids, spherical):
    """Repair empty clusters by label surgery, then recompute exact means.

    Each empty cluster steals the point currently farthest from its own
    cluster's mean (singleton clusters are protected), so every returned
    centroid is the arithmetic mean of its final members.
    """
    counts, centroids = _exact_means(points, labels, m, fallback_centroids)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        labels = labels.copy()
        per_point = _distances(points, norms, centroids)
        dist_to_own = per_point[np.arange(len(labels)), labels]
        for j in empty:
            eligible = counts[labels] >= 2
            if not eligible.any():
                continue
            pick = int(np.argmax(np.where(eligible, dist_to_own, -np.inf)))
            counts[labels[pick]] -= 1
            labels[pick] = j
            counts[j] += 1
            dist_to_own[pick] = 0.0
        counts, centroids = _exact_means(points, labels, m, fallback_centroids)
    if spherical:
        cnorms = np.linalg.norm(centroids, axis=1, keepdims=True)
        big = cnorms[:, 0] > EPS
        centroids[big] = centroids[big] / cnorms[big]
    return labels, centroids


def _objective(points, norms, labels, centroids) -> float:
    dists = _distances(points, norms, centroids)
    return float(dists[np.arange(len(labels)), labels].sum())


def _canonicalize(labels: np.ndarray, centroids: np.ndarray):
    m = centroids.shape[0]
    uniq, first = np.unique(labels, return_index=True)
    present = uniq[np.argsort(first)]
    absent = [j for j in range(m) if j not in set(present.tolist())]
    old_order = np.concatenate([present, np.asarray(absent, dtype=present.dtype)]) if absent else present
    new_for_old = np.empty(m, dtype=np.int64)
    new_for_old[old_order] = np.arange(m)
    return new_for_old[labels].astype(np.int32), centroids[old_order]


def kmeans_cosine(
    points: np.ndarray,
    m: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-5,
    restarts: int = 1,
    spherical: bool = False,
) -> KMeansResult:
    """Partition [n,d] points into ``m`` clusters under cosine distance.

    Zero-vector points sit at distance 1 from every centroid and fall into
    the lowest cluster index.  ``converged`` is claimed only when reassigning
    points to the returned centroids reproduces the returned labels.
    ``spherical=True`` renormalizes centroids to unit length after each
    update (a consistent variant; off by default).  With ``restarts > 1``
    the best final objective over independently seeded runs wins.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise TooFewPoints(f"expected [n,d] points, got {points.shape}")
    n, d = points.shape
    if m < 1 or n < m:
        raise TooFewPoints(f"need n >= m >= 1, got n={n}, m={m}")
    norms = np.linalg.norm(points, axis=1)
    if not (norms > 0.0).any():
        raise DegenerateInput("all points are zero vectors")

    best: KMeansResult | None = None
    for child in np.random.SeedSequence(seed).spawn(max(restarts, 1)):
        rng = np.random.default_rng(child)
        result = _lloyd(points, norms, m, rng, max_iter, tol, spherical)
        if best is None or result.objective < best.objective:
            best = result
    labels, centroids = _canonicalize(best.labels, best.centroids)
    return KMeansResult(
        labels=labels,
        centroids=centroids,
        objective=best.objective,
        iterations=best.iterations,
        converged=best.converged,
        objective_trace=best.objective_trace,
    )


def _lloyd(points, norms, m, rng, max_iter, tol, spherical) -> KMeansResult:
    """One seeded run.  Every evaluated state pairs labels with the exact
    means of those labels, so the reported objective can never undercut the
    best mean-consistent partition; a state is `converged` only when the
    assignment step reproduces its own labels (a true fixed point)."""
    init = _init_plusplus(points, norms, m, rng)
    raw_labels, _ = _assign(points, norms, init)
    labels, centroids = _consistent_state(points, norms, raw_labels, m, init, spherical)
    objective = _objective(points, norms, labels, centroids)
    trace = [objective]
    converged = False
    iterations = 0
    for _ in range(max_iter):
        reassigned, _ = _assign(points, norms, centroids)
        if np.array_equal(reassigned, labels):
            converged = True
            break
        new_labels, new_centroids = _consistent_state(
            points, norms, reassigned, m, centroids, spherical
        )
        new_objective = _objective(points, norms, new_labels, new_centroids)
        if new_objective > objective + _GUARD:
            break  # the inconsistent metric/update pair stalled; keep the better state
        improved = (objective - new_objective) >= tol
        labels, centroids, objective = new_labels, new_centroids, new_objective
        trace.append(objective)
        iterations += 1
        if not improved:
            break
    return KMeansResult(
        labels=labels.astype(np.int32),
        centroids=centroids,
        objective=objective,
        iterations=iterations,
        converged=converged,
        objective_trace=trace,
    )


def cluster_layer(
    layer: LayerRecord,
    m: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-5,
    restarts: int = 1,
    spherical: bool = False,
) -> LabelMap:
    """Cluster one layer's [h,w,k] features into an [h,w] superpixel grid."""
    h, w, k = layer.features.shape
    points = layer.features.reshape(h * w, k)
    result = kmeans_cosine(
        points, m, seed=seed, max_iter=max_iter, tol=tol, restarts=restarts, spherical=spherical
    )
    return LabelMap(layer_name=layer.name, labels=result.labels.reshape(h, w), m=m)
