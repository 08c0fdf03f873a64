"""Discrete units from segment-pooled features.

Pooled segment vectors are clustered with K-Means into ``K`` centroids, the
centroids are merged agglomeratively down to ``U`` units, and every segment
is labelled with the unit of its nearest centroid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Segmentation, UnitSequence, ValidationError, as_frames, group_means

logger = logging.getLogger(__name__)

DEFAULT_MAX_SAMPLES = 500_000


@dataclass(frozen=True, eq=False)
class Codebook:
    """K-Means centroids plus a map from centroid id to final unit id."""

    centroids: np.ndarray
    agglomeration_map: np.ndarray
    rng_seed: int = 0

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValidationError(f"centroids must be a non-empty 2-D array, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValidationError("centroids contain non-finite values")
        m = np.asarray(self.agglomeration_map, dtype=np.int64)
        if m.shape != (c.shape[0],):
            raise ValidationError(f"agglomeration_map must have length {c.shape[0]}")
        U = int(m.max()) + 1
        if m.min() < 0 or np.unique(m).size != U:
            raise ValidationError("agglomeration_map must be surjective onto [0, U)")
        object.__setattr__(self, "centroids", c)
        object.__setattr__(self, "agglomeration_map", m)
        object.__setattr__(self, "rng_seed", int(self.rng_seed))

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def D(self) -> int:
        return self.centroids.shape[1]

    @property
    def U(self) -> int:
        return int(self.agglomeration_map.max()) + 1


def pool_segments(feats, seg: Segmentation) -> np.ndarray:
    """Mean frame of every segment, ``k x D``."""
    return group_means(feats, seg)


@dataclass
class KMeansResult:
    centroids: np.ndarray
    inertia: float
    labels: np.ndarray
    counts: np.ndarray
    n_iter: int
    inertia_trace: list = field(default_factory=list)


def _sqdist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = np.einsum("ij,ij->i", x, x)[:, None] - 2.0 * x @ c.T + np.einsum("ij,ij->i", c, c)[None, :]
    return np.maximum(d, 0.0)


def _kmeanspp(x: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    N = x.shape[0]
    idx = [int(rng.integers(N))]
    closest = _sqdist(x, x[idx]).ravel()
    for _ in range(1, K):
        total = closest.sum()
        if total <= 0:
            # remaining points coincide with chosen centres
            remaining = np.setdiff1d(np.arange(N), idx)
            nxt = int(rng.choice(remaining))
        else:
            nxt = int(rng.choice(N, p=closest / total))
        idx.append(nxt)
        np.minimum(closest, _sqdist(x, x[[nxt]]).ravel(), out=closest)
    return x[idx].copy()


def kmeans_fit(vectors, K: int, seed: int = 0, max_iters: int = 100) -> KMeansResult:
    """Lloyd's algorithm from a seeded k-means++ start.

    Stops when assignments no longer change or after ``max_iters`` updates.
    An emptied cluster keeps its previous centroid. ``inertia_trace`` holds
    the inertia of each successive assignment and never increases.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    N = x.shape[0]
    if not (1 <= K <= N):
        raise ValidationError(f"need 1 <= K <= N={N}, got K={K}")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp(x, K, rng)
    labels = None
    trace = []
    n_iter = 0
    while True:
        d = _sqdist(x, centroids)
        new_labels = np.argmin(d, axis=1)
        trace.append(float(d[np.arange(N), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        if n_iter >= max_iters:
            break
        counts = np.bincount(labels, minlength=K)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, x)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        n_iter += 1
    counts = np.bincount(labels, minlength=K)
    inertia = float(((x - centroids[labels]) ** 2).sum())
    return KMeansResult(centroids, inertia, labels, counts, n_iter, trace)


def agglomerate(centroids, weights, U: int, return_distances: bool = False):
    """Centroid-linkage merging of ``K`` weighted centroids down to ``U`` clusters.

    The closest pair (Euclidean) merges first; the merged centroid is the
    weight-weighted mean and keeps the smaller index. Exact distance ties go
    to the smallest ``(i, j)`` pair. Final unit ids are numbered by the
    smallest centroid index in each cluster, so ``U == K`` gives the
    identity map.

    Memory is ``O(K^2)``.
    """
    c = np.asarray(centroids, dtype=np.float64)
    if c.ndim == 1:
        c = c[:, None]
    c = c.copy()
    K = c.shape[0]
    w = np.asarray(weights, dtype=np.float64).copy()
    if w.shape != (K,):
        raise ValidationError(f"weights must have length {K}")
    if np.any(w < 0):
        raise ValidationError("weights must be nonnegative")
    if U < 1:
        raise ValidationError(f"U must be >= 1, got {U}")
    if U > K:
        raise ValidationError(f"U={U} exceeds the number of centroids K={K}")

    parent = np.arange(K)
    merges = []
    if U < K:
        dist = np.sqrt(_sqdist(c, c))
        upper = np.triu(np.ones((K, K), dtype=bool), 1)
        dist[~upper] = np.inf
        active = np.ones(K, dtype=bool)
        row_arg = np.argmin(dist, axis=1)
        row_min = dist[np.arange(K), row_arg]
        for _ in range(K - U):
            i = int(np.argmin(row_min))
            j = int(row_arg[i])
            merges.append(float(row_min[i]))
            wi, wj = w[i], w[j]
            tot = wi + wj
            c[i] = (wi * c[i] + wj * c[j]) / tot if tot > 0 else 0.5 * (c[i] + c[j])
            w[i] = tot
            parent[parent == j] = i
            active[j] = False
            dist[j, :] = np.inf
            dist[:, j] = np.inf
            row_min[j] = np.inf
            new = np.sqrt(np.maximum(((c[active] - c[i]) ** 2).sum(axis=1), 0.0))
            col = np.full(K, np.inf)
            col[active] = new
            before = np.arange(K) < i
            after = np.arange(K) > i
            dist[i, after] = col[after]
            dist[before, i] = col[before]
            # rows whose cached minimum pointed at i or j must be rescanned
            stale = (row_arg == i) | (row_arg == j)
            stale[i] = True
            stale &= active
            for r in np.flatnonzero(stale):
                row_arg[r] = int(np.argmin(dist[r]))
                row_min[r] = dist[r, row_arg[r]]
            improved = active & before & ~stale & (
                (dist[:, i] < row_min) | ((dist[:, i] == row_min) & (i < row_arg))
            )
            row_arg[improved] = i
            row_min[improved] = dist[improved, i]
        steps = np.diff(merges)
        if np.any(steps < 0):
            logger.info("centroid linkage produced %d non-monotone merges", int(np.sum(steps < 0)))

    roots = np.unique(parent)
    relabel = np.full(K, -1)
    relabel[roots] = np.arange(roots.size)
    amap = relabel[parent]
    if return_distances:
        return amap, np.asarray(merges)
    return amap


def fit_codebook(
    pooled,
    U: int,
    K: Optional[int] = None,
    seed: int = 0,
    max_iters: int = 100,
    max_samples: int = DEFAULT_MAX_SAMPLES,
) -> Codebook:
    """K-Means to ``K`` (default ``2 U``) centroids, then agglomerate to ``U``.

    At most ``max_samples`` pooled vectors, drawn with ``seed``, are used.
    """
    x = np.asarray(pooled, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if K is None:
        K = 2 * U
    K = min(K, x.shape[0])
    if U > K:
        raise ValidationError(f"U={U} exceeds available K={K}")
    rng = np.random.default_rng(seed)
    if x.shape[0] > max_samples:
        x = x[np.sort(rng.choice(x.shape[0], size=max_samples, replace=False))]
    km = kmeans_fit(x, K, seed=seed, max_iters=max_iters)
    amap = agglomerate(km.centroids, km.counts, U)
    return Codebook(km.centroids, amap, seed)


def nearest_centroid(vectors, centroids) -> np.ndarray:
    """Index of the nearest centroid for each row; ties go to the lower index."""
    return np.argmin(_sqdist(np.asarray(vectors, dtype=np.float64), centroids), axis=1)


def assign_units(feats, seg: Segmentation, codebook: Codebook, frame_rate_hz: Optional[float] = None) -> UnitSequence:
    """Label every segment with the unit of its nearest centroid (no dedup)."""
    x = as_frames(feats)
    if x.shape[1] != codebook.D:
        raise ValidationError(f"feature dimension {x.shape[1]} != codebook dimension {codebook.D}")
    if frame_rate_hz is None:
        frame_rate_hz = getattr(feats, "frame_rate_hz", 50.0)
    pooled = pool_segments(x, seg)
    ids = codebook.agglomeration_map[nearest_centroid(pooled, codebook.centroids)]
    return UnitSequence(ids, seg.boundaries[:-1], seg.boundaries[1:], frame_rate_hz)


def dedup(units: UnitSequence) -> UnitSequence:
    """Merge runs of consecutive identical unit ids."""
    if len(units) == 0:
        return units
    ids = units.unit_ids
    keep = np.concatenate([[True], ids[1:] != ids[:-1]])
    first = np.flatnonzero(keep)
    last = np.concatenate([first[1:] - 1, [ids.size - 1]])
    return UnitSequence(ids[first], units.starts[first], units.ends[last], units.frame_rate_hz)


def bitrate(rate_hz: float, num_units: int) -> float:
    """Bits per second of a stream of ``num_units``-way tokens at ``rate_hz``."""
    if rate_hz <= 0:
        raise ValidationError(f"rate_hz must be > 0, got {rate_hz}")
    if num_units < 2:
        raise ValidationError(f"num_units must be >= 2, got {num_units}")
    return rate_hz * math.log2(num_units)
