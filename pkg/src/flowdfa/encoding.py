"""Discretization of numeric flow features via context clustering.

Each unique value of a feature gets a context vector describing which values
occur directly before and after it inside a connection, binned over global
percentile edges, plus explicit self-adjacency counts and a log-frequency
entry. The vectors are clustered with KMeans and the cluster label becomes
the value's discrete encoding.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from math import ceil, log
from typing import Iterable, Mapping, Sequence

import numpy as np

from .flows import ConfigError, ConnectionKey, FlowRecord

NUMERIC_FEATURES = ("duration", "num_bytes", "num_packets")


@dataclass(frozen=True)
class ContextVector:
    """Context counts for one unique feature value.

    ``prev_bins``/``next_bins`` count non-self neighbors per percentile bin;
    self-adjacencies go exclusively to ``prev_self``/``next_self``.
    ``log_freq`` is ln(1 + total occurrences of the value).
    """

    value: float
    prev_bins: tuple[int, ...]
    next_bins: tuple[int, ...]
    prev_self: int
    next_self: int
    log_freq: float

    def as_array(self) -> np.ndarray:
        return np.array(
            list(self.prev_bins) + list(self.next_bins) + [self.prev_self, self.next_self, self.log_freq],
            dtype=float,
        )

    def __len__(self) -> int:
        return len(self.prev_bins) + len(self.next_bins) + 3


@dataclass(frozen=True)
class ContextMatrix:
    """All context vectors of one feature plus the shared bin edges."""

    feature: str
    prev_edges: tuple[float, ...]
    next_edges: tuple[float, ...]
    vectors: dict[float, ContextVector]

    def as_ndarray(self) -> tuple[np.ndarray, np.ndarray]:
        """Values (sorted ascending) and their stacked vectors, row-aligned."""
        values = sorted(self.vectors)
        rows = np.stack([self.vectors[v].as_array() for v in values]) if values else np.empty((0, 3))
        return np.array(values), rows


@dataclass(frozen=True)
class FeatureEncoding:
    """Fitted discretizer for one feature: value -> cluster label."""

    feature: str
    prev_edges: tuple[float, ...]
    next_edges: tuple[float, ...]
    labels: dict[float, int]
    k: int
    silhouette: float
    seed: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "_sorted_values", sorted(self.labels))

    def label_of(self, value: float) -> int:
        return encode_feature_value(self, value)


def nearest_rank_quantiles(data: Sequence[float], bins: int) -> tuple[float, ...]:
    """Internal bin edges at the i/bins quantiles, nearest-rank method.

    Duplicate edges are collapsed, so heavily skewed data yields fewer
    effective bins. Empty data yields no edges (a single catch-all bin).
    """
    if bins < 1:
        raise ConfigError(f"bin count must be >= 1, got {bins}")
    values = sorted(data)
    n = len(values)
    if n == 0:
        return ()
    edges: list[float] = []
    for i in range(1, bins):
        rank = ceil(i / bins * n)
        edge = values[max(rank - 1, 0)]
        if not edges or edge > edges[-1]:
            edges.append(edge)
    return tuple(edges)


def _feature_values(flows: Iterable[FlowRecord], feature: str) -> list[float]:
    if feature not in NUMERIC_FEATURES:
        raise ConfigError(f"feature {feature!r} is not a numeric flow feature {NUMERIC_FEATURES}")
    return [float(getattr(f, feature)) for f in flows]


def build_context_matrix(
    groups: Mapping[ConnectionKey, Sequence[FlowRecord]],
    feature: str,
    bins: int = 10,
) -> ContextMatrix:
    """Count, per unique value, the values adjacent to it within connections.

    Adjacency never crosses a connection boundary, so the context of a value
    reflects only the surrounding flows of the same host pair. Bin edges are
    percentiles of the global multiset of non-self predecessor (resp.
    successor) values, shared by every vector of the feature so the vectors
    live in one coordinate system.
    """
    sequences = [_feature_values(flows, feature) for flows in groups.values()]

    totals: dict[float, int] = {}
    prev_pairs: list[tuple[float, float]] = []  # (value, its predecessor)
    next_pairs: list[tuple[float, float]] = []
    prev_self: dict[float, int] = {}
    next_self: dict[float, int] = {}
    for seq in sequences:
        for v in seq:
            totals[v] = totals.get(v, 0) + 1
        for left, right in zip(seq, seq[1:]):
            if left == right:
                prev_self[right] = prev_self.get(right, 0) + 1
                next_self[left] = next_self.get(left, 0) + 1
            else:
                prev_pairs.append((right, left))
                next_pairs.append((left, right))

    prev_edges = nearest_rank_quantiles([p for _, p in prev_pairs], bins)
    next_edges = nearest_rank_quantiles([n for _, n in next_pairs], bins)
    n_prev_bins = len(prev_edges) + 1
    n_next_bins = len(next_edges) + 1

    prev_counts: dict[float, list[int]] = {}
    for v, p in prev_pairs:
        row = prev_counts.setdefault(v, [0] * n_prev_bins)
        row[bisect_left(prev_edges, p)] += 1
    next_counts: dict[float, list[int]] = {}
    for v, nxt in next_pairs:
        row = next_counts.setdefault(v, [0] * n_next_bins)
        row[bisect_left(next_edges, nxt)] += 1

    vectors = {
        v: ContextVector(
            value=v,
            prev_bins=tuple(prev_counts.get(v, [0] * n_prev_bins)),
            next_bins=tuple(next_counts.get(v, [0] * n_next_bins)),
            prev_self=prev_self.get(v, 0),
            next_self=next_self.get(v, 0),
            log_freq=log(1 + count),
        )
        for v, count in totals.items()
    }
    return ContextMatrix(feature=feature, prev_edges=prev_edges, next_edges=next_edges, vectors=vectors)


def _pairwise_sq_dists(points: np.ndarray) -> np.ndarray:
    sq = np.sum(points * points, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (points @ points.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def silhouette_mean(points: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette coefficient over all points, Euclidean distance.

    Points in singleton clusters contribute 0. Fewer than two nonempty
    clusters makes cohesion/separation meaningless; defined as 0.
    """
    n = len(points)
    cluster_ids = np.unique(labels)
    if n == 0 or len(cluster_ids) < 2:
        return 0.0
    dists = np.sqrt(_pairwise_sq_dists(points))
    sums = np.zeros((n, len(cluster_ids)))
    sizes = np.zeros(len(cluster_ids), dtype=int)
    for j, cid in enumerate(cluster_ids):
        mask = labels == cid
        sizes[j] = mask.sum()
        sums[:, j] = dists[:, mask].sum(axis=1)
    total = 0.0
    for i in range(n):
        j = int(np.searchsorted(cluster_ids, labels[i]))
        if sizes[j] == 1:
            continue  # singleton contributes 0
        a = sums[i, j] / (sizes[j] - 1)
        b = np.inf
        for jj in range(len(cluster_ids)):
            if jj != j and sizes[jj] > 0:
                b = min(b, sums[i, jj] / sizes[jj])
        denom = max(a, b)
        if denom > 0:
            total += (b - a) / denom
    return total / n


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int = 300) -> tuple[np.ndarray, np.ndarray]:
    """Plain Lloyd iteration; stops when assignments stop changing.

    A cluster that loses all its points keeps its previous centroid.
    """
    labels = None
    for _ in range(max_iter):
        d2 = (
            np.sum(points * points, axis=1)[:, None]
            + np.sum(centroids * centroids, axis=1)[None, :]
            - 2.0 * points @ centroids.T
        )
        new_labels = np.argmin(d2, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(len(centroids)):
            members = points[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return labels, centroids


@dataclass(frozen=True)
class KMeansRun:
    labels: np.ndarray
    centroids: np.ndarray
    silhouette: float
    restart_index: int
    all_silhouettes: tuple[float, ...] = ()


def kmeans_best_of(points: np.ndarray, k: int, restarts: int, seed: int) -> KMeansRun:
    """Run KMeans ``restarts`` times and keep the best run by silhouette.

    Initial centroids are drawn uniformly from the distinct data points.
    Ties between restarts go to the lowest restart index; the whole procedure
    is deterministic for a fixed seed.
    """
    if len(points) == 0:
        raise ConfigError("cannot cluster an empty vector set")
    distinct = np.unique(points, axis=0)
    if k < 1 or k > len(distinct):
        raise ConfigError(f"cluster count {k} outside 1..{len(distinct)} (distinct vectors)")
    if restarts < 1:
        raise ConfigError(f"restarts must be >= 1, got {restarts}")
    rng = np.random.default_rng(seed)
    best: KMeansRun | None = None
    silhouettes: list[float] = []
    for r in range(restarts):
        init = distinct[rng.choice(len(distinct), size=k, replace=False)].astype(float)
        labels, centroids = _lloyd(points.astype(float), init)
        sil = silhouette_mean(points, labels)
        silhouettes.append(sil)
        if best is None or sil > best.silhouette:
            best = KMeansRun(labels=labels, centroids=centroids, silhouette=sil, restart_index=r)
    return KMeansRun(
        labels=best.labels,
        centroids=best.centroids,
        silhouette=best.silhouette,
        restart_index=best.restart_index,
        all_silhouettes=tuple(silhouettes),
    )


def kmeans_fit(matrix: ContextMatrix, k: int, restarts: int = 10, seed: int = 0) -> FeatureEncoding:
    """Cluster a feature's context vectors; the labels become the encoding."""
    values, rows = matrix.as_ndarray()
    run = kmeans_best_of(rows, k, restarts, seed)
    labels = {float(v): int(lab) for v, lab in zip(values, run.labels)}
    return FeatureEncoding(
        feature=matrix.feature,
        prev_edges=matrix.prev_edges,
        next_edges=matrix.next_edges,
        labels=labels,
        k=k,
        silhouette=run.silhouette,
        seed=seed,
    )


def encode_feature_value(encoding: FeatureEncoding, value: float) -> int:
    """Label of a value; unseen values borrow the nearest training value's.

    Distance ties resolve to the smaller training value.
    """
    value = float(value)
    hit = encoding.labels.get(value)
    if hit is not None:
        return hit
    values: list[float] = encoding._sorted_values  # set in __post_init__
    pos = bisect_right(values, value)
    if pos == 0:
        return encoding.labels[values[0]]
    if pos == len(values):
        return encoding.labels[values[-1]]
    left, right = values[pos - 1], values[pos]
    nearest = left if value - left <= right - value else right
    return encoding.labels[nearest]


def fit_all_encodings(
    groups: Mapping[ConnectionKey, Sequence[FlowRecord]],
    clusters: Mapping[str, int],
    bins: int = 10,
    restarts: int = 10,
    seed: int = 0,
) -> dict[str, FeatureEncoding]:
    """Fit one encoding per numeric feature.

    The requested cluster count is clamped to the number of distinct context
    vectors the feature actually produced (small alphabets saturate early).
    Each feature derives its own child seed so encodings stay independent.
    """
    encodings: dict[str, FeatureEncoding] = {}
    for i, feature in enumerate(NUMERIC_FEATURES):
        matrix = build_context_matrix(groups, feature, bins)
        _, rows = matrix.as_ndarray()
        n_distinct = len(np.unique(rows, axis=0)) if len(rows) else 0
        if n_distinct == 0:
            raise ConfigError(f"no values observed for feature {feature!r}")
        k = min(clusters.get(feature, 20), n_distinct)
        encodings[feature] = kmeans_fit(matrix, k, restarts=restarts, seed=seed + i)
    return encodings
