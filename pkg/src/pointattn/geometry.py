"""Exact geometric queries on 3D point sets.

Three operations, all deterministic:

* k-nearest-neighbor search with a bounded max-heap (one linear pass over
  the candidates per query, heap-sort extraction at the end),
* farthest point sampling (greedy maxmin subset selection),
* inverse-squared-distance feature interpolation over nearest neighbors.

Distances are computed and compared as squared Euclidean distances
throughout; ordering is unchanged and square roots stay out of the hot
loops.  All ties break toward the smaller point index, which makes every
result reproducible and directly comparable against brute-force oracles.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numba
import numpy as np

# The TBB version probe warns on older system TBBs; numba then falls back
# to another threading layer on its own, so the warning is pure noise.
warnings.filterwarnings(
    "ignore", message="The TBB threading layer requires TBB version",
    category=numba.core.errors.NumbaWarning,
)

INTERP_EPS = 1e-8


@dataclass
class PointSet:
    """N points in 3D with optional per-point feature vectors and labels."""

    positions: np.ndarray  # (N, 3)
    features: np.ndarray | None = None  # (N, d)
    labels: np.ndarray | None = None  # (N,) int

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError(f"positions must be (N, 3), got {self.positions.shape}")
        if len(self.positions) < 1:
            raise ValueError("a point set needs at least one point")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions contain non-finite coordinates")
        if self.features is not None:
            self.features = np.asarray(self.features)
            if self.features.ndim != 2 or len(self.features) != len(self.positions):
                raise ValueError("features must be (N, d) with one row per point")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.positions),):
                raise ValueError("labels must be (N,)")

    def __len__(self) -> int:
        return len(self.positions)


@dataclass
class NeighborTable:
    """For each of N queries: k neighbor indices and squared distances,
    sorted ascending by (distance, index) per row."""

    indices: np.ndarray  # (N, k) int64
    sq_dists: np.ndarray  # (N, k) float64

    @property
    def k(self) -> int:
        return self.indices.shape[1]


@dataclass
class SampleResult:
    """Farthest-point-sampling output: the selected indices in selection
    order, and every point's squared distance to the selected set."""

    selected: np.ndarray  # (M,) int64
    min_sq_dists: np.ndarray  # (N,) float64


def _positions(points) -> np.ndarray:
    pos = points.positions if isinstance(points, PointSet) else np.asarray(points, dtype=np.float64)
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ValueError(f"expected (N, 3) coordinates, got shape {pos.shape}")
    if not np.all(np.isfinite(pos)):
        raise ValueError("coordinates contain non-finite values")
    return pos


@numba.njit(cache=True, parallel=True)
def _knn_heap_kernel(points, queries, k):  # pragma: no cover - compiled
    n = queries.shape[0]
    m = points.shape[0]
    out_i = np.empty((n, k), np.int64)
    out_d = np.empty((n, k), np.float64)
    for qi in numba.prange(n):
        # Bounded max-heap over (sq_dist, index); the root is the current
        # worst neighbor under the lexicographic order.
        hd = np.full(k, np.inf)
        hi = np.full(k, -1, np.int64)
        qx, qy, qz = queries[qi, 0], queries[qi, 1], queries[qi, 2]
        for j in range(m):
            dx = points[j, 0] - qx
            dy = points[j, 1] - qy
            dz = points[j, 2] - qz
            d = dx * dx + dy * dy + dz * dz
            if d < hd[0] or (d == hd[0] and j < hi[0]):
                hd[0] = d
                hi[0] = j
                pos = 0
                while True:
                    left = 2 * pos + 1
                    right = left + 1
                    big = pos
                    if left < k and (hd[left] > hd[big] or (hd[left] == hd[big] and hi[left] > hi[big])):
                        big = left
                    if right < k and (hd[right] > hd[big] or (hd[right] == hd[big] and hi[right] > hi[big])):
                        big = right
                    if big == pos:
                        break
                    hd[pos], hd[big] = hd[big], hd[pos]
                    hi[pos], hi[big] = hi[big], hi[pos]
                    pos = big
        # Heap-sort extraction leaves the row ascending by (distance, index).
        for end in range(k - 1, 0, -1):
            hd[0], hd[end] = hd[end], hd[0]
            hi[0], hi[end] = hi[end], hi[0]
            pos = 0
            while True:
                left = 2 * pos + 1
                right = left + 1
                big = pos
                if left < end and (hd[left] > hd[big] or (hd[left] == hd[big] and hi[left] > hi[big])):
                    big = left
                if right < end and (hd[right] > hd[big] or (hd[right] == hd[big] and hi[right] > hi[big])):
                    big = right
                if big == pos:
                    break
                hd[pos], hd[big] = hd[big], hd[pos]
                hi[pos], hi[big] = hi[big], hi[pos]
                pos = big
        out_i[qi] = hi
        out_d[qi] = hd
    return out_i, out_d


def knn_search(points, queries, k: int) -> NeighborTable:
    """Exact k-nearest neighbors of each query among ``points``.

    Selection uses a size-k max-heap per query over a single pass of the
    candidates, so memory stays O(k) per query regardless of the candidate
    count.  When queries and points are the same set, each point is its own
    first neighbor at distance zero (coincident duplicates order by index).
    """
    pts = _positions(points)
    qry = _positions(queries)
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if k > len(pts):
        raise ValueError(f"k={k} exceeds the number of candidate points ({len(pts)})")
    idx, sqd = _knn_heap_kernel(pts, qry, k)
    return NeighborTable(indices=idx, sq_dists=sqd)


def fps_sample(points, m: int, start: int = 0) -> SampleResult:
    """Greedy maxmin (farthest point) sampling of ``m`` points.

    ``selected[0] = start``; each later pick maximizes the minimum squared
    distance to everything already selected, ties toward the smaller index.
    """
    pos = _positions(points)
    n = len(pos)
    if not 1 <= m <= n:
        raise ValueError(f"sample size m={m} must be in [1, {n}]")
    if not 0 <= start < n:
        raise ValueError(f"start index {start} out of range for {n} points")
    selected = np.empty(m, dtype=np.int64)
    selected[0] = start
    min_sq = ((pos - pos[start]) ** 2).sum(axis=1)
    # Working copy masks out selected points so argmax never re-picks one,
    # even when coincident points leave several distances at exactly zero.
    work = min_sq.copy()
    work[start] = -np.inf
    for t in range(1, m):
        nxt = int(np.argmax(work))
        selected[t] = nxt
        d_new = ((pos - pos[nxt]) ** 2).sum(axis=1)
        np.minimum(min_sq, d_new, out=min_sq)
        np.minimum(work, d_new, out=work)
        work[nxt] = -np.inf
    min_sq[selected] = 0.0
    return SampleResult(selected=selected, min_sq_dists=min_sq)


def interpolation_weights(source_pos, target_pos, p: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Indices and normalized inverse-squared-distance weights of each
    target's ``p`` nearest source points.  Weights are nonnegative and sum
    to one per target."""
    src = _positions(source_pos)
    if p < 1 or p > len(src):
        raise ValueError(f"neighbor count p={p} must be in [1, {len(src)}]")
    table = knn_search(src, target_pos, p)
    w = 1.0 / (table.sq_dists + INTERP_EPS)
    w /= w.sum(axis=1, keepdims=True)
    return table.indices, w


def interpolate(source: PointSet, targets, p: int = 3) -> np.ndarray:
    """Interpolate source features onto target positions: each target gets
    the inverse-squared-distance weighted average of its ``p`` nearest
    source features."""
    if source.features is None:
        raise ValueError("source point set has no features to interpolate")
    idx, w = interpolation_weights(source.positions, targets, p)
    feats = np.asarray(source.features, dtype=np.float64)
    return (w[:, :, None] * feats[idx]).sum(axis=1)
