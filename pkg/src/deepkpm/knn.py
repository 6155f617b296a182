"""Static kd-tree over photon positions with exact K-nearest-neighbor queries.

Ties in distance are broken by ascending point id; distances are compared in
squared form and only square-rooted on output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import QueryError

QUERY_CHUNK = 2048


@dataclass(frozen=True)
class Neighborhood:
    indices: np.ndarray  # (n,) int64, ascending distance
    distances: np.ndarray  # (n,) float64
    short: bool  # fewer than K points were available

    @property
    def r_k(self) -> float:
        return float(self.distances[-1])

    def __len__(self):
        return len(self.indices)


class KnnIndex:
    """Balanced median-split kd-tree (implicit heap layout, leaves of <= 8 points)."""

    def __init__(self, points, kernels=None):
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        if not np.all(np.isfinite(pts)):
            raise ValueError("kd-tree points must be finite")
        self.kernels = kernels or backend.kernels
        self.points = pts
        self.perm, self.axis, self.split = self.kernels.kd_build(pts)
        self.depth = self.kernels.kd_node_count(max(len(pts), 1))[1] if len(pts) else 0

    def __len__(self):
        return len(self.points)

    def query(self, queries, k: int, threads: int = 1):
        """Batch query; returns (indices (Q, n), distances (Q, n)), n = min(k, M)."""
        if len(self.points) == 0:
            raise QueryError("query on an empty kd-tree")
        if k < 1:
            raise QueryError("k must be >= 1")
        q = np.ascontiguousarray(np.asarray(queries, dtype=np.float64).reshape(-1, 3))
        n = min(int(k), len(self.points))
        idx = np.zeros((len(q), n), dtype=np.int64)
        d2 = np.zeros((len(q), n), dtype=np.float64)
        kern = self.kernels
        backend.run_chunks(
            lambda a, b: kern.kd_query_range(self.points, self.perm, self.axis, self.split, q, n, a, b, idx, d2),
            backend.chunks(len(q), QUERY_CHUNK), threads,
        )
        return idx, np.sqrt(d2)


def build(points, kernels=None) -> KnnIndex:
    return KnnIndex(points, kernels)


def knn(index: KnnIndex, query, k: int) -> Neighborhood:
    idx, dist = index.query(np.asarray(query, dtype=np.float64).reshape(1, 3), k)
    return Neighborhood(idx[0], dist[0], short=k > len(index))


def knn_linear(points, query, k: int):
    """O(M) oracle ordered by (squared distance, id)."""
    pts = np.asarray(points, dtype=np.float64)
    diff = pts - np.asarray(query, dtype=np.float64)
    d2 = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
    order = np.lexsort((np.arange(len(pts)), d2))[:k]
    return order, np.sqrt(d2[order])
