"""Exact nearest-neighbor queries, blocked brute force.

Distances come from the literal (a - b)**2 kernel rather than the dot
product expansion, so coincident points measure exactly zero. Query rows
are processed in fixed-size blocks; the block partition depends only on
the problem shape, and each block writes a disjoint output slice, so the
results are bit-identical whether blocks run on one thread or many.
COLLAPSE_LAB_THREADS caps the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, EmptyDatasetError, InsufficientPointsError
from .tensorset import DistanceMetric, PointSet

# Elements of the (rows x cols x dim) diff tensor per block, ~32 MB of f64.
_BLOCK_BUDGET = 1 << 22


@dataclass(frozen=True, eq=False)
class NeighborResult:
    """Per-query neighbor distance and the neighbor's row index."""

    distances: np.ndarray
    indices: np.ndarray


def worker_count() -> int:
    raw = os.environ.get("COLLAPSE_LAB_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"COLLAPSE_LAB_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"COLLAPSE_LAB_THREADS must be a positive integer, got {raw!r}")
    return value


def sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact pairwise squared euclidean distances, shape (len(a), len(b))."""
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _blocks(n_rows: int, n_cols: int, dim: int) -> list[tuple[int, int]]:
    step = max(1, _BLOCK_BUDGET // max(1, n_cols * dim))
    return [(s, min(s + step, n_rows)) for s in range(0, n_rows, step)]

def _run_blocks(work, blocks: list[tuple[int, int]]) -> None:
    workers = worker_count()
    if workers == 1 or len(blocks) == 1:
        for blk in blocks:
            work(blk)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(work, blocks))


def kth_nn_within(ps: PointSet, k: int, metric: DistanceMetric = DistanceMetric()) -> NeighborResult:
    """k-th nearest neighbor of every point within the same set, self excluded.

    Ties are broken toward the lower row index. Distances are reported in
    the metric's units (euclidean or squared euclidean) in feature space.
    """
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise ConfigError(f"k must be a positive integer, got {k!r}")
    n = ps.size
    if n <= k:
        raise InsufficientPointsError(f"need at least {k + 1} points for the {k}-th neighbor, got {n}")
    x = np.ascontiguousarray(metric.feature_map.apply(ps.data))
    out_v = np.empty(n, dtype=np.float64)
    out_i = np.empty(n, dtype=np.int64)

    def work(blk: tuple[int, int]) -> None:
        s, e = blk
        d2 = sq_dists(x[s:e], x)
        d2[np.arange(e - s), np.arange(s, e)] = np.inf
        if k == 1:
            out_v[s:e] = d2.min(axis=1)
            out_i[s:e] = d2.argmin(axis=1)
            return
        part = np.partition(d2, k - 1, axis=1)
        vals = part[:, k - 1]
        out_v[s:e] = vals
        for r in range(e - s):
            row = d2[r]
            v = vals[r]
            below = int(np.count_nonzero(row < v))
            ties = np.flatnonzero(row == v)
            out_i[s + r] = ties[k - 1 - below]

    _run_blocks(work, _blocks(n, n, x.shape[1]))
    return NeighborResult(metric.from_squared(out_v), out_i)


def nn_cross(queries: PointSet, refs: PointSet, metric: DistanceMetric = DistanceMetric()) -> NeighborResult:
    """Nearest reference point for every query; a query may match itself.

    Identical rows in queries and refs produce a distance of exactly zero.
    """
    if refs.size == 0:
        raise EmptyDatasetError("reference set is empty")
    if queries.size == 0:
        raise EmptyDatasetError("query set is empty")
    if queries.dim != refs.dim:
        raise DimensionError(f"query dimension {queries.dim} != reference dimension {refs.dim}")
    q = np.ascontiguousarray(metric.feature_map.apply(queries.data))
    r = np.ascontiguousarray(metric.feature_map.apply(refs.data))
    nq = q.shape[0]
    out_v = np.empty(nq, dtype=np.float64)
    out_i = np.empty(nq, dtype=np.int64)

    def work(blk: tuple[int, int]) -> None:
        s, e = blk
        d2 = sq_dists(q[s:e], r)
        out_v[s:e] = d2.min(axis=1)
        out_i[s:e] = d2.argmin(axis=1)

    _run_blocks(work, _blocks(nq, r.shape[0], q.shape[1]))
    return NeighborResult(metric.from_squared(out_v), out_i)
