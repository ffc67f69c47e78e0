"""
Class-balancing samplers: random over/undersampling, exact SMOTE, and the
cluster-wise oversampling used inside the ensemble.

All samplers take and return labelled tables and target an imbalance ratio
of exactly 1.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .data import ClassStats, LabeledBlock, as_labeled, class_counts, stats_from_counts, table_from_arrays
from .errors import AlignmentError, BalanceError, ParameterError
from .ptable import PTable, punion, run_tasks
from .rng import child_seed, stream


@dataclass(frozen=True)
class SamplerReport:
    before: ClassStats
    after: ClassStats
    # (cluster id, counts before, counts after) for cluster-wise sampling
    per_cluster: tuple | None = None


def _class_rows(data: PTable, label: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Rows of one class in global order, plus per-partition masks."""
    masks = [b.labels == label for b in data.partitions]
    rows = np.concatenate([b.features[m] for b, m in zip(data.partitions, masks)])
    return rows, masks


def _sides(data: PTable) -> tuple[int, int, np.ndarray]:
    counts = class_counts(data)
    if counts.min() == 0:
        raise BalanceError(f"both classes must be present to balance, got counts {counts.tolist()}")
    minority = 0 if counts[0] < counts[1] else 1
    return minority, 1 - minority, counts


def _with_extra(data: PTable, X: np.ndarray, label: int) -> PTable:
    if len(X) == 0:
        return data
    extra = table_from_arrays(X, np.full(len(X), label), min(data.partition_count, len(X)))
    return punion(data, extra)


def ros(data: PTable, rng: np.random.Generator) -> PTable:
    """Random oversampling: duplicate minority records, drawn with
    replacement, until both classes have the majority count.  Originals come
    first, replicas after."""
    data = as_labeled(data)
    minority, _, counts = _sides(data)
    n_new = int(counts.max() - counts.min())
    if n_new == 0:
        return data
    rows, _ = _class_rows(data, minority)
    picks = rng.integers(0, len(rows), size=n_new)
    return _with_extra(data, rows[picks], minority)


def rus(data: PTable, rng: np.random.Generator) -> PTable:
    """Random undersampling: keep a uniform subset of the majority of the
    minority's size.  Relative record order is preserved."""
    data = as_labeled(data)
    _, majority, counts = _sides(data)
    n_keep = int(counts.min())
    n_maj = int(counts[majority])
    keep = np.zeros(n_maj, dtype=bool)
    keep[rng.choice(n_maj, size=n_keep, replace=False)] = True
    parts, offset = [], 0
    for b in data.partitions:
        is_maj = b.labels == majority
        k = int(is_maj.sum())
        sel = ~is_maj
        sel[np.flatnonzero(is_maj)] = keep[offset:offset + k]
        offset += k
        parts.append(b.take(np.flatnonzero(sel)))
    return PTable(parts)


def knn_indices(points: np.ndarray, k: int, chunk_elems: int = 1 << 24) -> np.ndarray:
    """Exact ``k`` nearest neighbours of every row among the other rows.

    Neighbours are ordered by Euclidean distance, ties by lower index.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    if not 1 <= k <= n - 1:
        raise ParameterError(f"k must be in [1, {n - 1}], got {k}")
    out = np.empty((n, k), dtype=np.int64)
    step = max(1, chunk_elems // max(1, n * points.shape[1]))
    for start in range(0, n, step):
        block = points[start:start + step]
        diff = block[:, None, :] - points[None, :, :]
        d = np.einsum("ijk,ijk->ij", diff, diff)
        d[np.arange(len(block)), np.arange(start, start + len(block))] = np.inf
        out[start:start + len(block)] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def smote_plan(n_min: int, n_new: int, neighbors: np.ndarray, rng: np.random.Generator):
    """Base index, neighbour index and interpolation weight per synthetic point.

    Base points are taken round-robin; the neighbour is uniform among the
    base point's neighbour list.
    """
    base = np.arange(n_new) % n_min
    pick = rng.integers(0, neighbors.shape[1], size=n_new)
    gap = rng.random(n_new)
    return base, neighbors[base, pick], gap


def smote(data: PTable, k: int = 5, rng: np.random.Generator | None = None) -> PTable:
    """Exact SMOTE to an imbalance ratio of 1.

    Each synthetic point is ``x + u * (nn - x)`` with ``u ~ U[0, 1)`` and
    ``nn`` one of the ``k`` nearest minority neighbours of ``x``.  With fewer
    than ``k + 1`` minority records every other minority record is a
    neighbour.
    """
    if rng is None:
        rng = np.random.default_rng()
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    data = as_labeled(data)
    minority, _, counts = _sides(data)
    n_min = int(counts.min())
    if n_min < 2:
        raise BalanceError("SMOTE needs at least 2 minority records")
    n_new = int(counts.max() - counts.min())
    if n_new == 0:
        return data
    rows, _ = _class_rows(data, minority)
    neighbors = knn_indices(rows, min(k, n_min - 1))
    base, nn, gap = smote_plan(n_min, n_new, neighbors, rng)
    synthetic = rows[base] + gap[:, None] * (rows[nn] - rows[base])
    return _with_extra(data, synthetic, minority)


def _assignment_parts(data: PTable, assignments) -> list[np.ndarray]:
    if isinstance(assignments, PTable):
        if assignments.partition_sizes() != data.partition_sizes():
            raise AlignmentError("cluster assignments are not aligned with the data partitions")
        return [np.asarray(a, dtype=np.int64) for a in assignments.partitions]
    flat = np.asarray(assignments, dtype=np.int64)
    if len(flat) != data.count():
        raise AlignmentError(f"{len(flat)} assignments for {data.count()} records")
    bounds = np.cumsum([0] + data.partition_sizes())
    return [flat[a:b] for a, b in zip(bounds[:-1], bounds[1:])]


def _balance_cluster(sub: PTable, seed: int, cluster: int):
    counts = class_counts(sub)
    if counts.min() == 0:
        return sub, counts, counts
    out = ros(sub, stream(seed, cluster))
    return out, counts, class_counts(out)


def cros(data: PTable, assignments, rng: np.random.Generator, workers: int | None = None,
         return_report: bool = False):
    """Cluster-wise random oversampling.

    Records are grouped by cluster id; every cluster holding both classes is
    oversampled to local balance (its own minority class is replicated, which
    may be the global majority).  Single-class clusters pass through.  The
    balanced groups are concatenated in ascending cluster order.
    """
    data = as_labeled(data)
    parts = _assignment_parts(data, assignments)
    ids = np.unique(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
    seed = child_seed(rng)

    def group(cid):
        return PTable(b.take(np.flatnonzero(a == cid)) for b, a in zip(data.partitions, parts))

    tasks = [functools.partial(_balance_cluster, group(int(cid)), seed, int(cid)) for cid in ids]
    results = run_tasks(tasks, workers)

    out = PTable([LabeledBlock(np.empty((0, data.partitions[0].arity)), [])])
    for sub, _, _ in results:
        out = punion(out, sub)
    if not return_report:
        return out
    report = SamplerReport(
        stats_from_counts(class_counts(data)), stats_from_counts(class_counts(out)),
        tuple((int(cid), tuple(b.tolist()), tuple(a.tolist()))
              for cid, (_, b, a) in zip(ids, results)))
    return out, report


def report(before: PTable, after: PTable) -> SamplerReport:
    return SamplerReport(stats_from_counts(class_counts(before)),
                         stats_from_counts(class_counts(after)))


SAMPLERS = {
    "ros": lambda data, rng, **kw: ros(data, rng),
    "rus": lambda data, rng, **kw: rus(data, rng),
    "smote": lambda data, rng, k=5, **kw: smote(data, k=k, rng=rng),
}
