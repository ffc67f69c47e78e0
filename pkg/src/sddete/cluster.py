"""
Bisecting k-means.

Starting from one cluster holding every point, the largest divisible leaf is
repeatedly split in two with Lloyd's 2-means until ``k`` leaves exist or no
leaf can be split.  Points are routed top-down through the resulting binary
tree, moving at each internal node to the nearer child centroid.

Distances are plain Euclidean on the given features; no scaling is applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import LabeledBlock
from .errors import ParameterError, ShapeError
from .ptable import PTable, map_partitions

DEFAULT_MAX_ITER = 20


@dataclass(eq=False)
class ClusterNode:
    centroid: np.ndarray
    size: int
    left: "ClusterNode | None" = None
    right: "ClusterNode | None" = None
    leaf_id: int | None = None
    # creation order, used only to break ties while growing the tree
    _order: int = field(default=0, repr=False)

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(eq=False)
class ClusterModel:
    root: ClusterNode
    k_requested: int
    leaf_ids: list[int]

    @property
    def arity(self) -> int:
        return self.root.centroid.shape[0]

    @property
    def leaf_count(self) -> int:
        return len(self.leaf_ids)

    def leaves(self) -> list[ClusterNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend((node.right, node.left))
        return out


def _matrix(part) -> np.ndarray:
    if isinstance(part, LabeledBlock):
        return part.features
    X = np.asarray(part, dtype=np.float64)
    return X.reshape(len(part), -1) if X.ndim != 2 else X


def sq_distances(X: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = X - c
    return np.einsum("ij,ij->i", d, d)


def _nearer(X, c0, c1) -> np.ndarray:
    """0/1 child index per row; ties go to the first child."""
    return (sq_distances(X, c1) < sq_distances(X, c0)).astype(np.int8)


def _means(rows, assign):
    sums = np.zeros((2, rows[0].shape[1]))
    counts = np.zeros(2, dtype=np.int64)
    for X, a in zip(rows, assign):  # partition order
        for j in (0, 1):
            sel = a == j
            counts[j] += int(sel.sum())
            sums[j] += X[sel].sum(axis=0)
    return sums, counts


def _farthest(rows, c) -> tuple[float, int, int]:
    """(distance, partition, offset) of the first point farthest from ``c``."""
    best = (-1.0, -1, -1)
    for p, X in enumerate(rows):
        if len(X) == 0:
            continue
        d = sq_distances(X, c)
        i = int(np.argmax(d))
        if d[i] > best[0]:
            best = (float(d[i]), p, i)
    return best


def _bisect(rows, rng, max_iter):
    """Split one leaf's rows; return (centroids, per-partition assignments)
    or None when the leaf holds fewer than two distinct points."""
    sizes = [len(X) for X in rows]
    n = sum(sizes)
    if n < 2:
        return None
    i0 = int(rng.integers(n))
    for p, s in enumerate(sizes):
        if i0 < s:
            first = rows[p][i0]
            break
        i0 -= s
    dist, p1, i1 = _farthest(rows, first)
    if dist <= 0.0:
        return None
    c = np.vstack([first, rows[p1][i1]])
    prev = None
    for _ in range(max_iter):
        assign = [_nearer(X, c[0], c[1]) for X in rows]
        if prev is not None and all(np.array_equal(a, b) for a, b in zip(assign, prev)):
            break
        prev = assign
        sums, counts = _means(rows, assign)
        for j in (0, 1):
            if counts[j] == 0:
                # empty child: seed it with the point farthest from the survivor
                other = 1 - j
                _, p, i = _farthest(rows, sums[other] / counts[other])
                assign[p] = assign[p].copy()
                assign[p][i] = j
                sums, counts = _means(rows, assign)
        c = sums / counts[:, None]
    assign = [_nearer(X, c[0], c[1]) for X in rows]
    counts = [sum(int((a == j).sum()) for a in assign) for j in (0, 1)]
    if min(counts) == 0:
        return None
    return c, assign, counts


def fit_bisecting_kmeans(data: PTable, k: int, rng: np.random.Generator,
                         max_iter: int = DEFAULT_MAX_ITER) -> ClusterModel:
    """Grow a bisecting k-means tree with at most ``k`` leaves.

    Parameters
    ----------
    data : PTable
        Partitions of feature rows (labelled blocks or 2-D arrays).
    k : int
        Requested leaf count.
    rng : numpy Generator
        Source for the first seed point of every 2-means split.
    max_iter : int
        Lloyd iteration cap per split; stops early once assignments repeat.
    """
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be >= 1, got {max_iter}")
    parts = [_matrix(p) for p in data.partitions]
    n = sum(len(X) for X in parts)
    if n == 0:
        raise ParameterError("cannot cluster an empty table")
    dims = max(X.shape[1] for X in parts)
    parts = [X if len(X) else np.empty((0, dims)) for X in parts]

    total = np.zeros(dims)
    for X in parts:
        total += X.sum(axis=0)
    root = ClusterNode(total / n, n, _order=0)
    membership = [np.zeros(len(X), dtype=np.int64) for X in parts]
    leaves = {0: root}
    blocked = set()
    next_id = 1

    while len(leaves) < k:
        candidates = sorted((lid for lid in leaves if lid not in blocked),
                            key=lambda lid: (-leaves[lid].size, lid))
        split = False
        for lid in candidates:
            masks = [m == lid for m in membership]
            rows = [X[mask] for X, mask in zip(parts, masks)]
            result = _bisect(rows, rng, max_iter)
            if result is None:
                blocked.add(lid)
                continue
            c, assign, counts = result
            node = leaves.pop(lid)
            node.left = ClusterNode(c[0], counts[0], _order=next_id)
            node.right = ClusterNode(c[1], counts[1], _order=next_id + 1)
            for m, mask, a in zip(membership, masks, assign):
                m[np.flatnonzero(mask)] = np.where(a == 0, next_id, next_id + 1)
            leaves[next_id], leaves[next_id + 1] = node.left, node.right
            next_id += 2
            split = True
            break
        if not split:
            break

    model = ClusterModel(root, k, [])
    for i, leaf in enumerate(model.leaves()):
        leaf.leaf_id = i
    model.leaf_ids = list(range(len(leaves)))
    return model


def assign_block(model: ClusterModel, X) -> np.ndarray:
    """Leaf id for every row of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.arity:
        raise ShapeError(f"expected rows of {model.arity} features, got shape {X.shape}")
    out = np.empty(len(X), dtype=np.int64)
    stack = [(model.root, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        if node.is_leaf:
            out[idx] = node.leaf_id
            continue
        go_right = _nearer(X[idx], node.left.centroid, node.right.centroid).astype(bool)
        stack.append((node.left, idx[~go_right]))
        stack.append((node.right, idx[go_right]))
    return out


def assign(model: ClusterModel, point) -> int:
    x = np.asarray(point, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected a single feature vector, got shape {x.shape}")
    return int(assign_block(model, x[None, :])[0])


def assign_table(model: ClusterModel, data: PTable) -> PTable:
    """Per-record leaf ids, partitioned like ``data``."""
    return map_partitions(data, lambda part: assign_block(model, _matrix(part)))


def total_sse(model: ClusterModel, X) -> float:
    """Within-cluster sum of squares of ``X`` around its routed leaf centroids."""
    X = np.asarray(X, dtype=np.float64)
    ids = assign_block(model, X)
    cents = {leaf.leaf_id: leaf.centroid for leaf in model.leaves()}
    return float(sum(sq_distances(X[ids == i], c).sum() for i, c in cents.items()))
