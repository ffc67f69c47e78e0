"""
CART classification trees with per-node quantile candidate splits, plus a
bagged random forest built from the same grower.

Leaves keep raw class counts; a point's score vector is its leaf's counts
divided by the leaf total.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .data import to_arrays
from .errors import ParameterError, ShapeError, UndefinedMetricError
from .ptable import PTable, run_tasks
from .rng import child_seed, stream

NUM_CLASSES = 2


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 5
    max_bins: int = 32
    impurity: str = "gini"
    min_info_gain: float = 0.0
    min_instances_per_node: int = 1
    binning: str = "node"

    def __post_init__(self):
        if self.binning not in ("node", "global"):
            raise ParameterError(f"binning must be 'node' or 'global', got {self.binning!r}")
        if self.max_depth < 1:
            raise ParameterError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.max_bins < 2:
            raise ParameterError(f"max_bins must be >= 2, got {self.max_bins}")
        if self.impurity != "gini":
            raise ParameterError(f"only gini impurity is supported, got {self.impurity!r}")
        if self.min_info_gain < 0:
            raise ParameterError(f"min_info_gain must be >= 0, got {self.min_info_gain}")
        if self.min_instances_per_node < 1:
            raise ParameterError(
                f"min_instances_per_node must be >= 1, got {self.min_instances_per_node}")


def gini(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 0):
        raise ParameterError("class counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise UndefinedMetricError("gini impurity is undefined for an empty node")
    p = counts / total
    return float(1.0 - np.sum(p * p))


class TreeModel:
    """A fitted binary tree stored as flat preorder arrays.

    ``feature[i] < 0`` marks node ``i`` as a leaf.  Internal nodes send a
    point left when ``x[feature] <= threshold``.
    """

    __slots__ = ("arity", "params", "feature", "threshold", "left", "right", "counts")

    def __init__(self, arity, params, feature, threshold, left, right, counts):
        self.arity = int(arity)
        self.params = params
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.float64).reshape(-1, NUM_CLASSES)
        for a in (self.feature, self.threshold, self.left, self.right, self.counts):
            a.flags.writeable = False

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] < 0

    def depths(self) -> np.ndarray:
        d = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[i] + 1
                d[self.right[i]] = d[i] + 1
        return d

    @property
    def depth(self) -> int:
        return int(self.depths().max())

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def leaf_index(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.arity:
            raise ShapeError(f"expected rows of {self.arity} features, got shape {X.shape}")
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] >= 0
        while active.any():
            r, nd = rows[active], node[active]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict_proba(self, X) -> np.ndarray:
        c = self.counts[self.leaf_index(X)]
        return c / c.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.node_count):
            if self.feature[i] < 0:
                nodes.append({"type": "leaf", "counts": self.counts[i].tolist()})
            else:
                nodes.append({"type": "internal", "feature": int(self.feature[i]),
                              "threshold": float(self.threshold[i])})
        return {"arity": self.arity, "params": asdict(self.params), "nodes": nodes}

    @classmethod
    def from_dict(cls, d) -> "TreeModel":
        nodes = d["nodes"]
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        counts = np.zeros((n, NUM_CLASSES))

        def walk(i):
            if i >= n:
                raise ValueError("node list ends inside a subtree")
            node = nodes[i]
            if node["type"] == "leaf":
                counts[i] = node["counts"]
                return i + 1
            if node["type"] != "internal":
                raise ValueError(f"unknown node type {node['type']!r}")
            feature[i] = int(node["feature"])
            threshold[i] = float(node["threshold"])
            left[i] = i + 1
            nxt = walk(i + 1)
            right[i] = nxt
            return walk(nxt)

        if walk(0) != n:
            raise ValueError("trailing nodes after the root subtree")
        arity = int(d["arity"])
        if np.any(feature >= arity):
            raise ValueError("split feature index exceeds tree arity")
        return cls(arity, TreeParams(**d["params"]), feature, threshold, left, right, counts)


def predict_scores_tree(model: TreeModel, point) -> np.ndarray:
    x = np.asarray(point, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected one feature vector, got shape {x.shape}")
    return model.predict_proba(x[None, :])[0]


def _next_boundary(is_boundary: np.ndarray) -> np.ndarray:
    """For each position, the first boundary position at or after it (or m)."""
    m = is_boundary.shape[1]
    pos = np.where(is_boundary, np.arange(m), m)
    return np.minimum.accumulate(pos[:, ::-1], axis=1)[:, ::-1]


class _Grower:
    def __init__(self, X, y, params: TreeParams, rng=None, features_per_node=None):
        self.X = X
        self.y = y
        self.params = params
        self.rng = rng
        self.mtry = features_per_node
        self.nodes = []  # [feature, threshold, left, right, c0, c1]
        self.quant_q = np.arange(1, params.max_bins)
        self.global_thresholds = None

    def grow(self):
        n, T = self.X.shape
        order = np.argsort(self.X, axis=0, kind="stable").T.copy()
        if self.params.binning == "global":
            self.global_thresholds = [self._root_thresholds(self.X[order[j], j]) for j in range(T)]
        self._build(order, 0)
        a = np.array(self.nodes, dtype=np.float64).reshape(-1, 6)
        return a

    def _leaf(self, counts):
        self.nodes.append([-1, 0.0, -1, -1, counts[0], counts[1]])
        return len(self.nodes) - 1

    def _build(self, order, depth):
        p = self.params
        m = order.shape[1]
        pos = int(self.y[order[0]].sum())
        counts = (m - pos, pos)
        if depth >= p.max_depth or pos == 0 or pos == m or m < 2 * p.min_instances_per_node:
            return self._leaf(counts)
        split = self._best_split(order, counts)
        if split is None:
            return self._leaf(counts)
        feat, thr = split
        me = len(self.nodes)
        self.nodes.append([feat, thr, -1, -1, counts[0], counts[1]])
        goes_left = np.zeros(len(self.y), dtype=bool)
        rows = order[0]
        goes_left[rows] = self.X[rows, feat] <= thr
        mask = goes_left[order]
        n_left = int(mask[0].sum())
        left_order = order[mask].reshape(order.shape[0], n_left)
        right_order = order[~mask].reshape(order.shape[0], m - n_left)
        self.nodes[me][2] = self._build(left_order, depth + 1)
        self.nodes[me][3] = self._build(right_order, depth + 1)
        return me

    def _root_thresholds(self, v):
        m = len(v)
        b = np.flatnonzero(v[:-1] < v[1:])
        if len(b) + 1 > self.params.max_bins:
            q_last = np.ceil(self.quant_q * m / self.params.max_bins).astype(np.int64) - 1
            q_last = q_last[(q_last >= 0) & (q_last < m - 1)]
            i = np.searchsorted(b, q_last)
            b = np.unique(b[i[i < len(b)]])
        lo, hi = v[b], v[b + 1]
        thr = 0.5 * lo + 0.5 * hi
        return np.where((lo <= thr) & (thr < hi), thr, lo)

    def _best_split(self, order, counts):
        p = self.params
        m = order.shape[1]
        T = order.shape[0]
        if self.mtry is not None and self.mtry < T:
            feats = np.sort(self.rng.choice(T, size=self.mtry, replace=False))
        else:
            feats = np.arange(T)
        idx = order[feats]
        V = self.X[idx, feats[:, None]]
        L = self.y[idx]
        boundary = V[:, :-1] < V[:, 1:]
        n_distinct = boundary.sum(axis=1) + 1
        cand = boundary.copy()
        wide = n_distinct > p.max_bins
        if self.global_thresholds is not None:
            cand[:] = False
            for r, j in enumerate(feats):
                th = self.global_thresholds[j]
                c = np.searchsorted(V[r], th, side="right") - 1
                c = c[(c >= 0) & (c < m - 1)]
                cand[r, c] = True
            cand &= boundary
        elif wide.any():
            # last index of the left part at each quantile, snapped forward to
            # the next change of value
            q_last = np.ceil(self.quant_q * m / p.max_bins).astype(np.int64) - 1
            q_last = q_last[(q_last >= 0) & (q_last < m - 1)]
            nb = _next_boundary(boundary[wide])
            picks = nb[:, q_last]
            sub = np.zeros((int(wide.sum()), m), dtype=bool)
            np.put_along_axis(sub, picks, True, axis=1)
            cand[wide] = sub[:, :-1]
        n_left = np.arange(1, m, dtype=np.float64)
        n_right = m - n_left
        ok = (n_left >= p.min_instances_per_node) & (n_right >= p.min_instances_per_node)
        cand &= ok
        if not cand.any():
            return None
        pos_left = np.cumsum(L, axis=1)[:, :-1].astype(np.float64)
        neg_left = n_left - pos_left
        pos_right = counts[1] - pos_left
        neg_right = n_right - pos_right
        weighted = (n_left - (pos_left ** 2 + neg_left ** 2) / n_left
                    + n_right - (pos_right ** 2 + neg_right ** 2) / n_right) / m
        parent = 1.0 - (counts[0] / m) ** 2 - (counts[1] / m) ** 2
        gain = np.where(cand, parent - weighted, -np.inf)
        best = int(np.argmax(gain))  # row-major: lowest feature, then lowest threshold
        f_row, c = divmod(best, m - 1)
        g = gain[f_row, c]
        if not g > 0.0 or g < p.min_info_gain:
            return None
        lo, hi = V[f_row, c], V[f_row, c + 1]
        if self.global_thresholds is not None:
            th = self.global_thresholds[feats[f_row]]
            return int(feats[f_row]), float(th[np.searchsorted(th, lo, side="left")])
        thr = 0.5 * lo + 0.5 * hi
        if not lo <= thr < hi:
            thr = lo
        return int(feats[f_row]), float(thr)


def _fit_arrays(X, y, params, rng=None, features_per_node=None) -> TreeModel:
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ParameterError("cannot fit a tree on an empty table")
    a = _Grower(X, y, params, rng, features_per_node).grow()
    return TreeModel(X.shape[1], params, a[:, 0].astype(np.int64), a[:, 1],
                     a[:, 2].astype(np.int64), a[:, 3].astype(np.int64), a[:, 4:6])


def fit_tree(data: PTable, params: TreeParams = TreeParams(), rng: np.random.Generator | None = None,
             features_per_node: int | None = None) -> TreeModel:
    """Greedy top-down CART induction.

    For each node and feature, candidate thresholds are midpoints between
    adjacent distinct values; when a feature has more than ``max_bins``
    distinct values at the node, only the boundaries at ``max_bins - 1``
    quantile positions are tried.  The split with the largest Gini decrease
    wins (ties: lowest feature, then lowest threshold).  Splitting stops at
    ``max_depth``, on pure nodes, when a child would get fewer than
    ``min_instances_per_node`` records, or when the best decrease is not
    positive or is below ``min_info_gain``.

    ``rng`` is only consulted when ``features_per_node`` restricts the
    features tried at each node.
    """
    X, y = to_arrays(data)
    if features_per_node is not None and rng is None:
        raise ParameterError("feature subsampling needs an rng")
    return _fit_arrays(X, y, params, rng, features_per_node)


class ForestModel:
    def __init__(self, trees: list[TreeModel]):
        self.trees = list(trees)

    @property
    def arity(self) -> int:
        return self.trees[0].arity

    def predict_proba(self, X) -> np.ndarray:
        """Mean of the trees' leaf distributions."""
        total = np.zeros((len(X), NUM_CLASSES))
        for t in self.trees:
            total += t.predict_proba(X)
        return total / len(self.trees)

    def predict(self, X) -> np.ndarray:
        """Majority vote; ties go to the larger probability sum, then class 0."""
        votes = np.zeros((len(X), NUM_CLASSES))
        prob = np.zeros((len(X), NUM_CLASSES))
        for t in self.trees:
            pr = t.predict_proba(X)
            prob += pr
            votes[np.arange(len(X)), np.argmax(pr, axis=1)] += 1
        out = np.argmax(votes, axis=1)
        tied = votes[:, 0] == votes[:, 1]
        out[tied] = np.argmax(prob[tied], axis=1)
        return out

    def to_dict(self) -> dict:
        return {"trees": [t.to_dict() for t in self.trees]}


def _forest_member(X, y, params, seed, t, bootstrap, mtry):
    rng = stream(seed, t)
    if bootstrap:
        idx = rng.integers(0, len(y), size=len(y))
        X, y = X[idx], y[idx]
    return _fit_arrays(X, y, params, rng, mtry)


def fit_random_forest(data: PTable, n_trees: int = 200, params: TreeParams = TreeParams(max_depth=4),
                      rng: np.random.Generator | None = None, bootstrap: bool = True,
                      features_per_node="sqrt", workers: int | None = None) -> ForestModel:
    """Bagged trees with per-node random feature subsets.

    ``features_per_node`` is ``"sqrt"`` (``ceil(sqrt(T))``), an integer, or
    ``None`` for all features.  Each tree draws from its own keyed stream, so
    trees can be grown in any order.
    """
    if n_trees < 1:
        raise ParameterError(f"n_trees must be >= 1, got {n_trees}")
    if rng is None:
        rng = np.random.default_rng(0)
    X, y = to_arrays(data)
    if len(y) == 0:
        raise ParameterError("cannot fit a forest on an empty table")
    T = X.shape[1]
    if features_per_node == "sqrt":
        mtry = int(math.ceil(math.sqrt(T)))
    elif features_per_node is None:
        mtry = None
    else:
        mtry = int(features_per_node)
        if not 1 <= mtry <= T:
            raise ParameterError(f"features_per_node must be in [1, {T}], got {mtry}")
    seed = child_seed(rng)
    X = np.ascontiguousarray(X)
    tasks = [functools.partial(_forest_member, X, y, params, seed, t, bootstrap, mtry)
             for t in range(n_trees)]
    return ForestModel(run_tasks(tasks, workers))
