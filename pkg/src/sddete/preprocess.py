"""
Diversity preprocessing: random discretization, PCA projection and the
feature-wise join of both outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledBlock, arity, as_labeled
from .errors import ParameterError, ShapeError
from .ptable import PTable, map_partitions, reduce_partitions, zip_partitions


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def _check_point(point, n: int) -> np.ndarray:
    x = np.asarray(point, dtype=np.float64)
    if x.shape[-1] != n:
        raise ShapeError(f"expected {n} features, got {x.shape[-1]}")
    return x


@dataclass(frozen=True, eq=False)
class RDModel:
    """Per-feature cut points; ``thresholds`` has shape ``(T, cuts - 1)``."""

    cuts: int
    thresholds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "thresholds", _readonly(self.thresholds))

    @property
    def arity(self) -> int:
        return self.thresholds.shape[0]

    def to_dict(self) -> dict:
        return {"cuts": self.cuts, "thresholds": self.thresholds.tolist()}

    @classmethod
    def from_dict(cls, d) -> "RDModel":
        th = np.asarray(d["thresholds"], dtype=np.float64).reshape(-1, int(d["cuts"]) - 1)
        return cls(int(d["cuts"]), th)


def fit_rd(data: PTable, cuts: int, rng: np.random.Generator) -> RDModel:
    """Pick ``cuts - 1`` distinct records at random; their sorted feature
    values become the thresholds of every feature."""
    if cuts < 2:
        raise ParameterError(f"cuts must be >= 2, got {cuts}")
    data = as_labeled(data)
    n = data.count()
    if n == 0:
        raise ParameterError("cannot fit random discretization on an empty table")
    if cuts - 1 > n:
        raise ParameterError(f"need at least {cuts - 1} records to draw thresholds, got {n}")
    picks = np.sort(rng.choice(n, size=cuts - 1, replace=False))
    rows = np.vstack([data.record(int(i)).features for i in picks])
    return RDModel(cuts, np.sort(rows, axis=0).T)


def apply_rd_block(model: RDModel, X: np.ndarray) -> np.ndarray:
    """Bin index per value: the number of thresholds ``<=`` the value."""
    X = _check_point(X, model.arity)
    out = np.empty(X.shape, dtype=np.float64)
    for j in range(model.arity):
        out[..., j] = np.searchsorted(model.thresholds[j], X[..., j], side="right")
    return out


def apply_rd(model: RDModel, point) -> np.ndarray:
    return apply_rd_block(model, np.asarray(point, dtype=np.float64)).astype(np.int64)


def transform_rd(model: RDModel, data: PTable) -> PTable:
    return map_partitions(as_labeled(data),
                          lambda b: LabeledBlock(apply_rd_block(model, b.features), b.labels))


@dataclass(frozen=True, eq=False)
class PCAModel:
    """Mean vector, ``(k, T)`` orthonormal component rows and their variances."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def __post_init__(self):
        for name in ("mean", "components", "explained_variance"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def arity(self) -> int:
        return self.mean.shape[0]

    def explained_variance_ratio(self, total_variance: float) -> np.ndarray:
        return self.explained_variance / total_variance

    def to_dict(self) -> dict:
        return {"k": self.k, "mean": self.mean.tolist(), "components": self.components.tolist(),
                "explained_variance": self.explained_variance.tolist()}

    @classmethod
    def from_dict(cls, d) -> "PCAModel":
        mean = np.asarray(d["mean"], dtype=np.float64)
        comps = np.asarray(d["components"], dtype=np.float64).reshape(int(d["k"]), mean.shape[0])
        return cls(mean, comps, np.asarray(d["explained_variance"], dtype=np.float64))


def _sum_rows(block):
    return len(block), block.features.sum(axis=0)


def covariance(data: PTable) -> tuple[np.ndarray, np.ndarray, int]:
    """Mean and sample covariance (``n - 1`` denominator) in two passes.

    Both passes sum per partition and fold the partial sums in partition
    order.
    """
    data = as_labeled(data)
    n, total = reduce_partitions(data, _sum_rows, lambda a, b: (a[0] + b[0], a[1] + b[1]))
    if n < 2:
        raise ParameterError(f"covariance needs at least 2 records, got {n}")
    mean = total / n

    def scatter(block):
        d = block.features - mean
        return d.T @ d

    return mean, reduce_partitions(data, scatter, np.add) / (n - 1), n


def sign_normalize(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry is positive."""
    vectors = np.array(vectors, dtype=np.float64)
    lead = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(len(vectors)), lead])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def fit_pca(data: PTable, k: int) -> PCAModel:
    """Top-``k`` eigenvectors of the sample covariance, by descending eigenvalue."""
    data = as_labeled(data)
    T = arity(data)
    if not 1 <= k <= T - 1:
        raise ParameterError(f"component count must be in [1, {T - 1}], got {k}")
    mean, cov, _ = covariance(data)
    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(-values, kind="stable")[:k]
    return PCAModel(mean, sign_normalize(vectors[:, order].T), np.maximum(values[order], 0.0))


def apply_pca_block(model: PCAModel, X: np.ndarray) -> np.ndarray:
    X = _check_point(X, model.arity)
    return (X - model.mean) @ model.components.T


def apply_pca(model: PCAModel, point) -> np.ndarray:
    return apply_pca_block(model, point)


def transform_pca(model: PCAModel, data: PTable) -> PTable:
    return map_partitions(as_labeled(data),
                          lambda b: LabeledBlock(apply_pca_block(model, b.features), b.labels))


def join_blocks(rd: LabeledBlock, pca: LabeledBlock) -> LabeledBlock:
    if not np.array_equal(rd.labels, pca.labels):
        raise ShapeError("joined blocks carry different labels")
    return LabeledBlock(np.hstack([rd.features, pca.features]), rd.labels)


def join_features(rd: PTable, pca: PTable) -> PTable:
    """Concatenate RD bins and PCA projections record by record."""
    return zip_partitions(as_labeled(rd), as_labeled(pca), join_blocks)


def rd_pca_features(rd: RDModel, pca: PCAModel, X: np.ndarray) -> np.ndarray:
    """Joined feature matrix for raw inputs, as used at prediction time."""
    return np.hstack([apply_rd_block(rd, X), apply_pca_block(pca, X)])
