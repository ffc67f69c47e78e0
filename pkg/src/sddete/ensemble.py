"""
The smart-data decision-tree ensemble.

Training repeats ``iter`` times: random discretization and a PCA projection
with a random component count are fitted on the input and joined
feature-wise; the joined data is clustered with bisecting k-means (random
cluster count), every cluster is oversampled to local balance, and a CART
tree is grown on the result.  Only the discretization thresholds, the PCA
projection and the tree are kept.

Prediction replays the stored discretization and projection, sums the leaf
class distributions of all trees and returns the arg-max class.
"""

from __future__ import annotations

import functools
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import balance, cluster, preprocess
from .data import arity, as_labeled, class_counts
from .errors import BalanceError, ParameterError, PersistenceError, ShapeError
from .ptable import PTable, map_partitions, run_tasks
from .rng import stream
from .tree import NUM_CLASSES, TreeModel, TreeParams, fit_tree

FORMAT_VERSION = 1


@dataclass(frozen=True)
class DeTEParams:
    iter: int = 10
    cuts: int = 5
    max_clust: int = 10
    tree_depth: int = 10
    seed: int = 0
    max_bins: int = 32
    cluster_max_iter: int = cluster.DEFAULT_MAX_ITER
    # False swaps cluster-wise oversampling for plain ROS on the joined data
    cluster_balancing: bool = True
    binning: str = "node"

    def __post_init__(self):
        for name, low in (("iter", 1), ("cuts", 2), ("max_clust", 1), ("tree_depth", 1),
                          ("max_bins", 2), ("cluster_max_iter", 1)):
            if getattr(self, name) < low:
                raise ParameterError(f"{name} must be >= {low}, got {getattr(self, name)}")


@dataclass(frozen=True, eq=False)
class IterationModel:
    rd: preprocess.RDModel
    pca: preprocess.PCAModel
    tree: TreeModel

    def features(self, X: np.ndarray) -> np.ndarray:
        return preprocess.rd_pca_features(self.rd, self.pca, X)

    def scores(self, X: np.ndarray) -> np.ndarray:
        return self.tree.predict_proba(self.features(X))


@dataclass(frozen=True, eq=False)
class DeTEModel:
    iterations: tuple
    num_classes: int = NUM_CLASSES
    format_version: int = FORMAT_VERSION

    @property
    def iter(self) -> int:
        return len(self.iterations)

    @property
    def arity(self) -> int:
        return self.iterations[0].rd.arity

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "iter": self.iter,
            "num_classes": self.num_classes,
            "iterations": [{"rd": it.rd.to_dict(), "pca": it.pca.to_dict(), "tree": it.tree.to_dict()}
                           for it in self.iterations],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), allow_nan=False)


def _fit_iteration(data: PTable, params: DeTEParams, T: int, i: int) -> IterationModel:
    seed = params.seed
    rd = preprocess.fit_rd(data, params.cuts, stream(seed, i, "rd"))
    k = int(stream(seed, i, "k").integers(1, T))
    pca = preprocess.fit_pca(data, k)
    joined = preprocess.join_features(preprocess.transform_rd(rd, data),
                                      preprocess.transform_pca(pca, data))
    if params.cluster_balancing:
        n_clusters = int(stream(seed, i, "c").integers(1, params.max_clust + 1))
        cm = cluster.fit_bisecting_kmeans(joined, n_clusters, stream(seed, i, "kmeans"),
                                          max_iter=params.cluster_max_iter)
        smart = balance.cros(joined, cluster.assign_table(cm, joined), stream(seed, i, "ros"))
    else:
        smart = balance.ros(joined, stream(seed, i, "ros"))
    tree = fit_tree(smart, TreeParams(max_depth=params.tree_depth, max_bins=params.max_bins,
                                      binning=params.binning))
    return IterationModel(rd, pca, tree)


def fit_sd_dete(data: PTable, params: DeTEParams = DeTEParams(), workers: int | None = None) -> DeTEModel:
    """Train the ensemble.

    Every random choice of iteration ``i`` comes from a stream keyed by
    ``(params.seed, i, purpose)``, so iterations are independent and may be
    trained concurrently; the result does not depend on ``workers``.
    """
    data = as_labeled(data)
    T = arity(data)
    if T < 2:
        raise ParameterError(f"need at least 2 features, got {T}")
    counts = class_counts(data)
    if counts.min() == 0:
        raise BalanceError(f"both classes must be present, got counts {counts.tolist()}")
    tasks = [functools.partial(_fit_iteration, data, params, T, i) for i in range(params.iter)]
    return DeTEModel(tuple(run_tasks(tasks, workers)))


def _matrix(X, model: DeTEModel) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.arity:
        raise ShapeError(f"expected rows of {model.arity} features, got shape {X.shape}")
    return X


def predict_scores_block(model: DeTEModel, X) -> np.ndarray:
    """Summed per-class leaf distributions, shape ``(n, 2)``, rows sum to ``iter``."""
    X = _matrix(X, model)
    total = np.zeros((len(X), model.num_classes))
    for it in model.iterations:
        total += it.scores(X)
    return total


def predict_block(model: DeTEModel, X) -> np.ndarray:
    return np.argmax(predict_scores_block(model, X), axis=1)


def predict_scores(model: DeTEModel, point) -> np.ndarray:
    x = np.asarray(point, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"expected one feature vector, got shape {x.shape}")
    return predict_scores_block(model, x[None, :])[0]


def predict(model: DeTEModel, point) -> int:
    """Arg-max of the summed scores; ties go to the lower class index."""
    return int(np.argmax(predict_scores(model, point)))


def predict_table(model: DeTEModel, data: PTable, workers: int | None = None) -> PTable:
    """Scores for every record of a labelled table, partitioned like ``data``."""
    return map_partitions(as_labeled(data), lambda b: predict_scores_block(model, b.features),
                          workers=workers)


# -- persistence -----------------------------------------------------------------

def save_model(model: DeTEModel, path) -> None:
    path = Path(path)
    text = model.dumps()
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def model_from_dict(doc) -> DeTEModel:
    if not isinstance(doc, dict):
        raise PersistenceError("model document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise PersistenceError(f"unsupported model format_version {version!r}")
    try:
        iterations = tuple(
            IterationModel(preprocess.RDModel.from_dict(it["rd"]),
                           preprocess.PCAModel.from_dict(it["pca"]),
                           TreeModel.from_dict(it["tree"]))
            for it in doc["iterations"])
        n_iter = int(doc["iter"])
        num_classes = int(doc["num_classes"])
    except (KeyError, TypeError, ValueError) as exc:
        raise PersistenceError(f"malformed model document: {exc}") from exc
    if n_iter != len(iterations) or n_iter < 1:
        raise PersistenceError(f"iter={n_iter} but {len(iterations)} iterations stored")
    if num_classes != NUM_CLASSES:
        raise PersistenceError(f"only binary models are supported, got num_classes={num_classes}")
    T = iterations[0].rd.arity
    for it in iterations:
        if it.rd.arity != T or it.pca.arity != T:
            raise PersistenceError("iterations disagree on the input arity")
        if it.tree.arity != T + it.pca.k:
            raise PersistenceError("tree arity does not match the joined feature width")
    return DeTEModel(iterations, num_classes, version)


def loads_model(text: str) -> DeTEModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PersistenceError(f"model file is not valid JSON: {exc}") from exc
    return model_from_dict(doc)


def load_model(path) -> DeTEModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise PersistenceError(f"cannot read model file: {exc}") from exc
    return loads_model(text)


def summary(model: DeTEModel) -> dict:
    return {
        "format_version": model.format_version,
        "iter": model.iter,
        "arity": model.arity,
        "cuts": model.iterations[0].rd.cuts,
        "pca_components": [it.pca.k for it in model.iterations],
        "tree_nodes": [it.tree.node_count for it in model.iterations],
        "tree_depths": [it.tree.depth for it in model.iterations],
    }
