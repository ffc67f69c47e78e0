"""
Cross-validated benchmark grid: (dataset, method, sampler) cells evaluated
over stratified folds.  Samplers only ever touch the training part of a fold.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, balance, data, ensemble, metrics, tree
from .errors import ConfigError, SDDeTEError
from .ptable import PTable, run_tasks
from .rng import stream

METHODS = ("dt", "rf", "sd_dete")
SAMPLERS = ("none", "rus", "ros", "smote", "cros-ablation")
VALID_PAIRS = {
    "dt": ("none", "rus", "ros", "smote"),
    "rf": ("none", "rus", "ros", "smote"),
    # balancing is internal; the ablation swaps cluster-wise ROS for plain ROS
    "sd_dete": ("none", "cros-ablation"),
}
METRIC_COLUMNS = ("gm", "auc_balanced", "auroc", "accuracy")
TIMING_COLUMNS = ("train_seconds", "predict_seconds")
REPORT_COLUMNS = ("dataset", "method", "sampler", "fold") + METRIC_COLUMNS + TIMING_COLUMNS

DEFAULT_PARAMS = {
    "dt": {"max_depth": 5, "max_bins": 32},
    "rf": {"n_trees": 200, "max_depth": 4, "max_bins": 32},
    "smote": {"k": 5},
    "sd_dete": {"iter": 10, "cuts": 5, "max_clust": 10, "tree_depth": 10},
}
SYNTHETIC_KINDS = ("two_gaussian", "clustered_minority")


@dataclass
class ExperimentConfig:
    datasets: list
    methods: list = field(default_factory=lambda: list(METHODS))
    samplers: list = field(default_factory=lambda: list(SAMPLERS))
    params: dict = field(default_factory=dict)
    folds: int = 5
    seed: int = 0
    output: str | None = None
    report_format: str = "csv"
    workers: int = 1
    parallel_cells: bool = False

    def merged_params(self) -> dict:
        out = copy.deepcopy(DEFAULT_PARAMS)
        for name, overrides in self.params.items():
            out[name].update(overrides)
        return out

    def cells(self) -> list[tuple[str, str]]:
        return [(m, s) for m in self.methods for s in self.samplers if s in VALID_PAIRS[m]]

    def to_dict(self) -> dict:
        return {"datasets": self.datasets, "methods": self.methods, "samplers": self.samplers,
                "params": self.merged_params(), "folds": self.folds, "seed": self.seed,
                "report_format": self.report_format}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config: expected a JSON object")
        known = set(cls.__dataclass_fields__)
        for key in doc:
            if key not in known:
                raise ConfigError(f"{key}: unknown config field")
        if "datasets" not in doc:
            raise ConfigError("datasets: required")
        cfg = cls(**doc)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.datasets, list) or not self.datasets:
            raise ConfigError("datasets: must be a non-empty list")
        for i, ds in enumerate(self.datasets):
            _validate_dataset(ds, f"datasets[{i}]")
        for i, m in enumerate(self.methods):
            if m not in METHODS:
                raise ConfigError(f"methods[{i}]: unknown method {m!r}, expected one of {METHODS}")
        for i, s in enumerate(self.samplers):
            if s not in SAMPLERS:
                raise ConfigError(f"samplers[{i}]: unknown sampler {s!r}, expected one of {SAMPLERS}")
        for name, overrides in self.params.items():
            if name not in DEFAULT_PARAMS:
                raise ConfigError(f"params.{name}: unknown parameter group")
            if not isinstance(overrides, dict):
                raise ConfigError(f"params.{name}: expected an object")
            for key in overrides:
                if key not in DEFAULT_PARAMS[name]:
                    raise ConfigError(f"params.{name}.{key}: unknown parameter")
        if not isinstance(self.folds, int) or self.folds < 2:
            raise ConfigError(f"folds: must be an integer >= 2, got {self.folds!r}")
        if self.report_format not in ("csv", "json"):
            raise ConfigError(f"report_format: must be 'csv' or 'json', got {self.report_format!r}")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError(f"workers: must be an integer >= 1, got {self.workers!r}")
        if not self.cells():
            raise ConfigError("methods/samplers: no valid (method, sampler) pair in the grid")


def _validate_dataset(ds, where):
    if not isinstance(ds, dict):
        raise ConfigError(f"{where}: expected an object")
    if ("path" in ds) == ("synthetic" in ds):
        raise ConfigError(f"{where}: give exactly one of 'path' or 'synthetic'")
    if "synthetic" in ds:
        syn = ds["synthetic"]
        if not isinstance(syn, dict):
            raise ConfigError(f"{where}.synthetic: expected an object")
        kind = syn.get("kind", "two_gaussian")
        if kind not in SYNTHETIC_KINDS:
            raise ConfigError(f"{where}.synthetic.kind: unknown kind {kind!r}")
        for key in ("n", "ir", "dims", "separation"):
            if key not in syn:
                raise ConfigError(f"{where}.synthetic.{key}: required")


def dataset_name(ds: dict) -> str:
    if "name" in ds:
        return str(ds["name"])
    if "path" in ds:
        return Path(ds["path"]).stem
    syn = ds["synthetic"]
    return f"{syn.get('kind', 'two_gaussian')}_n{syn['n']}_ir{syn['ir']}"


def load_dataset(ds: dict) -> PTable:
    parts = ds.get("partitions", data.DEFAULT_PARTITIONS)
    if "path" in ds:
        fmt = ds.get("format", "libsvm" if str(ds["path"]).endswith((".libsvm", ".svm")) else "csv")
        if fmt == "libsvm":
            return data.load_libsvm(ds["path"], positive_label=ds.get("positive_label"), partitions=parts)
        return data.load_csv(ds["path"], label_column=ds.get("label_column", -1),
                             positive_label=ds.get("positive_label"), partitions=parts)
    syn = dict(ds["synthetic"])
    kind = syn.pop("kind", "two_gaussian")
    syn.setdefault("seed", 0)
    if kind == "two_gaussian":
        return data.synth_two_gaussian(partitions=parts, **syn)
    return data.synth_clustered_minority(partitions=parts, **syn)


# -- methods -------------------------------------------------------------------

class _Fitted:
    def __init__(self, predict, positive_scores):
        self.predict = predict
        self.positive_scores = positive_scores


def fit_method(method: str, sampler: str, train: PTable, params: dict, rng: np.random.Generator,
               workers: int = 1) -> _Fitted:
    """Resample ``train`` (if requested) and fit ``method`` on it."""
    if method == "sd_dete":
        p = params["sd_dete"]
        model = ensemble.fit_sd_dete(train, ensemble.DeTEParams(
            iter=p["iter"], cuts=p["cuts"], max_clust=p["max_clust"], tree_depth=p["tree_depth"],
            seed=int(rng.integers(0, 2**31 - 1)), cluster_balancing=sampler != "cros-ablation"),
            workers=workers)

        def scores(X):
            return ensemble.predict_scores_block(model, X)[:, 1] / model.iter
        return _Fitted(lambda X: ensemble.predict_block(model, X), scores)

    if sampler == "smote":
        train = balance.smote(train, k=params["smote"]["k"], rng=rng)
    elif sampler in ("ros", "rus"):
        train = balance.SAMPLERS[sampler](train, rng)
    if method == "dt":
        p = params["dt"]
        model = tree.fit_tree(train, tree.TreeParams(max_depth=p["max_depth"], max_bins=p["max_bins"]))
    else:
        p = params["rf"]
        model = tree.fit_random_forest(train, p["n_trees"],
                                       tree.TreeParams(max_depth=p["max_depth"], max_bins=p["max_bins"]),
                                       rng=rng, workers=workers)
    return _Fitted(model.predict, lambda X: model.predict_proba(X)[:, 1])


# -- grid ----------------------------------------------------------------------

@dataclass
class CellResult:
    dataset: str
    method: str
    sampler: str
    folds: list = field(default_factory=list)
    error: str | None = None

    def mean(self) -> dict:
        cols = METRIC_COLUMNS + TIMING_COLUMNS
        return {c: math.fsum(r[c] for r in self.folds) / len(self.folds) for c in cols}

    def rows(self) -> list[dict]:
        if self.error is not None:
            return []
        head = {"dataset": self.dataset, "method": self.method, "sampler": self.sampler}
        out = [{**head, **r} for r in self.folds]
        out.append({**head, "fold": "mean", **self.mean()})
        return out


@dataclass
class Report:
    config: dict
    cells: list

    def rows(self) -> list[dict]:
        return [r for c in self.cells for r in c.rows()]

    def all_failed(self) -> bool:
        return all(c.error is not None for c in self.cells)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows():
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in REPORT_COLUMNS])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "tool": "sddete",
            "version": __version__,
            "config": self.config,
            "cells": [{"dataset": c.dataset, "method": c.method, "sampler": c.sampler,
                       "error": c.error, "folds": c.folds,
                       "mean": None if c.error else c.mean()} for c in self.cells],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)

    def render(self, fmt: str) -> str:
        return self.to_csv() if fmt == "csv" else self.to_json()


def _run_cell(name, table, folds, method, sampler, params, seed, workers) -> CellResult:
    cell = CellResult(name, method, sampler)
    try:
        for f in range(folds.k):
            train, test = folds.split(table, f)
            expected_test = int(np.sum(folds.assignments == f))
            rng = stream(seed, "cell", name, method, sampler, f)
            t0 = time.perf_counter()
            fitted = fit_method(method, sampler, train, params, rng, workers)
            t1 = time.perf_counter()
            X, y = data.to_arrays(test)
            pred = fitted.predict(X)
            t2 = time.perf_counter()
            if test.count() != expected_test or len(pred) != expected_test:
                raise AssertionError(f"test fold {f} changed size: {expected_test} -> {len(pred)}")
            row = metrics.evaluate(pred, y, fitted.positive_scores(X))
            row.update(fold=f, train_seconds=t1 - t0, predict_seconds=t2 - t1)
            cell.folds.append(row)
    except (SDDeTEError, ValueError, AssertionError, FloatingPointError) as exc:
        cell.error = f"{type(exc).__name__}: {exc}"
        cell.folds = []
    return cell


def run_cv(config: ExperimentConfig) -> Report:
    """Evaluate every (dataset, method, sampler) cell over stratified folds."""
    config.validate()
    params = config.merged_params()
    cells = []
    for ds in config.datasets:
        name = dataset_name(ds)
        table = load_dataset(ds)
        folds = data.stratified_kfold(table, config.folds, config.seed)
        tasks = [
            (lambda m=m, s=s: _run_cell(name, table, folds, m, s, params, config.seed,
                                        1 if config.parallel_cells else config.workers))
            for m, s in config.cells()
        ]
        cells.extend(run_tasks(tasks, config.workers if config.parallel_cells else 1))
    return Report(config.to_dict(), cells)
