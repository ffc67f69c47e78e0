"""
Labelled datasets: record types, CSV/LibSVM ingestion, class statistics,
stratified folds and synthetic imbalanced generators.

Labelled tables are :class:`~sddete.ptable.PTable` objects whose partitions
are :class:`LabeledBlock` instances, i.e. a dense feature matrix plus a label
vector.  Indexing a block yields :class:`LabeledPoint` records, so the generic
record-level primitives work on them unchanged, while pipeline stages can use
the arrays directly.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestionError, ParameterError, SchemaError, SplitError
from .ptable import PTable, map_partitions, reduce_partitions

DEFAULT_PARTITIONS = 8
FOLD_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class LabeledPoint:
    features: np.ndarray
    label: int

    def __eq__(self, other):
        if not isinstance(other, LabeledPoint):
            return NotImplemented
        return self.label == other.label and np.array_equal(self.features, other.features)

    __hash__ = None

    def __repr__(self):
        return f"LabeledPoint({self.features.tolist()}, {self.label})"


def _readonly(a):
    a = a.view()
    a.flags.writeable = False
    return a


class LabeledBlock(Sequence):
    """A partition of labelled records stored column-wise.

    ``features`` is an ``(m, T)`` float64 matrix and ``labels`` an ``(m,)``
    integer vector; both are read-only.
    """

    __slots__ = ("features", "labels")

    def __init__(self, features, labels):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if features.ndim != 2:
            raise ParameterError(f"features must be 2-D, got shape {features.shape}")
        if labels.shape != (features.shape[0],):
            raise ParameterError(
                f"{features.shape[0]} feature rows but labels of shape {labels.shape}")
        self.features = _readonly(features)
        self.labels = _readonly(labels)

    @property
    def arity(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.labels.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return LabeledBlock(self.features[i], self.labels[i])
        return LabeledPoint(self.features[i], int(self.labels[i]))

    def __repr__(self):
        return f"LabeledBlock(n={len(self)}, arity={self.arity})"

    def take(self, idx) -> "LabeledBlock":
        return LabeledBlock(self.features[idx], self.labels[idx])

    @classmethod
    def from_points(cls, points, arity: int | None = None) -> "LabeledBlock":
        points = list(points)
        if not points:
            return cls(np.empty((0, arity or 0)), np.empty(0, dtype=np.int64))
        return cls(np.vstack([np.asarray(p.features, dtype=np.float64) for p in points]),
                   [p.label for p in points])

    @classmethod
    def concat(cls, blocks) -> "LabeledBlock":
        blocks = list(blocks)
        arity = max((b.arity for b in blocks), default=0)
        blocks = [b for b in blocks if len(b)] or [cls(np.empty((0, arity)), [])]
        return cls(np.concatenate([b.features for b in blocks]),
                   np.concatenate([b.labels for b in blocks]))

    @classmethod
    def concat_take(cls, blocks, indices) -> "LabeledBlock":
        return cls.concat(blocks).take(indices)


def as_block(part) -> LabeledBlock:
    if isinstance(part, LabeledBlock):
        return part
    return LabeledBlock.from_points(part)


def as_labeled(t: PTable) -> PTable:
    """Ensure every partition of ``t`` is a :class:`LabeledBlock`."""
    if all(isinstance(p, LabeledBlock) for p in t.partitions):
        return t
    arity = next((len(p[0].features) for p in t.partitions if len(p)), 0)
    return PTable(p if isinstance(p, LabeledBlock) else LabeledBlock.from_points(p, arity)
                  for p in t.partitions)


def table_from_arrays(X, y, partitions: int = DEFAULT_PARTITIONS) -> PTable:
    """Split ``(X, y)`` into contiguous partitions, preserving row order."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if partitions < 1:
        raise ParameterError(f"partition count must be >= 1, got {partitions}")
    bounds = np.linspace(0, len(y), partitions + 1).round().astype(int)
    return PTable(LabeledBlock(X[a:b], y[a:b]) for a, b in zip(bounds[:-1], bounds[1:]))


def to_arrays(t: PTable) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate a labelled table into ``(X, y)`` in global order."""
    block = LabeledBlock.concat(as_labeled(t).partitions)
    return block.features, block.labels


def arity(t: PTable) -> int:
    return max(p.arity for p in as_labeled(t).partitions)


# -- ingestion -----------------------------------------------------------------

def _label_key(value: str):
    value = value.strip()
    try:
        return float(value)
    except ValueError:
        return value


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, label_column=-1, positive_label=None, header: bool | None = None,
             partitions: int = DEFAULT_PARTITIONS) -> PTable:
    """Read a comma-separated file into a labelled table.

    Parameters
    ----------
    path : str or Path
    label_column : int or str
        Column index (negative indices allowed) or header name of the label.
    positive_label : optional
        Label value mapped to class 1; every other value maps to 0.  When
        omitted, the less frequent label value becomes class 1.
    header : bool, optional
        Whether the first row is a header.  Auto-detected when ``None``: the
        first row is a header if any of its feature cells is non-numeric.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        return table_from_arrays(np.empty((0, 0)), np.empty(0), partitions)

    width = len(rows[0])
    names = None
    if isinstance(label_column, str):
        if header is False:
            raise SchemaError("label column given by name but header=False")
        header = True
    if header is None:
        col = label_column % width if isinstance(label_column, int) else None
        header = any(not _is_number(c) for j, c in enumerate(rows[0]) if j != col)
    if header:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if isinstance(label_column, str):
        if label_column not in names:
            raise SchemaError(f"label column {label_column!r} not in header {names}")
        col = names.index(label_column)
    else:
        if not -width <= label_column < width:
            raise SchemaError(f"label column {label_column} out of range for {width} columns")
        col = label_column % width

    feat_cols = [j for j in range(width) if j != col]
    X = np.empty((len(rows), len(feat_cols)))
    raw_labels = []
    first_line = 2 if header else 1
    for i, row in enumerate(rows):
        line = first_line + i
        if len(row) != width:
            raise IngestionError(f"row {line}: expected {width} columns, found {len(row)}",
                                 row=line)
        for out_j, j in enumerate(feat_cols):
            try:
                v = float(row[j])
            except ValueError:
                label = names[j] if names else j
                raise IngestionError(
                    f"row {line}, column {label!r}: cannot parse {row[j]!r} as a number",
                    row=line, column=label) from None
            if not math.isfinite(v):
                label = names[j] if names else j
                raise IngestionError(f"row {line}, column {label!r}: non-finite value {row[j]!r}",
                                     row=line, column=label)
            X[i, out_j] = v
        raw_labels.append(_label_key(row[col]))

    y = _binarize(raw_labels, positive_label)
    return table_from_arrays(X, y, partitions)


def _binarize(raw_labels, positive_label) -> np.ndarray:
    values, inverse, counts = np.unique(np.array(raw_labels, dtype=object).astype(str),
                                        return_inverse=True, return_counts=True)
    keys = {}
    for v in raw_labels:
        keys.setdefault(str(v), v)
    if len(values) > 2:
        raise SchemaError(
            f"found {len(values)} distinct labels {list(values)[:10]}; only binary data is supported")
    if not raw_labels:
        return np.empty(0, dtype=np.int64)
    if positive_label is None:
        if len(values) == 1:
            return np.zeros(len(raw_labels), dtype=np.int64)
        pos = int(np.argmin(counts)) if counts[0] != counts[1] else 1
        return (inverse == pos).astype(np.int64)
    target = _label_key(str(positive_label))
    return np.array([v == target for v in raw_labels], dtype=np.int64)


def load_libsvm(path, arity: int | None = None, positive_label=None,
                partitions: int = DEFAULT_PARTITIONS) -> PTable:
    """Read LibSVM ``label idx:value ...`` lines, densifying the features."""
    labels, entries = [], []
    max_idx = 0
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            labels.append(_label_key(parts[0]))
            row = {}
            for tok in parts[1:]:
                try:
                    k, v = tok.split(":", 1)
                    k, v = int(k), float(v)
                except ValueError:
                    raise IngestionError(f"line {line_no}: bad entry {tok!r}",
                                         row=line_no, column=tok) from None
                if k < 1 or not math.isfinite(v):
                    raise IngestionError(f"line {line_no}: bad entry {tok!r}",
                                         row=line_no, column=tok)
                row[k] = v
                max_idx = max(max_idx, k)
            entries.append(row)
    width = arity if arity is not None else max_idx
    X = np.zeros((len(entries), width))
    for i, row in enumerate(entries):
        for k, v in row.items():
            if k > width:
                raise SchemaError(f"feature index {k} exceeds arity {width}")
            X[i, k - 1] = v
    return table_from_arrays(X, _binarize(labels, positive_label), partitions)


def save_csv(t: PTable, path, header: bool = True) -> None:
    """Write a labelled table as CSV; floats use shortest round-trip repr."""
    X, y = to_arrays(t)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"f{j}" for j in range(X.shape[1])] + ["label"])
        for row, label in zip(X.tolist(), y.tolist()):
            w.writerow([repr(v) for v in row] + [label])


# -- class statistics ----------------------------------------------------------

@dataclass(frozen=True)
class ClassStats:
    count_per_class: dict
    majority: int
    minority: int
    ir: float
    single_class: bool = False

    @property
    def total(self) -> int:
        return sum(self.count_per_class.values())


def _label_counts(part) -> np.ndarray:
    return np.bincount(as_block(part).labels, minlength=2)[:2]


def class_counts(t: PTable) -> np.ndarray:
    return reduce_partitions(t, _label_counts, np.add, workers=1)


def stats_from_counts(counts) -> ClassStats:
    c0, c1 = int(counts[0]), int(counts[1])
    if c0 + c1 == 0:
        raise ParameterError("class statistics need at least one record")
    majority, minority = (0, 1) if c0 >= c1 else (1, 0)
    if min(c0, c1) == 0:
        return ClassStats({0: c0, 1: c1}, majority, minority, math.inf, single_class=True)
    return ClassStats({0: c0, 1: c1}, majority, minority, max(c0, c1) / min(c0, c1))


def class_stats(data: PTable) -> ClassStats:
    """Per-class counts and imbalance ratio in one pass over the partitions."""
    return stats_from_counts(class_counts(data))


# -- folds ---------------------------------------------------------------------

@dataclass(frozen=True)
class FoldSpec:
    k: int
    assignments: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "assignments", _readonly(np.asarray(self.assignments, dtype=np.int64)))

    def __eq__(self, other):
        return (isinstance(other, FoldSpec) and self.k == other.k
                and np.array_equal(self.assignments, other.assignments))

    def _masked(self, data: PTable, keep) -> PTable:
        data = as_labeled(data)
        if data.count() != len(self.assignments):
            raise SplitError(f"fold spec covers {len(self.assignments)} records, table has {data.count()}")
        offsets = np.cumsum([0] + data.partition_sizes())
        parts = []
        for p, block in enumerate(data.partitions):
            a = self.assignments[offsets[p]:offsets[p + 1]]
            parts.append(block.take(np.flatnonzero(keep(a))))
        return PTable(parts)

    def split(self, data: PTable, fold: int) -> tuple[PTable, PTable]:
        """Return ``(train, test)`` for fold ``fold``; layouts follow ``data``."""
        if not 0 <= fold < self.k:
            raise ParameterError(f"fold must be in [0, {self.k}), got {fold}")
        return (self._masked(data, lambda a: a != fold),
                self._masked(data, lambda a: a == fold))

    def to_json(self) -> str:
        return json.dumps({"version": FOLD_FORMAT_VERSION, "k": self.k,
                           "assignments": self.assignments.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "FoldSpec":
        doc = json.loads(text)
        if doc.get("version") != FOLD_FORMAT_VERSION:
            raise SchemaError(f"unsupported fold spec version {doc.get('version')!r}")
        return cls(int(doc["k"]), doc["assignments"])


def stratified_kfold(data: PTable, k: int = 5, seed: int = 0) -> FoldSpec:
    """Assign every record to one of ``k`` folds, stratified by class.

    Within each class a seeded permutation is dealt round-robin over the
    folds, so per-class fold counts differ by at most one.
    """
    if k < 2:
        raise ParameterError(f"k-fold needs k >= 2, got {k}")
    _, y = to_arrays(data)
    rng = np.random.default_rng(seed)
    assignments = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in (0, 1):
        idx = np.flatnonzero(y == c)
        if len(idx) == 0:
            continue
        if len(idx) < k:
            raise SplitError(f"class {c} has {len(idx)} records, fewer than k={k}")
        assignments[rng.permutation(idx)] = (np.arange(len(idx)) + offset) % k
        offset += len(idx)
    return FoldSpec(k, assignments)


# -- synthetic data ------------------------------------------------------------

def minority_size(n: int, ir: float) -> int:
    return int(math.floor(n / (1.0 + ir) + 0.5))


def _check_synth(n, ir, dims):
    if n < 2:
        raise ParameterError(f"n must be >= 2, got {n}")
    if ir < 1:
        raise ParameterError(f"ir must be >= 1, got {ir}")
    if dims < 1:
        raise ParameterError(f"dims must be >= 1, got {dims}")


def synth_two_gaussian(n: int, ir: float, dims: int, separation: float, seed: int,
                       partitions: int = DEFAULT_PARTITIONS) -> PTable:
    """Two unit-variance spherical Gaussians; the minority mean is shifted by
    ``separation`` along the first axis.  Rows are shuffled.
    """
    _check_synth(n, ir, dims)
    rng = np.random.default_rng(seed)
    n_min = minority_size(n, ir)
    X = rng.standard_normal((n, dims))
    y = np.zeros(n, dtype=np.int64)
    y[:n_min] = 1
    X[:n_min, 0] += separation
    perm = rng.permutation(n)
    return table_from_arrays(X[perm], y[perm], partitions)


def synth_clustered_minority(n: int, ir: float, dims: int, separation: float, seed: int,
                             subclusters: int = 3, spread: float = 0.5,
                             partitions: int = DEFAULT_PARTITIONS) -> PTable:
    """Majority from a unit Gaussian at the origin; minority split evenly over
    ``subclusters`` tighter Gaussians (std ``spread``) whose centres sit at
    distance ``separation`` from the origin on distinct coordinate axes, with
    alternating sign.
    """
    _check_synth(n, ir, dims)
    if subclusters < 1:
        raise ParameterError(f"subclusters must be >= 1, got {subclusters}")
    rng = np.random.default_rng(seed)
    n_min = minority_size(n, ir)
    X = rng.standard_normal((n, dims))
    y = np.zeros(n, dtype=np.int64)
    y[:n_min] = 1
    which = np.arange(n_min) % subclusters
    X[:n_min] *= spread
    for s in range(subclusters):
        axis = s % dims
        sign = 1.0 if (s // dims) % 2 == 0 else -1.0
        X[:n_min][which == s, axis] += sign * separation
    perm = rng.permutation(n)
    return table_from_arrays(X[perm], y[perm], partitions)


def filter_labeled(t: PTable, mask_fn) -> PTable:
    """Keep records whose per-block boolean mask ``mask_fn(block)`` is set."""
    return map_partitions(as_labeled(t), lambda b: b.take(np.flatnonzero(mask_fn(b))))
