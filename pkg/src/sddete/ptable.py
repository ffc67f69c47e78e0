"""
Partitioned in-memory collections.

A :class:`PTable` is an ordered tuple of partitions, each partition being an
immutable sequence of records.  The primitives here (``pmap``, ``punion``,
``pzip``, ``pfilter``) mirror the RDD operations the ensemble is written
against.  Every operation produces a new table; nothing is mutated in place.

Partitions may be plain tuples of Python objects or any sequence type that
supports ``len`` and integer indexing (the labelled-data blocks in
:mod:`sddete.data` are the main example).  Block-level variants
(``map_partitions``, ``zip_partitions``) let vectorised code operate on a
whole partition at once.

Execution
---------
Partition tasks run on a thread pool whose size is taken from the ``workers``
argument or, when omitted, from the ambient setting installed with
:func:`use_workers`.  Results are always assembled in partition order and
cross-partition reductions are folded left-to-right, so the worker count never
changes an output.
"""

from __future__ import annotations

import contextlib
import contextvars
import functools
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import AlignmentError, ParameterError, TaskError

_WORKERS: contextvars.ContextVar[int] = contextvars.ContextVar("sddete_workers", default=1)


@contextlib.contextmanager
def use_workers(n: int):
    """Set the default worker count for partition tasks inside the block."""
    if n < 1:
        raise ParameterError(f"workers must be >= 1, got {n}")
    token = _WORKERS.set(int(n))
    try:
        yield
    finally:
        _WORKERS.reset(token)


def current_workers() -> int:
    return _WORKERS.get()


def _freeze(part):
    if isinstance(part, np.ndarray):
        part = part.view()
        part.flags.writeable = False
        return part
    if isinstance(part, (list, Iterator)) or not hasattr(part, "__getitem__"):
        return tuple(part)
    return part


class PTable:
    """An ordered, partitioned, immutable collection of records."""

    __slots__ = ("_parts",)

    def __init__(self, partitions: Iterable[Sequence[Any]]):
        parts = tuple(_freeze(p) for p in partitions)
        if not parts:
            raise ParameterError("a PTable needs at least one partition")
        self._parts = parts

    @property
    def partitions(self) -> tuple:
        return self._parts

    @property
    def partition_count(self) -> int:
        return len(self._parts)

    def partition_sizes(self) -> list[int]:
        return [len(p) for p in self._parts]

    def count(self) -> int:
        return sum(len(p) for p in self._parts)

    def __len__(self) -> int:
        return self.count()

    def __iter__(self):
        for part in self._parts:
            yield from part

    def collect(self) -> list:
        return list(self)

    def __repr__(self):
        return f"PTable(partitions={self.partition_count}, count={self.count()})"

    def locate(self, index: int) -> tuple[int, int]:
        """Map a global record index to ``(partition, offset)``."""
        if index < 0:
            index += self.count()
        for p, part in enumerate(self._parts):
            if index < len(part):
                return p, index
            index -= len(part)
        raise IndexError("record index out of range")

    def record(self, index: int):
        p, i = self.locate(index)
        return self._parts[p][i]

    @classmethod
    def from_records(cls, records: Iterable[Any], partitions: int = 1) -> "PTable":
        """Build a table from a flat sequence, dealt round-robin by index."""
        records = list(records)
        if partitions < 1:
            raise ParameterError(f"partition count must be >= 1, got {partitions}")
        return cls(records[p::partitions] for p in range(partitions))


def empty_like(t: PTable) -> PTable:
    return PTable(() for _ in range(t.partition_count))


def run_tasks(tasks: list[Callable[[], Any]], workers: int | None = None) -> list:
    """Run zero-argument callables, returning results in submission order."""
    n = current_workers() if workers is None else workers
    if n < 1:
        raise ParameterError(f"workers must be >= 1, got {n}")
    if n == 1 or len(tasks) <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=min(n, len(tasks))) as pool:
        futures = [pool.submit(task) for task in tasks]
        # Collected in submission order: the lowest failing partition wins.
        return [f.result() for f in futures]


def map_partitions(t: PTable, f: Callable[[Any], Sequence[Any]], workers: int | None = None) -> PTable:
    """Apply ``f`` to every whole partition."""

    def task(p, part):
        try:
            return f(part)
        except TaskError:
            raise
        except Exception as exc:
            raise TaskError(p, None, exc) from exc

    return PTable(run_tasks([functools.partial(task, p, part) for p, part in enumerate(t.partitions)], workers))


def pmap(t: PTable, f: Callable[[Any], Any], workers: int | None = None) -> PTable:
    """Apply ``f`` to every record, keeping partition layout."""

    def task(p, part):
        out = []
        for i, rec in enumerate(part):
            try:
                out.append(f(rec))
            except Exception as exc:
                raise TaskError(p, i, exc) from exc
        return tuple(out)

    return PTable(run_tasks([functools.partial(task, p, part) for p, part in enumerate(t.partitions)], workers))


def pfilter(t: PTable, pred: Callable[[Any], bool], workers: int | None = None) -> PTable:
    def task(p, part):
        out = []
        for i, rec in enumerate(part):
            try:
                if pred(rec):
                    out.append(rec)
            except Exception as exc:
                raise TaskError(p, i, exc) from exc
        return tuple(out)

    return PTable(run_tasks([functools.partial(task, p, part) for p, part in enumerate(t.partitions)], workers))


def punion(a: PTable, b: PTable) -> PTable:
    """Concatenate two tables: all partitions of ``a`` then all of ``b``.

    Empty partitions of ``b`` are dropped so that ``punion(t, empty)`` keeps
    the layout of ``t``.
    """
    tail = tuple(p for p in b.partitions if len(p))
    if not tail:
        return a
    head = tuple(p for p in a.partitions if len(p))
    if not head:
        return PTable(tail)
    return PTable(a.partitions + tail)


def check_aligned(a: PTable, b: PTable) -> None:
    if a.partition_count != b.partition_count:
        raise AlignmentError(
            f"partition counts differ: {a.partition_count} vs {b.partition_count}")
    for p, (pa, pb) in enumerate(zip(a.partitions, b.partitions)):
        if len(pa) != len(pb):
            raise AlignmentError(f"partition {p} lengths differ: {len(pa)} vs {len(pb)}")


def zip_partitions(a: PTable, b: PTable, f: Callable[[Any, Any], Sequence[Any]],
                   workers: int | None = None) -> PTable:
    """Combine positionally aligned partitions of ``a`` and ``b`` with ``f``."""
    check_aligned(a, b)

    def task(p, pa, pb):
        try:
            return f(pa, pb)
        except Exception as exc:
            raise TaskError(p, None, exc) from exc

    return PTable(run_tasks([functools.partial(task, p, pa, pb)
                        for p, (pa, pb) in enumerate(zip(a.partitions, b.partitions))], workers))


def pzip(a: PTable, b: PTable) -> PTable:
    """Pair records by position: pair i of partition p is ``(a[p][i], b[p][i])``."""
    return zip_partitions(a, b, lambda pa, pb: tuple(zip(pa, pb)), workers=1)


def reduce_partitions(t: PTable, f: Callable[[Any], Any], combine: Callable[[Any, Any], Any],
                      workers: int | None = None):
    """Compute ``f`` per partition and fold the results left-to-right.

    The fold order is the partition order regardless of how the partition
    tasks were scheduled, so floating point sums are reproducible.
    """
    results = run_tasks([functools.partial(f, part) for part in t.partitions], workers)
    return functools.reduce(combine, results)


def repartition(t: PTable, p: int, seed: int | None = None) -> PTable:
    """Redistribute records over ``p`` partitions.

    Without a seed, record ``i`` (in global order) goes to partition
    ``i % p``.  With a seed, a seeded permutation of the global indices is
    dealt round-robin instead.  Inside each partition records keep their
    relative global order.
    """
    if p < 1:
        raise ParameterError(f"partition count must be >= 1, got {p}")
    n = t.count()
    if seed is None:
        slot = np.arange(n) % p
    else:
        perm = np.random.default_rng(seed).permutation(n)
        slot = np.empty(n, dtype=np.int64)
        slot[perm] = np.arange(n) % p
    kinds = {type(part) for part in t.partitions}
    take = getattr(kinds.pop(), "concat_take", None) if len(kinds) == 1 else None
    if take is not None:
        return PTable(take(t.partitions, np.flatnonzero(slot == q)) for q in range(p))
    flat = t.collect()
    return PTable(tuple(flat[i] for i in np.flatnonzero(slot == q)) for q in range(p))
