import pickle

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sddete.errors import AlignmentError, ParameterError, TaskError
from sddete.ptable import (PTable, current_workers, map_partitions, pfilter, pmap, punion, pzip,
                           reduce_partitions, repartition, run_tasks, use_workers)

tables = st.lists(st.lists(st.integers(-1000, 1000), max_size=8), min_size=1, max_size=6).map(PTable)


def layout(t):
    return [list(p) for p in t.partitions]


def test_pmap_increment():
    assert layout(pmap(PTable([[1, 2], [3]]), lambda x: x + 1)) == [[2, 3], [4]]


@given(tables)
def test_pmap_identity_and_shape(t):
    out = pmap(t, lambda x: x)
    assert layout(out) == layout(t)
    assert out.partition_sizes() == t.partition_sizes()


def test_pmap_worker_count_gives_identical_bytes():
    t = PTable.from_records(range(100_000), partitions=16)
    one = pmap(t, lambda x: -x, workers=1)
    eight = pmap(t, lambda x: -x, workers=8)
    assert pickle.dumps(layout(one)) == pickle.dumps(layout(eight))


def test_pmap_failure_names_partition_and_index():
    t = PTable([[1, 2], [3, 0, 5]])
    with pytest.raises(TaskError) as info:
        pmap(t, lambda x: 1 // x, workers=4)
    assert (info.value.partition, info.value.index) == (1, 1)
    assert isinstance(info.value.cause, ZeroDivisionError)


def test_first_failing_partition_is_reported():
    t = PTable([[1], [0], [0]])
    with pytest.raises(TaskError) as info:
        pmap(t, lambda x: 1 // x, workers=3)
    assert info.value.partition == 1


def test_punion_examples():
    assert layout(punion(PTable([[1]]), PTable([[2]]))) == [[1], [2]]
    t = PTable([[1, 2], [3]])
    assert layout(punion(t, PTable([[]]))) == layout(t)
    a = PTable.from_records(range(7), 2)
    b = PTable.from_records(range(5), 3)
    assert punion(a, b).count() == 12


@given(tables, tables)
def test_punion_order_and_additivity(a, b):
    out = punion(a, b)
    assert out.count() == a.count() + b.count()
    assert out.collect() == a.collect() + b.collect()


def test_pzip_examples():
    assert layout(pzip(PTable([[1, 2]]), PTable([["x", "y"]]))) == [[(1, "x"), (2, "y")]]
    t = PTable([[1, 2], [3]])
    assert all(a == b for a, b in pzip(t, t))
    with pytest.raises(AlignmentError, match="partition 0"):
        pzip(PTable([[1, 2]]), PTable([[1, 2, 3]]))
    with pytest.raises(AlignmentError):
        pzip(PTable([[1]]), PTable([[1], [2]]))


@given(tables)
def test_pzip_aligns_by_position(t):
    out = pzip(pmap(t, lambda x: x * 2), pmap(t, lambda x: x - 1))
    for (a, b), r in zip(out, t):
        assert (a, b) == (r * 2, r - 1)


def test_pfilter_examples():
    assert layout(pfilter(PTable([[1, 2, 3]]), lambda x: x % 2)) == [[1, 3]]
    t = PTable([[1, 2], [3]])
    assert layout(pfilter(t, lambda x: True)) == layout(t)
    empty = pfilter(t, lambda x: False)
    assert empty.partition_count == 2 and empty.count() == 0


@given(tables, st.integers(2, 5))
def test_pfilter_subset_preserves_order(t, m):
    out = pfilter(t, lambda x: x % m == 0)
    assert out.collect() == [x for x in t if x % m == 0]


def test_repartition_examples():
    t = PTable([[1, 4], [2, 5], [3]])
    single = repartition(t, 1, seed=5)
    assert layout(single) == [[1, 4, 2, 5, 3]]
    assert repartition(t, 4, seed=1).count() == 5
    assert layout(repartition(t, 2, seed=9)) == layout(repartition(t, 2, seed=9))
    with pytest.raises(ParameterError):
        repartition(t, 0)


@given(tables, st.integers(1, 7), st.one_of(st.none(), st.integers(0, 100)))
def test_repartition_conserves_multiset(t, p, seed):
    out = repartition(t, p, seed)
    assert out.partition_count == p
    assert sorted(out.collect()) == sorted(t.collect())


def test_repartition_round_robin_without_seed():
    t = PTable([[0, 1, 2, 3, 4, 5, 6]])
    assert layout(repartition(t, 3)) == [[0, 3, 6], [1, 4], [2, 5]]


def test_records_are_immutable():
    t = PTable([[1, 2]])
    assert isinstance(t.partitions[0], tuple)
    arr = PTable([np.arange(3)])
    with pytest.raises(ValueError):
        arr.partitions[0][0] = 9


def test_reduce_is_ordered_and_worker_invariant():
    rng = np.random.default_rng(3)
    t = PTable([rng.normal(size=1000) * 10.0 ** rng.integers(-8, 8) for _ in range(12)])
    results = {w: reduce_partitions(t, lambda p: float(np.sum(p)), lambda a, b: a + b, workers=w)
               for w in (1, 3, 8)}
    assert len(set(results.values())) == 1


def test_use_workers_context():
    assert current_workers() == 1
    with use_workers(4):
        assert current_workers() == 4
        assert run_tasks([lambda i=i: i for i in range(6)]) == list(range(6))
    assert current_workers() == 1
    with pytest.raises(ParameterError):
        with use_workers(0):
            pass


def test_map_partitions_and_locate():
    t = PTable([[1, 2], [3]])
    assert layout(map_partitions(t, lambda p: [sum(p)])) == [[3], [3]]
    assert t.locate(2) == (1, 0) and t.record(-1) == 3
    with pytest.raises(IndexError):
        t.locate(3)
    with pytest.raises(ParameterError):
        PTable([])
