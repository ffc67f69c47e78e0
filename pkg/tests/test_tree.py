import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sddete.data import synth_two_gaussian, to_arrays
from sddete.errors import ParameterError, ShapeError, UndefinedMetricError
from sddete.rng import stream
from sddete.tree import (ForestModel, TreeModel, TreeParams, fit_random_forest, fit_tree, gini,
                         predict_scores_tree)

from conftest import make_table


def test_gini_examples():
    assert gini([10, 0]) == 0.0
    assert gini([5, 5]) == 0.5
    assert gini([90, 10]) == pytest.approx(0.18, abs=1e-15)
    with pytest.raises(UndefinedMetricError):
        gini([0, 0])


def test_params_validation():
    for bad in (dict(max_depth=0), dict(max_bins=1), dict(min_info_gain=-1.0),
                dict(min_instances_per_node=0), dict(impurity="entropy"), dict(binning="x")):
        with pytest.raises(ParameterError):
            TreeParams(**bad)


def test_separable_1d_single_split():
    x = np.r_[np.linspace(-5, -0.5, 20), np.linspace(0.7, 4, 20)]
    y = (x > 0).astype(int)
    m = fit_tree(make_table(x[:, None], y), TreeParams(max_depth=1))
    assert m.node_count == 3
    assert -0.5 < m.threshold[0] < 0.7
    assert np.array_equal(m.predict(x[:, None]), y)


def test_pure_data_single_leaf():
    m = fit_tree(make_table(np.random.default_rng(0).normal(size=(30, 2)), [1] * 30))
    assert m.node_count == 1 and m.counts[0].tolist() == [0.0, 30.0]


def test_depth_one_has_at_most_three_nodes():
    X = np.random.default_rng(1).normal(size=(200, 3))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    assert fit_tree(make_table(X, y), TreeParams(max_depth=1)).node_count <= 3


def handmade(counts):
    return TreeModel(1, TreeParams(), [0, -1, -1], [0.0, 0, 0], [1, -1, -1], [2, -1, -1],
                     [[0, 0]] + counts)


def test_leaf_scores():
    m = handmade([[3, 1], [0, 7]])
    assert predict_scores_tree(m, [-1.0]).tolist() == [0.75, 0.25]
    assert predict_scores_tree(m, [0.0]).tolist() == [0.75, 0.25]  # <= goes left
    assert predict_scores_tree(m, [2.0]).tolist() == [0.0, 1.0]
    with pytest.raises(ShapeError):
        predict_scores_tree(m, [1.0, 2.0])


def random_data(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 80))
    T = int(rng.integers(1, 5))
    X = rng.integers(-5, 6, size=(n, T)).astype(float) if rng.random() < 0.5 else rng.normal(size=(n, T))
    y = (X[:, 0] + rng.normal(size=n) > 0).astype(int)
    return X, y


@given(st.integers(0, 100_000), st.integers(1, 6), st.integers(2, 40), st.integers(1, 4))
def test_structural_invariants(seed, depth, bins, min_inst):
    X, y = random_data(seed)
    params = TreeParams(max_depth=depth, max_bins=bins, min_instances_per_node=min_inst)
    m = fit_tree(make_table(X, y, 2), params)
    leaves = m.leaves()
    assert m.depth <= depth
    assert np.all(m.feature[m.feature >= 0] < m.arity)
    assert m.counts[leaves].sum() == len(y)
    assert np.all(m.counts[leaves].sum(axis=1) >= min(min_inst, len(y)))
    internal = np.flatnonzero(m.feature >= 0)
    for i in internal:
        np.testing.assert_array_equal(m.counts[i], m.counts[m.left[i]] + m.counts[m.right[i]])
    # every training point lands in a leaf whose counts include it
    li = m.leaf_index(X)
    for leaf in leaves:
        sel = li == leaf
        assert np.bincount(y[sel], minlength=2).tolist() == m.counts[leaf].tolist()
    proba = m.predict_proba(X)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)


def weighted_leaf_gini(m):
    c = m.counts[m.leaves()]
    return sum(gini(row) * row.sum() for row in c)


@given(st.integers(0, 100_000))
def test_deeper_trees_never_increase_impurity(seed):
    X, y = random_data(seed)
    t = make_table(X, y)
    values = [weighted_leaf_gini(fit_tree(t, TreeParams(max_depth=d))) for d in range(1, 8)]
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


@given(st.integers(0, 100_000), st.sampled_from(["node", "global"]))
def test_monotone_transform_invariance(seed, binning):
    X, y = random_data(seed)
    Z = X.copy()
    Z[:, 0] = np.exp(Z[:, 0] / 3.0) ** 3 + 1.0
    params = TreeParams(max_depth=4, max_bins=8, binning=binning)
    a = fit_tree(make_table(X, y), params)
    b = fit_tree(make_table(Z, y), params)
    np.testing.assert_array_equal(a.leaf_index(X), b.leaf_index(Z))
    np.testing.assert_array_equal(a.feature, b.feature)


def test_tie_prefers_lowest_feature():
    x = np.arange(10.0)
    X = np.c_[x, x]
    m = fit_tree(make_table(X, (x > 4).astype(int)), TreeParams(max_depth=1))
    assert m.feature[0] == 0


def test_candidate_count_bounded_by_bins():
    # with max_bins=2 only the median boundary may be tried at the root
    x = np.arange(100.0)
    y = (x >= 90).astype(int)
    m = fit_tree(make_table(x[:, None], y), TreeParams(max_depth=1, max_bins=2))
    assert m.threshold[0] == pytest.approx(49.5)


def test_min_info_gain_stops_splitting():
    X, y = random_data(3, 60)
    assert fit_tree(make_table(X, y), TreeParams(min_info_gain=1.0)).node_count == 1


def test_dict_round_trip():
    X, y = random_data(7, 70)
    m = fit_tree(make_table(X, y), TreeParams(max_depth=4))
    back = TreeModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(back.predict_proba(X), m.predict_proba(X))
    nodes = m.to_dict()["nodes"]
    assert {n["type"] for n in nodes} <= {"leaf", "internal"}
    with pytest.raises(ValueError):
        TreeModel.from_dict({**m.to_dict(), "nodes": nodes[:-1]})


def test_forest_reduces_to_single_tree():
    X, y = random_data(11, 80)
    t = make_table(X, y)
    params = TreeParams(max_depth=4)
    f = fit_random_forest(t, 1, params, stream(0), bootstrap=False, features_per_node=None)
    single = fit_tree(t, params)
    assert f.trees[0].to_dict() == single.to_dict()


def test_forest_separable_gaussians():
    train = synth_two_gaussian(2000, 1, 4, 6.0, seed=3)
    X, y = to_arrays(synth_two_gaussian(2000, 1, 4, 6.0, seed=4))
    f = fit_random_forest(train, 30, TreeParams(max_depth=4), stream(1))
    assert np.mean(f.predict(X) == y) > 0.99


def test_forest_vote_rules():
    yes = handmade([[0, 1], [0, 1]])
    assert ForestModel([yes, yes, yes]).predict(np.array([[0.0]])).tolist() == [1]
    a = handmade([[1, 3], [1, 3]])   # votes 1 with p = 0.75
    b = handmade([[2, 1], [2, 1]])   # votes 0 with p = 0.667
    assert ForestModel([a, b]).predict(np.array([[0.0]])).tolist() == [1]


def test_forest_worker_invariant():
    X, y = random_data(5, 80)
    t = make_table(X, y)
    a = fit_random_forest(t, 8, rng=stream(2), workers=1)
    b = fit_random_forest(t, 8, rng=stream(2), workers=4)
    assert a.to_dict() == b.to_dict()
