import json

import numpy as np
import pytest

from sddete import preprocess
from sddete.data import class_counts, synth_two_gaussian, to_arrays
from sddete.ensemble import (DeTEModel, DeTEParams, IterationModel, fit_sd_dete, load_model,
                             loads_model, predict, predict_block, predict_scores,
                             predict_scores_block, predict_table, save_model, summary)
from sddete.errors import BalanceError, ParameterError, PersistenceError, ShapeError
from sddete.tree import TreeModel, TreeParams, fit_tree

from conftest import make_table

PARAMS = DeTEParams(iter=4, tree_depth=5, seed=3)


@pytest.fixture(scope="module")
def data():
    return synth_two_gaussian(1500, 8, 4, 2.0, seed=1, partitions=4)


@pytest.fixture(scope="module")
def model(data):
    return fit_sd_dete(data, PARAMS)


def test_params_validation():
    for bad in (dict(iter=0), dict(cuts=1), dict(max_clust=0), dict(tree_depth=0)):
        with pytest.raises(ParameterError):
            DeTEParams(**bad)


def test_model_shape(model, data):
    assert model.iter == 4 and len(model.iterations) == 4
    T = 4
    for it in model.iterations:
        assert it.rd.thresholds.shape == (T, PARAMS.cuts - 1)
        assert 1 <= it.pca.k <= T - 1
        assert it.tree.arity == T + it.pca.k
        assert it.tree.depth <= PARAMS.tree_depth


def test_score_sums_equal_iter(model, data):
    X, _ = to_arrays(data)
    S = predict_scores_block(model, X)
    np.testing.assert_allclose(S.sum(axis=1), model.iter, atol=1e-9)
    assert np.all((S >= 0) & (S <= model.iter))
    table_scores = np.vstack(predict_table(model, data).partitions)
    np.testing.assert_array_equal(table_scores, S)


def test_single_point_api(model):
    x = np.array([0.5, -0.2, 1.0, 0.0])
    s = predict_scores(model, x)
    assert predict(model, x) == int(np.argmax(s))
    with pytest.raises(ShapeError):
        predict_scores(model, x[:3])
    with pytest.raises(ShapeError):
        predict_block(model, np.zeros((2, 5)))


def const_tree(arity, p1):
    return TreeModel(arity, TreeParams(), [-1], [0.0], [-1], [-1], [[1 - p1, p1]])


def fixed_model(probs, T=2):
    rd = preprocess.RDModel(2, np.zeros((T, 1)))
    pca = preprocess.PCAModel(np.zeros(T), np.eye(T)[:1], [1.0])
    return DeTEModel(tuple(IterationModel(rd, pca, const_tree(T + 1, p)) for p in probs))


def test_score_summation_and_ties():
    m = fixed_model([0.1, 0.6, 0.2])
    np.testing.assert_allclose(predict_scores(m, [0.0, 0.0]), [2.1, 0.9])
    assert predict(m, [0.0, 0.0]) == 0
    assert predict(fixed_model([0.75, 0.25]), [0.0, 0.0]) == 0  # scores [1.0, 1.0]
    assert predict(fixed_model([1.0, 0.5]), [1.0, 1.0]) == 1     # scores [0.5, 1.5]


def test_confidence_monotonicity():
    for probs, expected in (([0.5, 0.9, 0.7], 1), ([0.2, 0.5, 0.1], 0)):
        m = fixed_model(probs)
        assert predict(m, [0.3, 0.1]) == expected


def test_iter1_equals_single_tree(data):
    m = fit_sd_dete(data, DeTEParams(iter=1, tree_depth=4, seed=5))
    it = m.iterations[0]
    X, _ = to_arrays(data)
    np.testing.assert_array_equal(predict_scores_block(m, X), it.tree.predict_proba(it.features(X)))


def test_balanced_single_cluster_reduces_to_rd_pca_tree():
    d = synth_two_gaussian(400, 1, 3, 2.0, seed=0)
    assert class_counts(d).tolist() == [200, 200]
    m = fit_sd_dete(d, DeTEParams(iter=1, max_clust=1, tree_depth=4, seed=1))
    it = m.iterations[0]
    joined = preprocess.join_features(preprocess.transform_rd(it.rd, d), preprocess.transform_pca(it.pca, d))
    direct = fit_tree(joined, TreeParams(max_depth=4))
    assert direct.to_dict() == it.tree.to_dict()


def test_deterministic_and_worker_invariant(data, model):
    again = fit_sd_dete(data, PARAMS, workers=4)
    assert again.dumps() == model.dumps()
    other = fit_sd_dete(data, DeTEParams(iter=4, tree_depth=5, seed=4))
    assert other.dumps() != model.dumps()


def test_iterations_differ(model):
    th = [it.rd.thresholds.tobytes() for it in model.iterations]
    assert len(set(th)) == len(th)


def test_save_load_round_trip(tmp_path, model):
    path = tmp_path / "m.json"
    save_model(model, path)
    doc = json.loads(path.read_text())
    assert doc["format_version"] == 1 and doc["iter"] == 4 and doc["num_classes"] == 2
    back = load_model(path)
    X = np.random.default_rng(0).normal(size=(1000, 4)) * 3
    np.testing.assert_array_equal(predict_scores_block(back, X), predict_scores_block(model, X))
    np.testing.assert_array_equal(predict_block(back, X), predict_block(model, X))
    assert back.dumps() == model.dumps()


def test_load_failures(tmp_path, model):
    text = model.dumps()
    bad = tmp_path / "t.json"
    bad.write_text(text[: len(text) // 2])
    with pytest.raises(PersistenceError):
        load_model(bad)
    with pytest.raises(PersistenceError):
        load_model(tmp_path / "missing.json")
    doc = json.loads(text)
    for mutate in (lambda d: d.update(format_version=2), lambda d: d.update(iter=3),
                   lambda d: d.update(num_classes=3), lambda d: d["iterations"][0].pop("tree"),
                   lambda d: d["iterations"][0]["tree"]["nodes"].pop()):
        d = json.loads(text)
        mutate(d)
        with pytest.raises(PersistenceError):
            loads_model(json.dumps(d))
    with pytest.raises(PersistenceError):
        loads_model("[]")
    assert doc["iterations"]


def test_input_validation():
    with pytest.raises(BalanceError):
        fit_sd_dete(make_table(np.random.default_rng(0).normal(size=(20, 3)), [0] * 20))
    with pytest.raises(ParameterError):
        fit_sd_dete(make_table(np.arange(10.0)[:, None], [0, 1] * 5))


def test_two_features_force_k1():
    d = synth_two_gaussian(300, 3, 2, 2.0, seed=0)
    m = fit_sd_dete(d, DeTEParams(iter=3, tree_depth=3))
    assert [it.pca.k for it in m.iterations] == [1, 1, 1]


def test_ablation_switch_changes_only_balancing(data):
    a = fit_sd_dete(data, DeTEParams(iter=2, tree_depth=4, seed=1, max_clust=1))
    b = fit_sd_dete(data, DeTEParams(iter=2, tree_depth=4, seed=1, cluster_balancing=False))
    for ia, ib in zip(a.iterations, b.iterations):
        np.testing.assert_array_equal(ia.rd.thresholds, ib.rd.thresholds)
        np.testing.assert_array_equal(ia.pca.components, ib.pca.components)


def test_summary(model):
    s = summary(model)
    assert s["iter"] == 4 and s["arity"] == 4 and len(s["tree_nodes"]) == 4


def test_prediction_never_clusters_or_balances(monkeypatch, model):
    from sddete import balance, cluster

    def boom(*a, **k):
        raise AssertionError("called at prediction time")

    for mod, names in ((cluster, ("fit_bisecting_kmeans", "assign_block", "assign_table")),
                       (balance, ("cros", "ros", "rus", "smote"))):
        for name in names:
            monkeypatch.setattr(mod, name, boom)
    predict_block(model, np.zeros((3, 4)))
