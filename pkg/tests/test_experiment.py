import csv
import io
import json

import numpy as np
import pytest

from sddete import __version__, balance
from sddete.errors import ConfigError
from sddete.experiment import REPORT_COLUMNS, TIMING_COLUMNS, ExperimentConfig, run_cv


def synthetic(n=600, ir=5, sep=4.0, name="syn", dims=3):
    return {"name": name, "synthetic": {"n": n, "ir": ir, "dims": dims, "separation": sep, "seed": 1}}


def config(**kw):
    base = dict(datasets=[synthetic()], methods=["dt"], samplers=["none"], folds=5, seed=2)
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def parse(report):
    return list(csv.DictReader(io.StringIO(report.to_csv())))


def test_single_cell_has_fold_rows_and_mean():
    rows = parse(run_cv(config()))
    assert [r["fold"] for r in rows] == ["0", "1", "2", "3", "4", "mean"]
    assert list(rows[0]) == list(REPORT_COLUMNS)
    for col in ("gm", "auc_balanced", "auroc", "accuracy"):
        vals = [float(r[col]) for r in rows[:5]]
        assert float(rows[5][col]) == pytest.approx(sum(vals) / 5, abs=1e-12)


def test_report_is_reproducible_except_timing():
    cfg = dict(methods=["dt", "rf", "sd_dete"], samplers=["none", "ros", "smote", "cros-ablation"],
               params={"rf": {"n_trees": 5}, "sd_dete": {"iter": 2, "tree_depth": 4}}, folds=3)

    def strip(report):
        return [{k: v for k, v in r.items() if k not in TIMING_COLUMNS} for r in parse(report)]

    a, b = run_cv(config(**cfg)), run_cv(config(**cfg))
    assert strip(a) == strip(b)
    cells = {(c.method, c.sampler) for c in a.cells}
    assert cells == {("dt", "none"), ("dt", "ros"), ("dt", "smote"), ("rf", "none"), ("rf", "ros"),
                     ("rf", "smote"), ("sd_dete", "none"), ("sd_dete", "cros-ablation")}
    assert all(c.error is None for c in a.cells)
    c = run_cv(config(parallel_cells=True, workers=3, **cfg))
    assert strip(c) == strip(a)


def test_samplers_only_see_training_folds(monkeypatch):
    seen = []
    real = balance.SAMPLERS["ros"]

    def spy(data, rng, **kw):
        seen.append(data.count())
        return real(data, rng)

    monkeypatch.setitem(balance.SAMPLERS, "ros", spy)
    report = run_cv(config(samplers=["ros"]))
    assert seen == [480] * 5
    assert report.cells[0].error is None


def test_sd_dete_beats_untreated_tree_at_high_ir():
    cfg = config(datasets=[synthetic(n=4080, ir=50, sep=2.5, dims=5)], methods=["dt", "sd_dete"],
                 params={"sd_dete": {"iter": 5}})
    means = {c.method: c.mean()["gm"] for c in run_cv(cfg).cells}
    assert means["sd_dete"] > means["dt"]


def test_cell_failure_is_isolated():
    report = run_cv(config(methods=["dt", "rf"], params={"rf": {"n_trees": 0}}))
    errors = {c.method: c.error for c in report.cells}
    assert errors["dt"] is None and "n_trees" in errors["rf"]
    assert not report.all_failed()
    assert {r["method"] for r in parse(report)} == {"dt"}


def test_json_report():
    doc = json.loads(run_cv(config(folds=2)).to_json())
    assert doc["tool"] == "sddete" and doc["version"] == __version__
    assert doc["config"]["folds"] == 2 and doc["config"]["params"]["dt"]["max_depth"] == 5
    cell = doc["cells"][0]
    assert len(cell["folds"]) == 2 and cell["mean"]["gm"] == pytest.approx(
        np.mean([f["gm"] for f in cell["folds"]]), abs=1e-12)


@pytest.mark.parametrize("doc, where", [
    ({"methods": ["dt"]}, "datasets"),
    ({"datasets": []}, "datasets"),
    ({"datasets": [{"path": "a", "synthetic": {}}]}, "datasets[0]"),
    ({"datasets": [{"synthetic": {"n": 10}}]}, "datasets[0].synthetic.ir"),
    ({"datasets": [synthetic()], "methods": ["svm"]}, "methods[0]"),
    ({"datasets": [synthetic()], "samplers": ["none", "tomek"]}, "samplers[1]"),
    ({"datasets": [synthetic()], "params": {"dt": {"depth": 3}}}, "params.dt.depth"),
    ({"datasets": [synthetic()], "folds": 1}, "folds"),
    ({"datasets": [synthetic()], "bogus": 1}, "bogus"),
    ({"datasets": [synthetic()], "methods": ["sd_dete"], "samplers": ["smote"]}, "methods/samplers"),
])
def test_config_errors_name_field(doc, where):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(doc)
    assert str(info.value).startswith(where)


def test_csv_dataset_path(tmp_path):
    from sddete.data import save_csv, synth_two_gaussian
    path = tmp_path / "tiny.csv"
    save_csv(synth_two_gaussian(300, 4, 3, 3.0, seed=0), path)
    report = run_cv(config(datasets=[{"path": str(path)}], folds=3))
    assert report.cells[0].dataset == "tiny" and report.cells[0].error is None
