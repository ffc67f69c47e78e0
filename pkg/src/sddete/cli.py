"""
Command-line interface.

    sddete gen       --kind two_gaussian --n 20000 --ir 50 --dims 10 --separation 2 -o data.csv
    sddete balance   data.csv --sampler smote -o balanced.csv
    sddete train     data.csv -o model.json
    sddete predict   --model model.json data.csv -o predictions.csv
    sddete evaluate  --data data.csv --methods dt sd_dete --samplers none ros -o report.csv
    sddete inspect   model.json

Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, balance, cluster, data, ensemble, experiment
from .errors import ConfigError, DataError, PersistenceError, SDDeTEError
from .ptable import use_workers
from .rng import stream

log = logging.getLogger("sddete")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="execution parallelism (never changes results)")
    p.add_argument("--report", choices=("csv", "json"), default="csv")
    p.add_argument("--config", help="JSON file whose keys override command-line flags")
    p.add_argument("--partitions", type=int, default=data.DEFAULT_PARTITIONS)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _input_args(p):
    p.add_argument("input")
    p.add_argument("--label-column", default="-1",
                   help="label column index or header name (default: last column)")
    p.add_argument("--positive-label", default=None,
                   help="label value mapped to class 1 (default: the minority value)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="sddete", description=__doc__.split("\n")[1].strip() or None,
                                     parents=[common])
    parser.add_argument("--version", action="version", version=f"sddete {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic imbalanced dataset")
    g.add_argument("--kind", choices=experiment.SYNTHETIC_KINDS, default="two_gaussian")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--ir", type=float, required=True)
    g.add_argument("--dims", type=int, default=10)
    g.add_argument("--separation", type=float, default=2.0)
    g.add_argument("--subclusters", type=int, default=3)
    g.add_argument("--spread", type=float, default=1.0)
    g.add_argument("-o", "--output", required=True)

    b = sub.add_parser("balance", parents=[common], help="apply one sampler to a CSV file")
    _input_args(b)
    b.add_argument("--sampler", choices=("ros", "rus", "smote", "cros"), required=True)
    b.add_argument("--k", type=int, default=5, help="SMOTE neighbours")
    b.add_argument("--clusters", type=int, default=10, help="bisecting k-means leaves for cros")
    b.add_argument("-o", "--output", required=True)

    t = sub.add_parser("train", parents=[common], help="fit an ensemble and write the model file")
    _input_args(t)
    t.add_argument("--iter", type=int, default=10)
    t.add_argument("--cuts", type=int, default=5)
    t.add_argument("--max-clust", type=int, default=10)
    t.add_argument("--tree-depth", type=int, default=10)
    t.add_argument("--no-cluster-balancing", action="store_true",
                   help="oversample with plain ROS instead of per-cluster ROS")
    t.add_argument("-o", "--output", required=True)

    pr = sub.add_parser("predict", parents=[common], help="score a CSV file with a model")
    _input_args(pr)
    pr.add_argument("--model", required=True)
    pr.add_argument("--unlabeled", action="store_true", help="every column is a feature")
    pr.add_argument("-o", "--output", required=True)

    e = sub.add_parser("evaluate", parents=[common], help="run the cross-validated benchmark grid")
    e.add_argument("--data", nargs="*", default=[], help="CSV dataset paths")
    e.add_argument("--label-column", default="-1")
    e.add_argument("--positive-label", default=None)
    e.add_argument("--methods", nargs="+", default=list(experiment.METHODS))
    e.add_argument("--samplers", nargs="+", default=list(experiment.SAMPLERS))
    e.add_argument("--folds", type=int, default=5)
    e.add_argument("--parallel-cells", action="store_true")
    e.add_argument("-o", "--output", default=None)

    i = sub.add_parser("inspect", parents=[common], help="print a model summary")
    i.add_argument("model")
    return parser


def _label_column(value: str):
    try:
        return int(value)
    except ValueError:
        return value


def _apply_config(args, path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    if args.command == "evaluate":
        return doc
    for key, value in doc.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise ConfigError(f"{key}: unknown option for '{args.command}'")
        setattr(args, attr, value)
    return None


def _load(args):
    return data.load_csv(args.input, label_column=_label_column(str(args.label_column)),
                         positive_label=args.positive_label, partitions=args.partitions)


def cmd_gen(args):
    common = dict(n=args.n, ir=args.ir, dims=args.dims, separation=args.separation, seed=args.seed,
                  partitions=args.partitions)
    if args.kind == "two_gaussian":
        table = data.synth_two_gaussian(**common)
    else:
        table = data.synth_clustered_minority(subclusters=args.subclusters, spread=args.spread, **common)
    data.save_csv(table, args.output)
    _emit(args, {"output": args.output, "stats": _stats_dict(data.class_stats(table))})


def _stats_dict(st: data.ClassStats) -> dict:
    return {"counts": {str(k): v for k, v in st.count_per_class.items()}, "majority": st.majority,
            "minority": st.minority, "ir": st.ir if np.isfinite(st.ir) else "inf"}


def cmd_balance(args):
    table = _load(args)
    rng = stream(args.seed, "balance", args.sampler)
    per_cluster = None
    if args.sampler == "cros":
        cm = cluster.fit_bisecting_kmeans(table, args.clusters, stream(args.seed, "balance", "kmeans"))
        out, rep = balance.cros(table, cluster.assign_table(cm, table), rng, return_report=True)
        per_cluster = [list(c) for c in rep.per_cluster]
    elif args.sampler == "smote":
        out = balance.smote(table, k=args.k, rng=rng)
    else:
        out = balance.SAMPLERS[args.sampler](table, rng)
    data.save_csv(out, args.output)
    rep = balance.report(table, out)
    doc = {"before": _stats_dict(rep.before), "after": _stats_dict(rep.after)}
    if per_cluster is not None:
        doc["per_cluster"] = per_cluster
    _emit(args, doc)


def cmd_train(args):
    table = _load(args)
    params = ensemble.DeTEParams(iter=args.iter, cuts=args.cuts, max_clust=args.max_clust,
                                 tree_depth=args.tree_depth, seed=args.seed,
                                 cluster_balancing=not args.no_cluster_balancing)
    model = ensemble.fit_sd_dete(table, params, workers=args.workers)
    ensemble.save_model(model, args.output)
    _emit(args, {"output": args.output, **ensemble.summary(model)})


def cmd_predict(args):
    model = ensemble.load_model(args.model)
    if args.unlabeled:
        with open(args.input, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if rows and not all(data._is_number(c) for c in rows[0]):
            rows = rows[1:]
        try:
            X = np.array(rows, dtype=np.float64).reshape(len(rows), -1)
        except ValueError as exc:
            raise DataError(f"cannot parse features: {exc}") from exc
    else:
        X, _ = data.to_arrays(_load(args))
    if len(X) and X.shape[1] != model.arity:
        raise DataError(f"model expects {model.arity} features, file has {X.shape[1]}")
    scores = ensemble.predict_scores_block(model, X) if len(X) else np.empty((0, 2))
    labels = np.argmax(scores, axis=1)
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["score_0", "score_1", "prediction"])
        for s, label in zip(scores.tolist(), labels.tolist()):
            w.writerow([repr(s[0]), repr(s[1]), label])
    _emit(args, {"output": args.output, "records": int(len(X)),
                 "predicted_positive": int(labels.sum())})


def cmd_evaluate(args, config_doc):
    if config_doc is not None:
        doc = dict(config_doc)
    else:
        doc = {
            "datasets": [{"path": p, "label_column": _label_column(str(args.label_column)),
                          "positive_label": args.positive_label, "partitions": args.partitions}
                         for p in args.data],
            "methods": args.methods, "samplers": args.samplers, "folds": args.folds,
        }
    doc.setdefault("seed", args.seed)
    doc.setdefault("workers", args.workers)
    doc.setdefault("report_format", args.report)
    doc.setdefault("parallel_cells", args.parallel_cells)
    if args.output is not None:
        doc["output"] = args.output
    cfg = experiment.ExperimentConfig.from_dict(doc)
    report = experiment.run_cv(cfg)
    text = report.render(cfg.report_format)
    if cfg.output:
        Path(cfg.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    for cell in report.cells:
        if cell.error:
            log.error("cell %s/%s/%s failed: %s", cell.dataset, cell.method, cell.sampler, cell.error)
    return EXIT_RUNTIME if report.all_failed() else EXIT_OK


def cmd_inspect(args):
    model = ensemble.load_model(args.model)
    _emit(args, ensemble.summary(model), force_json=True)


def _emit(args, doc, force_json=False):
    if args.report == "json" or force_json:
        print(json.dumps(doc, indent=2))
    else:
        for k, v in doc.items():
            print(f"{k}: {json.dumps(v) if isinstance(v, (dict, list)) else v}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config_doc = _apply_config(args, args.config) if args.config else None
        if args.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {args.workers}")
        with use_workers(args.workers):
            if args.command == "evaluate":
                return cmd_evaluate(args, config_doc)
            {"gen": cmd_gen, "balance": cmd_balance, "train": cmd_train, "predict": cmd_predict,
             "inspect": cmd_inspect}[args.command](args)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, PersistenceError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SDDeTEError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
