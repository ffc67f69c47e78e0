"""Smart-data decision-tree ensembles for imbalanced binary classification."""

__version__ = "0.1.0"

from .data import LabeledPoint, class_stats, load_csv, stratified_kfold, synth_two_gaussian  # noqa: E402
from .ensemble import DeTEParams, fit_sd_dete, load_model, predict, predict_scores, save_model  # noqa: E402
from .ptable import PTable, pfilter, pmap, punion, pzip, repartition, use_workers  # noqa: E402

__all__ = [
    "DeTEParams", "LabeledPoint", "PTable", "class_stats", "fit_sd_dete", "load_csv", "load_model",
    "pfilter", "pmap", "predict", "predict_scores", "punion", "pzip", "repartition", "save_model",
    "stratified_kfold", "synth_two_gaussian", "use_workers",
]
