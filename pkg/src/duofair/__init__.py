"""Training engine for classifiers and score functions that stay fair both
between and within sensitive groups, with exact auditing of every reported
fairness quantity."""

from .data import (Dataset, SplitSpec, Standardizer, load_dataset,
                   load_saved_dataset, make_synthetic, save_dataset, split)
from .errors import DuofairError
from .metrics import (CrossTable, FairnessReport, accuracy_metrics,
                      bgf_metrics, build_report, cross_table, dwgf_value,
                      kendall_tau, predictions, wgf_value)
from .models import CrossEntropy, Model, init, n_params, objective_gradient, score
from .penalties import (PenaltySpec, ReferenceModel, bgf_surrogate, hinge,
                        kendall_surrogate, make_bgf, make_kendall, make_wgf,
                        wgf_surrogate)
from .repair import GroupQuantileMap, MassagingPlan, fit_quantile_repair, massage
from .training import (OptimizerConfig, RunResult, SweepGrid, SweepResult,
                       sweep, train_constrained, train_unconstrained,
                       write_run_dir)

__version__ = "0.1.0"

__all__ = [
    "Dataset", "SplitSpec", "Standardizer", "load_dataset",
    "load_saved_dataset", "make_synthetic", "save_dataset", "split",
    "DuofairError",
    "CrossTable", "FairnessReport", "accuracy_metrics", "bgf_metrics",
    "build_report", "cross_table", "dwgf_value", "kendall_tau",
    "predictions", "wgf_value",
    "CrossEntropy", "Model", "init", "n_params", "objective_gradient", "score",
    "PenaltySpec", "ReferenceModel", "bgf_surrogate", "hinge",
    "kendall_surrogate", "make_bgf", "make_kendall", "make_wgf",
    "wgf_surrogate",
    "GroupQuantileMap", "MassagingPlan", "fit_quantile_repair", "massage",
    "OptimizerConfig", "RunResult", "SweepGrid", "SweepResult", "sweep",
    "train_constrained", "train_unconstrained", "write_run_dir",
    "__version__",
]
