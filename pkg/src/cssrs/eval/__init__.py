"""Evaluation: cross-validation, the ablation grid, metrics, ROC, agreement, diagnostics."""

from .ablation import ABLATION_GRID, AblationRow, ablation_row_config, run_ablation
from .agreement import agreement_report, krippendorff_alpha, pairwise_alpha
from .cv import CVResult, cross_validate, fold_config, stratified_folds
from .diagnostics import post_score, sentiment_diagnostics
from .metrics import ConfusionMatrix, MetricsReport, compute_metrics
from .roc import RocCurve, compute_roc

__all__ = [
    "ABLATION_GRID",
    "AblationRow",
    "CVResult",
    "ConfusionMatrix",
    "MetricsReport",
    "RocCurve",
    "ablation_row_config",
    "agreement_report",
    "compute_metrics",
    "compute_roc",
    "cross_validate",
    "fold_config",
    "krippendorff_alpha",
    "pairwise_alpha",
    "post_score",
    "run_ablation",
    "sentiment_diagnostics",
    "stratified_folds",
]
