"""Metrics and evaluation protocols."""

from .metrics import (auc_micro, balanced_accuracy, best_threshold_bacc, confusion_matrix,
                      roc_auc)
from .protocols import (EvalReport, closed_set, noise_grid, one_vs_rest, open_set,
                        read_grid_csv, write_grid_csv)

__all__ = [
    "EvalReport", "auc_micro", "balanced_accuracy", "best_threshold_bacc", "closed_set",
    "confusion_matrix", "noise_grid", "one_vs_rest", "open_set", "read_grid_csv", "roc_auc",
    "write_grid_csv",
]
