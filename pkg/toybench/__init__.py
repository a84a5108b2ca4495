"""
Synthetic datasets, desk-scale metrics and trend experiments.
"""
from .datasets import make_pairs_dataset, make_template_dataset, make_majority_dataset
from .metrics import REPORT_COLUMNS, MetricsReport, evaluate
from .experiments import (
    TrendKind,
    TrendConfig,
    TrendCell,
    build_cells,
    run_cell,
    run_trend_experiment,
    reports_frame,
    purity_accuracy_table,
    selection_accuracy,
)

__all__ = [
    'make_pairs_dataset',
    'make_template_dataset',
    'make_majority_dataset',
    'REPORT_COLUMNS',
    'MetricsReport',
    'evaluate',
    'TrendKind',
    'TrendConfig',
    'TrendCell',
    'build_cells',
    'run_cell',
    'run_trend_experiment',
    'reports_frame',
    'purity_accuracy_table',
    'selection_accuracy',
]
