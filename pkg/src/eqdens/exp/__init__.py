"""Experiment harness: training runs, sweeps, and report emission."""

from .harness import (
    MINIMAL_HIDDEN,
    NORM_LABELS,
    ExperimentConfig,
    ExperimentError,
    Experiment2Result,
    Experiment3Result,
    RunRecord,
    SweepResult,
    build_datasets,
    evaluate_checkpoint,
    evaluate_model,
    experiment1,
    experiment1_advisories,
    experiment2,
    experiment3,
    experiment3_advisories,
    plateau_knee,
    train,
)
from .report import (
    ReportError,
    Table,
    emit_csv,
    emit_svg_plot,
    record_series_table,
    record_summary_table,
)

__all__ = [
    "MINIMAL_HIDDEN",
    "NORM_LABELS",
    "ExperimentConfig",
    "ExperimentError",
    "Experiment2Result",
    "Experiment3Result",
    "RunRecord",
    "SweepResult",
    "build_datasets",
    "evaluate_checkpoint",
    "evaluate_model",
    "experiment1",
    "experiment1_advisories",
    "experiment2",
    "experiment3",
    "experiment3_advisories",
    "plateau_knee",
    "train",
    "ReportError",
    "Table",
    "emit_csv",
    "emit_svg_plot",
    "record_series_table",
    "record_summary_table",
]
