"""
Experiment orchestration: configuration, stages, matrix runs and result reports.
"""

from mocl_seg.core.pipeline.config import (
    AnnotatorTier,
    CheckpointStage,
    Condition,
    ExperimentConfig,
    config_hash,
    load_config,
)
from mocl_seg.core.pipeline.matrix import MatrixResult, load_matrix_config, run_matrix
from mocl_seg.core.pipeline.models import RunRecord, StageRecord, StageStatus
from mocl_seg.core.pipeline.report import ResultRow, emit_report, rows_from_runs
from mocl_seg.core.pipeline.runner import load_run_report, run_pipeline
from mocl_seg.core.pipeline.stages import STAGE_NAMES

__all__ = [
    "STAGE_NAMES",
    "AnnotatorTier",
    "CheckpointStage",
    "Condition",
    "ExperimentConfig",
    "MatrixResult",
    "ResultRow",
    "RunRecord",
    "StageRecord",
    "StageStatus",
    "config_hash",
    "emit_report",
    "load_config",
    "load_matrix_config",
    "load_run_report",
    "rows_from_runs",
    "run_matrix",
    "run_pipeline",
]
