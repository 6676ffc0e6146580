"""
Pixel and instance metrics, paired statistics and evaluation reports.
"""

from mocl_seg.core.metrics.instances import aji, instance_f1, instances_from_prob, iou_matrix
from mocl_seg.core.metrics.overlap import best_f1, dice, iou, pixel_auc, precision, recall
from mocl_seg.core.metrics.report import (
    METRIC_NAMES,
    AggregateStat,
    Comparison,
    MetricConfig,
    MetricsReport,
    compare_reports,
    evaluate_split,
    score_class,
)
from mocl_seg.core.metrics.stats import WilcoxonMode, WilcoxonResult, wilcoxon_signed_rank

__all__ = [
    "METRIC_NAMES",
    "AggregateStat",
    "Comparison",
    "MetricConfig",
    "MetricsReport",
    "WilcoxonMode",
    "WilcoxonResult",
    "aji",
    "best_f1",
    "compare_reports",
    "dice",
    "evaluate_split",
    "instance_f1",
    "instances_from_prob",
    "iou",
    "iou_matrix",
    "pixel_auc",
    "precision",
    "recall",
    "score_class",
    "wilcoxon_signed_rank",
]
