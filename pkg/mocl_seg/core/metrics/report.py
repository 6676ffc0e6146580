"""
Split evaluation and report comparison.

Per image and class the report holds "<class>.<metric>"; the class-free "<metric>"
keys are macro averages over the classes that define the metric for that image.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, Field

from mocl_seg.core.data.manifest import load_sample
from mocl_seg.core.data.masks import instances_from_mask
from mocl_seg.core.data.models import DatasetManifest
from mocl_seg.core.errors import ComparisonError, DegenerateSampleError, UndefinedMetricError
from mocl_seg.core.metrics.instances import aji, instance_f1, instances_from_prob
from mocl_seg.core.metrics.overlap import best_f1, dice, iou, pixel_auc, precision, recall
from mocl_seg.core.metrics.stats import WilcoxonMode, wilcoxon_signed_rank
from mocl_seg.core.model.inference import predict
from mocl_seg.core.model.state import ModelState

logger = logging.getLogger(__name__)

METRIC_NAMES = (
    "dice",
    "auc",
    "recall",
    "precision",
    "best_f1",
    "iou",
    "aji",
    "f1",
    "instance_precision",
    "instance_recall",
)


class MetricConfig(BaseModel, frozen=True):
    """Post-processing and matching parameters for evaluation."""

    threshold: float = Field(default=0.5, gt=0, lt=1)
    min_size: int = Field(default=10, ge=0)
    fill_holes: bool = True
    iou_thresh: float = Field(default=0.5, gt=0, lt=1)
    best_f1_step: float = Field(default=0.01, gt=0, lt=1)
    wilcoxon_mode: WilcoxonMode = WilcoxonMode.AUTO


class AggregateStat(BaseModel, frozen=True):
    mean: float
    std: float
    n: int


class Comparison(BaseModel, frozen=True):
    method_a: str
    method_b: str
    metric: str
    p_value: float | None = None
    statistic: float | None = None
    n: int = 0
    degenerate: bool = False


class MetricsReport(BaseModel):
    """Per-image metrics, aggregates and paired comparisons."""

    per_image: dict[str, dict[str, float]] = Field(default_factory=dict)
    aggregate: dict[str, AggregateStat] = Field(default_factory=dict)
    comparisons: list[Comparison] = Field(default_factory=list)
    meta: dict[str, Any] = Field(default_factory=dict)

    def recompute_aggregate(self) -> None:
        values: dict[str, list[float]] = {}
        for image_id in sorted(self.per_image):
            for name, value in self.per_image[image_id].items():
                values.setdefault(name, []).append(value)
        self.aggregate = {
            name: AggregateStat(mean=float(np.mean(v)), std=float(np.std(v)), n=len(v))
            for name, v in sorted(values.items())
        }

    def values(self, metric: str) -> dict[str, float]:
        return {i: m[metric] for i, m in self.per_image.items() if metric in m}

    def save(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return path

    @classmethod
    def load(cls, path: Path) -> MetricsReport:
        return cls.model_validate(json.loads(path.read_text(encoding="utf-8")))


def score_class(
    prob: np.ndarray, gt_mask: np.ndarray, gt_instances: np.ndarray, config: MetricConfig
) -> dict[str, float]:
    """All metrics for one class map of one image; AUC is left out when undefined."""
    pred_mask = prob >= config.threshold
    pred_instances = instances_from_prob(
        prob, config.threshold, config.min_size, fill_holes=config.fill_holes
    )
    f1, inst_p, inst_r = instance_f1(pred_instances, gt_instances, config.iou_thresh)
    scores = {
        "dice": dice(pred_mask, gt_mask),
        "iou": iou(pred_mask, gt_mask),
        "precision": precision(pred_mask, gt_mask),
        "recall": recall(pred_mask, gt_mask),
        "best_f1": best_f1(prob, gt_mask, config.best_f1_step)[0],
        "aji": aji(pred_instances, gt_instances),
        "f1": f1,
        "instance_precision": inst_p,
        "instance_recall": inst_r,
    }
    try:
        scores["auc"] = pixel_auc(prob, gt_mask)
    except UndefinedMetricError:
        pass
    return scores


def evaluate_split(
    state: ModelState,
    manifest: DatasetManifest,
    sample_ids: list[str],
    config: MetricConfig | None = None,
) -> MetricsReport:
    """
    Predict and score every sample against its expert masks.

    Raises:
        ValueError: empty split
    """
    config = config or MetricConfig()
    if not sample_ids:
        raise ValueError("cannot evaluate an empty split")

    report = MetricsReport(meta={"classes": state.class_names})
    for sample_id in sorted(sample_ids):
        sample = load_sample(manifest, sample_id)
        output = predict(state, sample.image)
        row: dict[str, float] = {}
        for c, name in enumerate(state.class_names):
            gt_mask = sample.class_masks.get(name, np.zeros(sample.shape, dtype=np.uint8))
            gt_instances = sample.instance_maps.get(name)
            if gt_instances is None:
                gt_instances = instances_from_mask(gt_mask)
            scores = score_class(output.prob[..., c], gt_mask, gt_instances, config)
            row.update({f"{name}.{k}": v for k, v in scores.items()})
        for metric in METRIC_NAMES:
            per_class = [row[f"{n}.{metric}"] for n in state.class_names if f"{n}.{metric}" in row]
            if per_class:
                row[metric] = float(np.mean(per_class))
        report.per_image[sample_id] = dict(sorted(row.items()))

    report.recompute_aggregate()
    logger.info(
        "evaluated split",
        extra={
            "images": len(sample_ids),
            "dice": report.aggregate["dice"].mean if "dice" in report.aggregate else None,
        },
    )
    return report


def compare_reports(
    reports: dict[str, MetricsReport],
    metric: str,
    reference: str | None = None,
    mode: WilcoxonMode = WilcoxonMode.AUTO,
) -> list[Comparison]:
    """
    Wilcoxon tests of every report against the reference (default: the first).

    Raises:
        ComparisonError: fewer than two reports, unknown reference, or differing image sets
    """
    if len(reports) < 2:
        raise ComparisonError("need at least two reports to compare")
    names = list(reports)
    reference = reference or names[0]
    if reference not in reports:
        raise ComparisonError(f"unknown reference '{reference}'")

    ref_ids = set(reports[reference].per_image)
    comparisons: list[Comparison] = []
    for name in names:
        if name == reference:
            continue
        if set(reports[name].per_image) != ref_ids:
            raise ComparisonError(
                f"'{name}' and '{reference}' were evaluated on different images",
                context={"method": name, "reference": reference},
            )
        a_vals = reports[name].values(metric)
        b_vals = reports[reference].values(metric)
        common = sorted(set(a_vals) & set(b_vals))
        if not common:
            raise ComparisonError(f"metric '{metric}' missing from '{name}' or '{reference}'")
        try:
            result = wilcoxon_signed_rank(
                [a_vals[i] for i in common], [b_vals[i] for i in common], mode
            )
        except DegenerateSampleError:
            comparisons.append(
                Comparison(
                    method_a=name, method_b=reference, metric=metric, n=0, degenerate=True
                )
            )
            continue
        comparisons.append(
            Comparison(
                method_a=name,
                method_b=reference,
                metric=metric,
                p_value=result.p_value,
                statistic=result.statistic,
                n=result.n,
            )
        )
    return comparisons
