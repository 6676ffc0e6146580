"""
Experiment matrix: several configurations on one test split, compared to a reference.

Matrix file (YAML):

```yaml
base: experiment.yaml        # optional, relative to this file
output_dir: runs/matrix
reference: complete-full     # default: the first run
runs:
  - name: complete-full
    overrides: {annotation: {condition: complete}, fraction: 1.0}
  - name: weak-4pct
    overrides: {annotation: {condition: weak_tight}, fraction: 0.04}
```
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field, ValidationError

from mocl_seg.core.errors import ComparisonError, ConfigError
from mocl_seg.core.metrics.report import Comparison, MetricsReport, compare_reports
from mocl_seg.core.metrics.stats import WilcoxonMode
from mocl_seg.core.pipeline.config import (
    ExperimentConfig,
    build_config,
    deep_merge,
    read_config_file,
)
from mocl_seg.core.pipeline.report import (
    DEGENERATE_MARK,
    REFERENCE_MARK,
    TABLE_METRICS,
    ResultRow,
    emit_report,
)
from mocl_seg.core.pipeline.runner import load_run_report, run_pipeline, seed_dir
from mocl_seg.core.pipeline.stages import SPLIT_NAME

logger = logging.getLogger(__name__)

MATRIX_NAME = "matrix.json"


class MatrixEntry(BaseModel, frozen=True):
    name: str = Field(min_length=1)
    overrides: dict[str, Any] = Field(default_factory=dict)


class MatrixFile(BaseModel, frozen=True):
    base: Path | dict[str, Any] | None = None
    output_dir: Path = Path("runs/matrix")
    reference: str | None = None
    runs: list[MatrixEntry] = Field(min_length=2)


class MatrixResult(BaseModel):
    rows: list[ResultRow]
    comparisons: list[Comparison]
    reference: str
    artifacts: list[Path] = Field(default_factory=list)


def run_id(index: int, name: str) -> str:
    return f"{index:02d}-{name}"


def load_matrix_config(
    path: Path, overrides: list[str] | None = None
) -> tuple[list[ExperimentConfig], str | None, Path]:
    """
    Expand a matrix file into (configs, reference run name, matrix output dir).

    Each config writes to <output_dir>/<NN>-<name>.

    Raises:
        ConfigError: invalid matrix file or run config
    """
    try:
        matrix = MatrixFile.model_validate(read_config_file(path))
    except ValidationError as e:
        raise ConfigError(f"invalid matrix file {path}: {e.error_count()} error(s); {e}") from None

    if isinstance(matrix.base, Path):
        base_path = matrix.base if matrix.base.is_absolute() else path.parent / matrix.base
        base = read_config_file(base_path)
    else:
        base = dict(matrix.base or {})

    names = [entry.name for entry in matrix.runs]
    if matrix.reference is not None and matrix.reference not in names:
        raise ConfigError(f"reference '{matrix.reference}' is not one of the runs: {names}")

    configs = []
    for index, entry in enumerate(matrix.runs):
        data = deep_merge(base, entry.overrides)
        data["name"] = entry.name
        data["output_dir"] = str(matrix.output_dir / run_id(index, entry.name))
        configs.append(build_config(data, overrides))
    return configs, matrix.reference, matrix.output_dir


def _test_split(config: ExperimentConfig) -> list[str]:
    path = seed_dir(config, config.seeds[0]) / SPLIT_NAME
    split = json.loads(path.read_text(encoding="utf-8"))
    return sorted(split[config.eval_split])


def _p_value_column(
    comparisons: list[Comparison], run_ids: list[str], reference: str
) -> dict[str, dict[str, str]]:
    """run id -> metric -> "Ref." / p-value / "degenerate"."""
    column: dict[str, dict[str, str]] = {rid: {} for rid in run_ids}
    for metric in TABLE_METRICS:
        column[reference][metric] = REFERENCE_MARK
    for comp in comparisons:
        if comp.degenerate or comp.p_value is None:
            column[comp.method_a][comp.metric] = DEGENERATE_MARK
        else:
            column[comp.method_a][comp.metric] = f"{comp.p_value:.6g}"
    return column


def run_matrix(
    configs: list[ExperimentConfig],
    out_dir: Path,
    reference: str | None = None,
    *,
    force: bool = False,
    mode: WilcoxonMode = WilcoxonMode.AUTO,
) -> MatrixResult:
    """
    Run every config, then compare each to the reference on every table metric.

    `reference` is a config name (default: the first config). Splits are prepared
    for all configs first so mismatched test sets fail before any training.

    Raises:
        ComparisonError: fewer than two configs, or the configs' test splits differ
        StageError: a run failed
    """
    if len(configs) < 2:
        raise ComparisonError("a matrix needs at least two configurations")
    run_ids = [c.output_dir.name for c in configs]
    if len(set(run_ids)) != len(run_ids):
        raise ComparisonError(f"configurations share an output directory: {run_ids}")
    names = [c.name for c in configs]
    if reference is not None and reference not in names:
        raise ComparisonError(f"unknown reference '{reference}'")
    ref_index = names.index(reference) if reference is not None else 0
    ref_id = run_ids[ref_index]

    for config in configs:
        run_pipeline(config, force=force, until="prepare")
    expected = _test_split(configs[ref_index])
    for config in configs:
        if _test_split(config) != expected:
            raise ComparisonError(
                f"'{config.name}' evaluates on a different test split than the reference",
                context={"run": config.name, "reference": names[ref_index]},
            )

    for config in configs:
        run_pipeline(config, force=force)

    reports: dict[str, MetricsReport] = {
        rid: load_run_report(c.output_dir) for rid, c in zip(run_ids, configs, strict=True)
    }
    comparisons: list[Comparison] = []
    for metric in TABLE_METRICS:
        if all(metric in r.aggregate for r in reports.values()):
            comparisons += compare_reports(reports, metric, reference=ref_id, mode=mode)
    p_values = _p_value_column(comparisons, run_ids, ref_id)

    rows = [
        ResultRow(
            run=rid,
            method=config.method,
            label=config.label,
            fraction=config.fraction,
            metrics={
                m: reports[rid].aggregate[m].mean if m in reports[rid].aggregate else None
                for m in TABLE_METRICS
            },
            p_values=p_values[rid],
        )
        for rid, config in zip(run_ids, configs, strict=True)
    ]

    artifacts = emit_report(rows, out_dir)
    result = MatrixResult(
        rows=rows, comparisons=comparisons, reference=ref_id, artifacts=artifacts
    )
    matrix_path = out_dir / MATRIX_NAME
    matrix_path.write_text(
        json.dumps(result.model_dump(mode="json"), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    result.artifacts.append(matrix_path)
    logger.info("matrix finished", extra={"runs": len(configs), "reference": ref_id})
    return result
