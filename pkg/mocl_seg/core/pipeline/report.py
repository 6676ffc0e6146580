"""
Result tables and plots.

results_table.csv has a fixed column order; results_table.json additionally carries
the run id and the Wilcoxon column of each metric ("Ref.", a p-value or
"degenerate"). Plots put the training fraction on the x axis, one line per
(label, method).
"""

from __future__ import annotations

import json
import logging
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
from pydantic import BaseModel, Field  # noqa: E402

from mocl_seg.core.pipeline.runner import load_run_report  # noqa: E402

logger = logging.getLogger(__name__)

TABLE_METRICS = ("dice", "auc", "recall", "precision", "best_f1", "iou", "aji")
COLUMN_NAMES = {"best_f1": "bestF1"}
CSV_COLUMNS = ("method", "label", "fraction") + tuple(COLUMN_NAMES.get(m, m) for m in TABLE_METRICS)
REFERENCE_MARK = "Ref."
DEGENERATE_MARK = "degenerate"

TABLE_JSON = "results_table.json"
TABLE_CSV = "results_table.csv"
PLOTS_DIR = "plots"


class ResultRow(BaseModel, frozen=True):
    """One configuration's seed-averaged scores."""

    run: str
    method: str
    label: str
    fraction: float
    metrics: dict[str, float | None] = Field(default_factory=dict)
    p_values: dict[str, str] = Field(default_factory=dict)

    @property
    def key(self) -> tuple[str, str, float]:
        return self.label, self.method, self.fraction


def rows_from_runs(run_dirs: Sequence[Path]) -> list[ResultRow]:
    """Rows of finished runs, read from their seed-averaged metrics.json."""
    rows: list[ResultRow] = []
    for run_dir in run_dirs:
        report = load_run_report(run_dir)
        rows.append(
            ResultRow(
                run=run_dir.name,
                method=str(report.meta.get("method", "unknown")),
                label=str(report.meta.get("label", "unknown")),
                fraction=float(report.meta.get("fraction", 1.0)),
                metrics={
                    m: report.aggregate[m].mean if m in report.aggregate else None
                    for m in TABLE_METRICS
                },
            )
        )
    return rows


def results_frame(rows: Sequence[ResultRow]) -> pd.DataFrame:
    records = [
        {
            "method": row.method,
            "label": row.label,
            "fraction": row.fraction,
            **{COLUMN_NAMES.get(m, m): row.metrics.get(m) for m in TABLE_METRICS},
        }
        for row in rows
    ]
    return pd.DataFrame.from_records(records, columns=list(CSV_COLUMNS))


def _plot_metric(frame: pd.DataFrame, column: str, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for (label, method), group in frame.groupby(["label", "method"], sort=True):
        group = group.sort_values("fraction")
        ax.plot(group["fraction"], group[column], marker="o", label=f"{label} / {method}")
    ax.set_xlabel("training fraction")
    ax.set_ylabel(column)
    ax.set_title(column)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def emit_report(rows: Sequence[ResultRow], out_dir: Path) -> list[Path]:
    """
    Write results_table.json, results_table.csv and plots/<metric>.png.

    Raises:
        ValueError: no rows
        OSError: out_dir not writable
    """
    if not rows:
        raise ValueError("cannot emit a report without completed runs")
    out_dir.mkdir(parents=True, exist_ok=True)

    json_path = out_dir / TABLE_JSON
    json_path.write_text(
        json.dumps([row.model_dump(mode="json") for row in rows], indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    frame = results_frame(rows)
    csv_path = out_dir / TABLE_CSV
    frame.to_csv(csv_path, index=False, float_format="%.6f", lineterminator="\n")

    plots_dir = out_dir / PLOTS_DIR
    plots_dir.mkdir(exist_ok=True)
    paths = [json_path, csv_path]
    for metric in TABLE_METRICS:
        column = COLUMN_NAMES.get(metric, metric)
        if frame[column].notna().any():
            paths.append(_plot_metric(frame, column, plots_dir / f"{metric}.png"))
    logger.info("wrote report", extra={"rows": len(rows), "out": str(out_dir)})
    return paths
