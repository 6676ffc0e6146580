"""
Terminal output adapter.

Plain aligned tables, with ANSI colors when writing to a TTY.
"""

from __future__ import annotations

import sys
from collections import Counter
from typing import TYPE_CHECKING, TextIO

from mocl_seg.cli.output.base import OutputAdapter, OutputFormat
from mocl_seg.core.pipeline.models import StageStatus
from mocl_seg.core.pipeline.report import COLUMN_NAMES, TABLE_METRICS

if TYPE_CHECKING:
    from mocl_seg.core.data.models import DatasetManifest
    from mocl_seg.core.metrics.report import Comparison, MetricsReport
    from mocl_seg.core.pipeline.models import RunRecord
    from mocl_seg.core.pipeline.report import ResultRow


def _supports_unicode() -> bool:
    try:
        "✓".encode(sys.stdout.encoding or "utf-8")
        return True
    except (UnicodeEncodeError, LookupError):
        return False


STATUS_STYLES = {
    StageStatus.EXECUTED: "green",
    StageStatus.SKIPPED: "dim",
    StageStatus.DISABLED: "dim",
    StageStatus.PROVIDED: "cyan",
    StageStatus.FAILED: "bold red",
}

STATUS_SYMBOLS_UNICODE = {
    StageStatus.EXECUTED: "✓",
    StageStatus.SKIPPED: "•",
    StageStatus.DISABLED: "-",
    StageStatus.PROVIDED: "↳",
    StageStatus.FAILED: "✖",
}

STATUS_SYMBOLS_ASCII = {
    StageStatus.EXECUTED: "OK",
    StageStatus.SKIPPED: "*",
    StageStatus.DISABLED: "-",
    StageStatus.PROVIDED: ">",
    StageStatus.FAILED: "X",
}

SIGNIFICANCE = 0.05


def _fmt(value: float | None, digits: int = 4) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


class TerminalOutput(OutputAdapter):
    format = OutputFormat.TERMINAL

    def __init__(self, stream: TextIO | None = None, color: bool = True):
        super().__init__(stream=stream, color=color)
        self._use_ansi = color and self._is_tty()
        self._symbols = STATUS_SYMBOLS_UNICODE if _supports_unicode() else STATUS_SYMBOLS_ASCII

    def _is_tty(self) -> bool:
        return hasattr(self.stream, "isatty") and self.stream.isatty()

    def render_run(self, record: RunRecord) -> str:
        lines = [self._style(f"{record.name}  [{record.config_hash[:12]}]", "bold")]
        for stage in record.stages:
            symbol = self._style(self._symbols[stage.status], STATUS_STYLES[stage.status])
            line = f"  {symbol} seed {stage.seed:<6} {stage.name:<9} {stage.status.value}"
            if stage.error is not None:
                line += f"  {stage.error}"
            lines.append(line)
        if record.metrics_path is not None:
            lines.append(f"Metrics: {record.metrics_path}")
        return "\n".join(lines)

    def render_metrics(self, report: MetricsReport) -> str:
        lines = [self._style(f"{'metric':<28} {'mean':>8} {'std':>8} {'n':>5}", "bold")]
        for name, stat in report.aggregate.items():
            style = "bold" if "." not in name else ""
            row = f"{name:<28} {stat.mean:>8.4f} {stat.std:>8.4f} {stat.n:>5d}"
            lines.append(self._style(row, style) if style else row)
        if report.meta.get("label_noise") == "synthetic":
            lines.append(self._style("labels: synthetic student noise", "yellow"))
        return "\n".join(lines)

    def render_comparisons(self, comparisons: list[Comparison]) -> str:
        if not comparisons:
            return "No comparisons."
        lines = [
            self._style(
                f"{'method':<24} {'reference':<24} {'metric':<10} {'n':>4} {'p':>10}", "bold"
            )
        ]
        for comp in comparisons:
            if comp.degenerate or comp.p_value is None:
                p = self._style(f"{'degenerate':>10}", "dim")
            else:
                p = f"{comp.p_value:>10.4g}"
                if comp.p_value < SIGNIFICANCE:
                    p = self._style(p, "green")
            lines.append(
                f"{comp.method_a:<24} {comp.method_b:<24} {comp.metric:<10} {comp.n:>4} {p}"
            )
        return "\n".join(lines)

    def render_rows(self, rows: list[ResultRow]) -> str:
        columns = [COLUMN_NAMES.get(m, m) for m in TABLE_METRICS]
        header = f"{'label':<22} {'method':<14} {'fraction':>8} " + " ".join(
            f"{c:>9}" for c in columns
        )
        lines = [self._style(header, "bold")]
        for row in rows:
            values = " ".join(f"{_fmt(row.metrics.get(m)):>9}" for m in TABLE_METRICS)
            line = f"{row.label:<22} {row.method:<14} {row.fraction:>8.3f} {values}"
            if row.p_values:
                line += f"  [{self._p_summary(row)}]"
            lines.append(line)
        return "\n".join(lines)

    def _p_summary(self, row: ResultRow) -> str:
        marks = set(row.p_values.values())
        if len(marks) == 1:
            return marks.pop()
        parts = [f"{COLUMN_NAMES.get(m, m)}={row.p_values[m]}" for m in row.p_values]
        return " ".join(parts)

    def render_manifest(self, manifest: DatasetManifest) -> str:
        strata = Counter(s.value for s in manifest.strata().values())
        lines = [
            self._style(f"{len(manifest.samples)} samples in {manifest.root_path}", "bold"),
            f"classes: {', '.join(manifest.classes)}",
            "strata: " + ", ".join(f"{k}={v}" for k, v in sorted(strata.items())),
        ]
        return "\n".join(lines)

    def _style(self, text: str, style: str) -> str:
        if not self._use_ansi:
            return text
        codes = {
            "bold": "\033[1m",
            "dim": "\033[2m",
            "red": "\033[31m",
            "green": "\033[32m",
            "yellow": "\033[33m",
            "bold red": "\033[1;31m",
        }
        code = codes.get(style, "")
        return f"{code}{text}\033[0m" if code else text
