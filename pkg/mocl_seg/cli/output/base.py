"""
Output adapter base classes.
"""

from __future__ import annotations

import sys
from abc import ABC, abstractmethod
from enum import Enum
from typing import TYPE_CHECKING, TextIO

if TYPE_CHECKING:
    from mocl_seg.core.data.models import DatasetManifest
    from mocl_seg.core.metrics.report import Comparison, MetricsReport
    from mocl_seg.core.pipeline.matrix import MatrixResult
    from mocl_seg.core.pipeline.models import RunRecord
    from mocl_seg.core.pipeline.report import ResultRow


class OutputFormat(Enum):
    """Supported output formats."""

    TERMINAL = "terminal"
    JSON = "json"


class OutputAdapter(ABC):
    """Renders command results."""

    format: OutputFormat

    def __init__(self, stream: TextIO | None = None, color: bool = True):
        self.stream = stream or sys.stdout
        self.color = color

    @abstractmethod
    def render_run(self, record: RunRecord) -> str: ...

    @abstractmethod
    def render_metrics(self, report: MetricsReport) -> str: ...

    @abstractmethod
    def render_comparisons(self, comparisons: list[Comparison]) -> str: ...

    @abstractmethod
    def render_rows(self, rows: list[ResultRow]) -> str: ...

    @abstractmethod
    def render_manifest(self, manifest: DatasetManifest) -> str: ...

    def render_matrix(self, result: MatrixResult) -> str:
        return "\n".join(
            [self.render_rows(result.rows), self.render_comparisons(result.comparisons)]
        )

    def write(self, content: str) -> None:
        self.stream.write(content)
        if not content.endswith("\n"):
            self.stream.write("\n")
        self.stream.flush()


def get_output_adapter(
    format: OutputFormat | str,
    stream: TextIO | None = None,
    color: bool = True,
) -> OutputAdapter:
    """Get an output adapter by format."""
    if isinstance(format, str):
        format = OutputFormat(format)

    if format == OutputFormat.TERMINAL:
        from mocl_seg.cli.output.terminal import TerminalOutput

        return TerminalOutput(stream=stream, color=color)
    from mocl_seg.cli.output.json import JsonOutput

    return JsonOutput(stream=stream)
