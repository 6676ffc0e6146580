"""
JSON output adapter for machine consumers.
"""

from __future__ import annotations

import json
from collections import Counter
from typing import TYPE_CHECKING, Any, TextIO

from mocl_seg.cli.output.base import OutputAdapter, OutputFormat

if TYPE_CHECKING:
    from mocl_seg.core.data.models import DatasetManifest
    from mocl_seg.core.metrics.report import Comparison, MetricsReport
    from mocl_seg.core.pipeline.matrix import MatrixResult
    from mocl_seg.core.pipeline.models import RunRecord
    from mocl_seg.core.pipeline.report import ResultRow


class JsonOutput(OutputAdapter):
    format = OutputFormat.JSON

    def __init__(self, stream: TextIO | None = None, indent: int = 2):
        super().__init__(stream=stream, color=False)
        self.indent = indent

    def _dump(self, payload: Any) -> str:
        return json.dumps(payload, indent=self.indent, sort_keys=True, default=str)

    def render_run(self, record: RunRecord) -> str:
        return self._dump(record.model_dump(mode="json"))

    def render_metrics(self, report: MetricsReport) -> str:
        return self._dump(
            {
                "aggregate": {k: v.model_dump() for k, v in report.aggregate.items()},
                "meta": report.meta,
                "images": len(report.per_image),
            }
        )

    def render_comparisons(self, comparisons: list[Comparison]) -> str:
        return self._dump([c.model_dump(mode="json") for c in comparisons])

    def render_rows(self, rows: list[ResultRow]) -> str:
        return self._dump([r.model_dump(mode="json") for r in rows])

    def render_matrix(self, result: MatrixResult) -> str:
        return self._dump(result.model_dump(mode="json"))

    def render_manifest(self, manifest: DatasetManifest) -> str:
        strata = Counter(s.value for s in manifest.strata().values())
        return self._dump(
            {
                "root": str(manifest.root_path),
                "classes": manifest.classes,
                "samples": len(manifest.samples),
                "strata": dict(strata),
            }
        )
