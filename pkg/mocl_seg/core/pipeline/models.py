"""
Run bookkeeping models.
"""

from __future__ import annotations

import json
from datetime import datetime, timezone

UTC = timezone.utc
from enum import Enum
from pathlib import Path

from pydantic import BaseModel, Field

from mocl_seg.core.errors import ErrorRecord


def _utc_now() -> datetime:
    return datetime.now(UTC)


class StageStatus(Enum):
    EXECUTED = "executed"
    SKIPPED = "skipped"
    DISABLED = "disabled"
    PROVIDED = "provided"  # replaced by an existing checkpoint
    FAILED = "failed"


class StageRecord(BaseModel, frozen=True):
    """Outcome of one stage for one seed."""

    name: str
    seed: int
    status: StageStatus
    started_at: datetime | None = None
    finished_at: datetime | None = None
    artifacts: list[str] = Field(default_factory=list)
    error: ErrorRecord | None = None


class RunRecord(BaseModel):
    """Everything a finished (or failed) pipeline run leaves behind."""

    name: str
    config_hash: str
    output_dir: Path
    started_at: datetime = Field(default_factory=_utc_now)
    finished_at: datetime | None = None
    stages: list[StageRecord] = Field(default_factory=list)
    environment: dict[str, str] = Field(default_factory=dict)
    metrics_path: Path | None = None

    @property
    def failed(self) -> bool:
        return any(s.status is StageStatus.FAILED for s in self.stages)

    def executed(self, seed: int | None = None) -> list[str]:
        """Names of the stages that ran (optionally for one seed)."""
        return [
            s.name
            for s in self.stages
            if s.status is StageStatus.EXECUTED and (seed is None or s.seed == seed)
        ]

    def save(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(self.model_dump(mode="json"), indent=2) + "\n", encoding="utf-8"
        )
        return path

    @classmethod
    def load(cls, path: Path) -> RunRecord:
        return cls.model_validate(json.loads(path.read_text(encoding="utf-8")))
