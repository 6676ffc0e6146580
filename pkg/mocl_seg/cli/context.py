"""
CLI context and exit codes.
"""

from __future__ import annotations

from enum import IntEnum
from pathlib import Path

from pydantic import BaseModel, Field

from mocl_seg.core.errors import StageError, ValidationError


class ExitCode(IntEnum):
    """CLI exit codes."""

    SUCCESS = 0
    VALIDATION = 2  # Bad config, manifest, arguments or inputs
    STAGE_FAILURE = 3  # A pipeline stage failed


class CliContext(BaseModel):
    """Options shared by the pipeline commands."""

    config_file: Path | None = None
    overrides: list[str] = Field(default_factory=list)
    format: str = "terminal"
    output_file: Path | None = None
    color: bool = True
    force: bool = False

    model_config = {"frozen": True}


def exit_code_for(error: BaseException) -> ExitCode:
    """Map an exception raised by a command to its exit code."""
    if isinstance(error, StageError):
        return ExitCode.STAGE_FAILURE
    if isinstance(error, (ValidationError, FileNotFoundError, ValueError)):
        return ExitCode.VALIDATION
    return ExitCode.STAGE_FAILURE
