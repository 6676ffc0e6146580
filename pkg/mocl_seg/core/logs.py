"""
Logging setup.

The CLI emits logs as line-delimited JSON on stderr. Library code only uses
``logging.getLogger(__name__)`` and passes structured fields through ``extra``.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from datetime import datetime, timezone

UTC = timezone.utc
from typing import Any, TextIO

# Attributes every LogRecord has; anything else came in through ``extra``.
_RESERVED = frozenset(
    vars(logging.LogRecord("", 0, "", 0, "", (), None)).keys() | {"message", "asctime"}
)


class JsonLineFormatter(logging.Formatter):
    """Format records as one JSON object per line."""

    def format(self, record: logging.LogRecord) -> str:
        payload: dict[str, Any] = {
            "ts": datetime.fromtimestamp(record.created, UTC).isoformat(),
            "level": record.levelname.lower(),
            "logger": record.name,
            "message": record.getMessage(),
        }
        for key, value in vars(record).items():
            if key not in _RESERVED and not key.startswith("_"):
                payload[key] = value
        if record.exc_info:
            payload["exc"] = self.formatException(record.exc_info)
        return json.dumps(payload, default=str)


def configure_logging(level: str | None = None, stream: TextIO | None = None) -> None:
    """Install the JSON handler on the package logger."""
    level_name = (level or os.environ.get("MOCL_SEG_LOG_LEVEL") or "INFO").upper()

    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(JsonLineFormatter())

    logger = logging.getLogger("mocl_seg")
    for existing in list(logger.handlers):
        logger.removeHandler(existing)
    logger.addHandler(handler)
    logger.setLevel(level_name)
    logger.propagate = False
