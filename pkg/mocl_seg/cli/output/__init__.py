"""
Output adapters for CLI: terminal tables and JSON.
"""

from mocl_seg.cli.output.base import OutputAdapter, OutputFormat, get_output_adapter
from mocl_seg.cli.output.json import JsonOutput
from mocl_seg.cli.output.terminal import TerminalOutput

__all__ = [
    "JsonOutput",
    "OutputAdapter",
    "OutputFormat",
    "TerminalOutput",
    "get_output_adapter",
]
