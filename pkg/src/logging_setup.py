"""
Logging Setup Module

Configures the root logger once per process: JSON records through
python-json-logger or plain text with the timestamp/name/level layout.
"""

import logging
import sys
from typing import Optional

from pythonjsonlogger import jsonlogger

TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
JSON_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"
FORMATS = ("json", "text")


def setup_logging(level: str = "INFO", fmt: str = "text", stream: Optional[object] = None) -> logging.Logger:
    """
    Configure application logging.

    Replaces any handlers already on the root logger so repeated calls
    (one per CLI invocation in tests) do not duplicate records.

    Args:
        level: Level name (DEBUG, INFO, WARNING, ERROR)
        fmt: "json" or "text"
        stream: Target stream, stderr by default

    Returns:
        The root logger

    Raises:
        ValueError: Unknown level or format
    """
    if fmt not in FORMATS:
        raise ValueError(f"Unknown log format: {fmt}")
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise ValueError(f"Unknown log level: {level}")

    handler = logging.StreamHandler(stream or sys.stderr)
    if fmt == "json":
        handler.setFormatter(jsonlogger.JsonFormatter(JSON_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(TEXT_FORMAT))

    root = logging.getLogger()
    for old in list(root.handlers):
        root.removeHandler(old)
    root.addHandler(handler)
    root.setLevel(numeric)
    logging.getLogger("matplotlib").setLevel(max(numeric, logging.WARNING))
    return root
