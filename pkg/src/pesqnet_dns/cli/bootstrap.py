"""Bootstrap utilities for CLI initialization."""

import logging
import sys
from logging import Handler
from pathlib import Path
from typing import List, Optional

from pesqnet_dns.core.settings import RunConfig


def setup_logging(level: str = "INFO", log_file: Optional[Path] = None) -> None:
    """Configure logging for the application.

    Console logs go to stderr so reports on stdout stay clean.

    Args:
        level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional file path for logging
    """
    log_level = getattr(logging, level.upper(), logging.INFO)

    handlers: List[Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )


def setup_environment() -> None:
    """Initialize stream encodings."""
    if sys.stdout.encoding != "utf-8":
        if hasattr(sys.stdout, "reconfigure"):
            sys.stdout.reconfigure(encoding="utf-8")  # type: ignore[attr-defined]


def ensure_directories(config: RunConfig) -> None:
    """Ensure the workspace, checkpoint and output directories exist."""
    for directory in (Path(config.workspace), config.checkpoints, config.outputs):
        directory.mkdir(parents=True, exist_ok=True)
