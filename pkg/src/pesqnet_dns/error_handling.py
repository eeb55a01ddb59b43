"""Centralized error handling utilities for pesqnet-dns.

This module provides the exception hierarchy shared by every pipeline stage and
a unified interface for error reporting and logging.
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union


class ErrorLevel(str, Enum):
    """Error severity levels for logging."""

    INFO = "info"
    WARNING = "warning"
    ERROR = "error"


class PesqnetDnsError(Exception):
    """Base class for all pipeline errors.

    Attributes:
        code: Short machine-readable error code.
        context: Structured details (paths, ids, captured output).
    """

    code: str = "pipeline_error"

    def __init__(self, message: str, **context: Any) -> None:
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = context

    def to_line(self) -> str:
        """Render as a single machine-parsable JSON line."""
        payload = {"error": self.code, "message": self.message, "context": self.context}
        return json.dumps(payload, default=str, sort_keys=True)


class SignalError(PesqnetDnsError, ValueError):
    """Invalid signal, spectrogram or tensor shape."""

    code = "signal_error"


class AudioFormatError(PesqnetDnsError, ValueError):
    """WAV file with an unsupported sample rate, channel count or content."""

    code = "audio_format_error"


class CorpusError(PesqnetDnsError):
    """Manifest or corpus problem; ``context['missing']`` lists absent paths."""

    code = "corpus_error"


class ConfigValidationError(PesqnetDnsError, ValueError):
    """Run configuration failed validation; ``problems`` lists every failure."""

    code = "config_invalid"

    def __init__(self, problems: Iterable[str]) -> None:
        self.problems: List[str] = list(problems)
        super().__init__(
            f"{len(self.problems)} configuration problem(s): " + "; ".join(self.problems),
            problems=self.problems,
        )


class ConfigConflictError(PesqnetDnsError):
    """An artifact directory already holds a different resolved config."""

    code = "config_conflict"


class MissingPrerequisiteError(PesqnetDnsError):
    """A later phase was started before the artifacts it needs exist."""

    code = "missing_prerequisite"


class OracleError(PesqnetDnsError):
    """External quality tool missing, failing, timing out or unparsable."""

    code = "oracle_error"


class CheckpointError(PesqnetDnsError):
    """Checkpoint archive corrupted, of the wrong kind, version or config."""

    code = "checkpoint_error"


class ArtifactWriteError(PesqnetDnsError):
    """Report, curve or history file could not be written."""

    code = "artifact_write_error"


class TrainingDivergenceError(PesqnetDnsError):
    """Non-finite loss or gradient encountered during training."""

    code = "training_diverged"


class ProtocolViolationError(PesqnetDnsError):
    """A frozen model changed during an alternating training epoch."""

    code = "protocol_violation"


def report_error(
    exception: Exception,
    component: str,
    context_name: Optional[str] = None,
    context_data: Optional[Dict[str, Any]] = None,
    tags: Optional[Dict[str, str]] = None,
    level: ErrorLevel = ErrorLevel.ERROR,
) -> None:
    """Report an exception with standardized logging and context.

    Args:
        exception: The exception to report
        component: Component name for logging (e.g., "corpus", "stage2")
        context_name: Optional context name (e.g., "file_error", "oracle_call")
        context_data: Optional dictionary of context data
        tags: Optional additional tags (for logging extra context)
        level: Error severity level
    """
    logger = logging.getLogger(component)
    log_method = getattr(logger, level.value, logger.error)

    data = dict(context_data or {})
    if isinstance(exception, PesqnetDnsError):
        data.setdefault("error_code", exception.code)
        data.update({k: v for k, v in exception.context.items() if k not in data})

    extra_data = {"context": context_name, "data": data, "tags": tags}

    try:
        log_method(
            f"Error in {component}: {exception}",
            exc_info=True,
            extra=extra_data,
        )
    except Exception:
        # Logging must never take the pipeline down with it
        pass


def report_file_error(
    exception: Exception,
    file_path: Union[str, Path],
    operation: str = "read",
    additional_context: Optional[Dict[str, Any]] = None,
) -> None:
    """Report file-related errors with standardized context.

    Args:
        exception: The exception that occurred
        file_path: Path to the file
        operation: The operation that failed (read, write, parse, etc.)
        additional_context: Any additional context data
    """
    context_data = {
        "file_path": str(file_path),
        "operation": operation,
    }

    if additional_context:
        context_data.update(additional_context)

    report_error(
        exception=exception,
        component="file_handler",
        context_name="file_error",
        context_data=context_data,
        tags={"operation": operation},
    )


def report_configuration_error(
    exception: Exception,
    config_file: Optional[Union[str, Path]] = None,
    config_section: Optional[str] = None,
    additional_context: Optional[Dict[str, Any]] = None,
) -> None:
    """Report configuration-related errors.

    Args:
        exception: The configuration exception
        config_file: Path to the configuration file
        config_section: Configuration section that failed
        additional_context: Additional context data
    """
    context_data = {
        "config_file": str(config_file) if config_file else None,
        "config_section": config_section,
    }

    if additional_context:
        context_data.update(additional_context)

    report_error(
        exception=exception,
        component="configuration",
        context_name="config_error",
        context_data=context_data,
        tags={"error_type": "configuration"},
    )
