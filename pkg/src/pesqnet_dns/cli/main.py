"""CLI entry point: ``pesqnet-dns <command> [flags]``."""

import json
import logging
import sys
from typing import Dict, List, Optional, Type

from rich.console import Console

from pesqnet_dns import __version__
from pesqnet_dns.cli.bootstrap import ensure_directories, setup_environment, setup_logging
from pesqnet_dns.cli.commands import COMMAND_HANDLERS
from pesqnet_dns.core.settings import COMMANDS, RunConfig
from pesqnet_dns.error_handling import (
    ConfigConflictError,
    ConfigValidationError,
    MissingPrerequisiteError,
    PesqnetDnsError,
    report_error,
)

logger = logging.getLogger(__name__)

EXIT_CODES: Dict[Type[PesqnetDnsError], int] = {
    ConfigValidationError: 2,
    MissingPrerequisiteError: 3,
    ConfigConflictError: 4,
}

USAGE = f"""usage: pesqnet-dns <command> [--config FILE] [flags]

commands: {", ".join(COMMANDS)}
Run 'pesqnet-dns <command> --help' for the flags of a command."""


def exit_code_for(error: PesqnetDnsError) -> int:
    """Exit code of an error class (1 unless listed in EXIT_CODES)."""
    for cls, code in EXIT_CODES.items():
        if isinstance(error, cls):
            return code
    return 1


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code.

    Failures print a single JSON line on stderr.
    """
    if argv is None:
        argv = sys.argv[1:]
    argv = list(argv)

    if "--version" in argv or "-v" in argv:
        print(f"pesqnet-dns {__version__}")
        return 0
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE)
        return 0 if argv else 2

    command, rest = argv[0], argv[1:]
    try:
        config = RunConfig.load(rest)
        setup_environment()
        log_file = config.resolve(config.log_file) if config.log_file else None
        setup_logging(config.log_level, log_file)
        config.validate_for(command)
        ensure_directories(config)
        COMMAND_HANDLERS[command](config, Console())
        return 0

    except KeyboardInterrupt:
        print("\n\nInterrupted by user.", file=sys.stderr)
        return 130
    except PesqnetDnsError as e:
        logger.debug("%s failed", command, exc_info=True)
        print(e.to_line(), file=sys.stderr)
        return exit_code_for(e)
    except Exception as e:
        report_error(e, component="cli", context_name="command", context_data={"command": command})
        payload = {"error": "internal_error", "message": str(e), "context": {"command": command}}
        print(json.dumps(payload, default=str, sort_keys=True), file=sys.stderr)
        return 1
