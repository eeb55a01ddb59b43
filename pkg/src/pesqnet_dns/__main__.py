#!/usr/bin/env python3
"""Module execution entry point for pesqnet-dns.

Allows running the package as a module: python -m pesqnet_dns
"""

import sys
from typing import List, NoReturn, Optional

from .cli.main import main as _cli_main


def main(argv: Optional[List[str]] = None) -> NoReturn:
    """Entry point that properly handles exit codes and never returns."""
    exit_code = _cli_main(argv)
    sys.exit(exit_code)


if __name__ == "__main__":
    main()
