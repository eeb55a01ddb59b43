"""Version management utilities.

This module provides centralized version management that reads from pyproject.toml
as the single source of truth, plus the git-describe-style build string stamped
into every artifact directory.
"""

import importlib.metadata
import subprocess
from pathlib import Path
from typing import Any, Dict, Optional, Union

DISTRIBUTION_NAME = "pesqnet-dns"


def get_version() -> str:
    """Get version from package metadata.

    Returns:
        Version string (e.g., "0.4.0")
    """
    try:
        return importlib.metadata.version(DISTRIBUTION_NAME)
    except importlib.metadata.PackageNotFoundError:
        # Fallback for development environments where package isn't installed
        return _get_version_from_pyproject()


def _get_version_from_pyproject() -> str:
    """Fallback: read version directly from pyproject.toml.

    Returns:
        Version string or "unknown" if cannot be determined
    """
    try:
        # Python 3.11+
        import tomllib
    except ImportError:
        try:
            import tomli as tomllib  # type: ignore[import-untyped]
        except ImportError:
            return "unknown"

    root = find_project_root()
    if root is None:
        return "unknown"
    try:
        with open(root / "pyproject.toml", "rb") as f:
            data: Dict[str, Any] = tomllib.load(f)
        version: str = data.get("project", {}).get("version", "unknown")
        return version
    except Exception:
        return "unknown"


def find_project_root(start_path: Optional[Union[str, Path]] = None) -> Optional[Path]:
    """Find the project root directory containing pyproject.toml.

    Args:
        start_path: Starting directory for search (defaults to current file location)

    Returns:
        Path to project root or None if not found
    """
    if start_path is None:
        current_dir = Path(__file__).parent
    else:
        current_dir = Path(start_path).resolve()

    for _ in range(10):
        if (current_dir / "pyproject.toml").exists():
            return current_dir

        parent = current_dir.parent
        if parent == current_dir:
            break
        current_dir = parent

    return None


def get_build_version() -> str:
    """Return a git-describe-style build string, e.g. ``v0.4.0-3-gabc1234-dirty``.

    Falls back to ``v<version>`` outside a git checkout or without git.
    """
    root = find_project_root()
    if root is not None:
        try:
            result = subprocess.run(
                ["git", "describe", "--tags", "--always", "--dirty"],
                cwd=root,
                capture_output=True,
                text=True,
                timeout=5,
                check=False,
            )
            described = result.stdout.strip()
            if result.returncode == 0 and described:
                return described
        except (OSError, subprocess.SubprocessError):
            pass
    return f"v{get_version()}"


# Module-level version constant
__version__: str = get_version()
