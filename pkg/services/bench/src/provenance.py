"""Provenance stamped into every report."""

import subprocess
from functools import lru_cache
from pathlib import Path


@lru_cache(maxsize=1)
def git_describe() -> str:
    """``git describe --always --dirty`` of the checkout, or ``unknown``."""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return result.stdout.strip() if result.returncode == 0 and result.stdout.strip() else "unknown"
