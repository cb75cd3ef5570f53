"""Unsupervised spectral shape matching with test-time adaptation."""
from __future__ import annotations

import subprocess
from importlib.metadata import PackageNotFoundError, version as _pkg_version
from pathlib import Path

try:  # Use package metadata if available
    __version__ = _pkg_version("specmatch")
except PackageNotFoundError:  # Fallback for editable installs
    __version__ = "0.1.0"


def _git_hash() -> str:
    try:
        return subprocess.check_output(
            ["git", "rev-parse", "HEAD"],
            cwd=Path(__file__).resolve().parent.parent,
            text=True,
            stderr=subprocess.DEVNULL,
        ).strip()
    except Exception:
        return "unknown"

__git_hash__ = _git_hash()

__all__ = ["mesh", "spectral", "descriptors", "autodiff", "network", "fmap", "pointwise", "losses", "pipeline", "config", "cache", "paths"]

from . import mesh, spectral, descriptors, autodiff, network, fmap, pointwise, losses
from . import config, cache, pipeline, paths
from . import evaluation
