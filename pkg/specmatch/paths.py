from __future__ import annotations

import sys
from pathlib import Path

_PROJECT_ROOT = None


def default_project_root() -> Path:
    return Path.cwd()


def set_project_root(path: Path) -> None:
    global _PROJECT_ROOT
    _PROJECT_ROOT = path


def get_project_root() -> Path:
    global _PROJECT_ROOT
    if _PROJECT_ROOT is None:
        _PROJECT_ROOT = default_project_root()
    return _PROJECT_ROOT


def get_path(*parts: str | Path) -> Path:
    """Resolve ``parts`` against the project root (absolute parts win)."""
    return get_project_root().joinpath(*parts)


def cache_filename(mesh_path: str | Path, digest: str) -> str:
    """Name of the spectral cache file for a mesh with content ``digest``."""
    return f"{Path(mesh_path).stem}-{digest}.npz"


def is_tty() -> bool:
    return sys.stderr.isatty()
