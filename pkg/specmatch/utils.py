from __future__ import annotations

import hashlib
import logging
import os
import tempfile
from pathlib import Path
from typing import Callable

HASH_NAME = "blake2b-64"


def content_hash(path: str | os.PathLike | Path) -> str:
    """Return the 64-bit BLAKE2b digest of a file as 16 hex characters."""
    h = hashlib.blake2b(digest_size=8)
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(8192), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path: str | os.PathLike | Path, writer: Callable[[Path], None]) -> Path:
    """Call ``writer`` on a temporary sibling of ``path`` then rename it in place.

    Concurrent writers of the same target never observe a partial file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    os.close(fd)
    tmp_path = Path(tmp)
    try:
        writer(tmp_path)
        os.replace(tmp_path, path)
    finally:
        if tmp_path.exists():
            tmp_path.unlink()
    return path


def configure_logging(verbose: bool = False) -> None:
    """Send library logs to stderr with the ``[LEVEL] message`` prefix."""
    root = logging.getLogger("specmatch")
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("[%(levelname)s] %(message)s"))
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False
