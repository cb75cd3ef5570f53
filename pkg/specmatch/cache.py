"""Per-mesh spectral cache.

Each mesh file gets one ``<stem>-<hash>.npz`` holding its eigenpairs, mass
diagonal and WKS. ``hash`` is the 64-bit BLAKE2b digest of the mesh file
bytes, so an edited mesh never reuses a stale entry. Entries are written to
a temporary file and renamed into place.
"""

from __future__ import annotations

import json
import logging
import zipfile
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import MatchConfig
from .descriptors import WksConfig, compute_wks
from .errors import CacheError
from .formats import load_mesh
from .mesh import compute_laplacian
from .paths import cache_filename
from .pipeline import ShapeData
from .spectral import SpectralBasis, eigendecompose
from .utils import HASH_NAME, atomic_write, content_hash

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(eq=False)
class SpectralCacheEntry:
    content_hash: str
    k: int
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    mass: np.ndarray
    wks: np.ndarray
    wks_config: WksConfig
    version: int = FORMAT_VERSION

    def basis(self) -> SpectralBasis:
        return SpectralBasis(self.eigenvalues, self.eigenfunctions, self.mass)


def cache_path(cache_dir: str | Path, mesh_path: str | Path, digest: str | None = None) -> Path:
    digest = digest or content_hash(mesh_path)
    return Path(cache_dir) / cache_filename(mesh_path, digest)


def save_entry(entry: SpectralCacheEntry, path: str | Path) -> Path:
    def writer(tmp: Path) -> None:
        with open(tmp, "wb") as f:
            np.savez(
                f,
                version=np.array(entry.version),
                hash_name=np.array(HASH_NAME),
                content_hash=np.array(entry.content_hash),
                k=np.array(entry.k),
                eigenvalues=entry.eigenvalues,
                eigenfunctions=entry.eigenfunctions,
                mass=entry.mass,
                wks=entry.wks,
                wks_config=np.array(json.dumps(asdict(entry.wks_config), sort_keys=True)),
            )

    return atomic_write(path, writer)


def load_entry(path: str | Path) -> SpectralCacheEntry:
    try:
        with np.load(path, allow_pickle=False) as data:
            version = int(data["version"])
            if version != FORMAT_VERSION:
                raise CacheError(f"{path}: cache format {version}, expected {FORMAT_VERSION}")
            return SpectralCacheEntry(
                content_hash=str(data["content_hash"]),
                k=int(data["k"]),
                eigenvalues=data["eigenvalues"],
                eigenfunctions=data["eigenfunctions"],
                mass=data["mass"],
                wks=data["wks"],
                wks_config=WksConfig(**json.loads(str(data["wks_config"]))),
                version=version,
            )
    except (OSError, KeyError, ValueError, zipfile.BadZipFile) as e:
        raise CacheError(f"{path}: unreadable spectral cache ({e})") from e


def build_entry(mesh_path: str | Path, k: int, wks_config: WksConfig, solver: str = "auto", seed: int = 0) -> SpectralCacheEntry:
    mesh = load_mesh(mesh_path)
    basis = eigendecompose(compute_laplacian(mesh), k, solver=solver, seed=seed)
    return SpectralCacheEntry(
        content_hash=content_hash(mesh_path),
        k=k,
        eigenvalues=basis.eigenvalues,
        eigenfunctions=basis.eigenfunctions,
        mass=basis.mass,
        wks=compute_wks(basis, wks_config),
        wks_config=wks_config,
    )


def preprocess_mesh(
    mesh_path: str | Path,
    cache_dir: str | Path,
    k: int,
    wks_config: WksConfig | None = None,
    solver: str = "auto",
    seed: int = 0,
) -> tuple[Path, bool]:
    """Make sure an up-to-date entry exists; returns its path and whether it was recomputed."""
    wks_config = wks_config or WksConfig()
    digest = content_hash(mesh_path)
    path = cache_path(cache_dir, mesh_path, digest)
    if path.exists():
        try:
            entry = load_entry(path)
        except CacheError as e:
            logger.warning("rebuilding %s: %s", path.name, e)
        else:
            if entry.content_hash == digest and entry.k == k and entry.wks_config == wks_config:
                logger.debug("cache hit for %s", mesh_path)
                return path, False
    entry = build_entry(mesh_path, k, wks_config, solver=solver, seed=seed)
    save_entry(entry, path)
    logger.info("cached %s (k=%d) -> %s", mesh_path, k, path)
    return path, True


def load_shape(mesh_path: str | Path, cache_dir: str | Path, cfg: MatchConfig, k: int | None = None, name: str | None = None) -> ShapeData:
    """Mesh plus cached spectral data, truncated to ``k`` (default ``cfg.k``)."""
    k = k or cfg.k
    path = cache_path(cache_dir, mesh_path)
    if not path.exists():
        raise CacheError(f"no spectral cache for {mesh_path} in {cache_dir}; run 'specmatch preprocess' on it first")
    entry = load_entry(path)
    if entry.k < k:
        raise CacheError(f"cache for {mesh_path} holds k={entry.k} eigenpairs, {k} requested")
    mesh = load_mesh(mesh_path)
    basis = entry.basis()
    wks = entry.wks
    if entry.k > k or entry.wks_config != cfg.wks:
        basis = basis.truncated(k)
        wks = compute_wks(basis, cfg.wks)
    return ShapeData(name or Path(mesh_path).stem, mesh, compute_laplacian(mesh), basis, wks)
