"""Wave Kernel Signature input features."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientSpectrum
from .spectral import SpectralBasis

logger = logging.getLogger(__name__)

KERNEL_RATIO = 1e-6


@dataclass(frozen=True)
class WksConfig:
    num_energies: int = 128
    sigma_factor: float = 7.0
    skip_first: int = 1

    def __post_init__(self) -> None:
        if self.num_energies < 2:
            raise ValueError("num_energies must be at least 2")
        if self.sigma_factor <= 0:
            raise ValueError("sigma_factor must be positive")
        if self.skip_first < 0:
            raise ValueError("skip_first must be nonnegative")


def kernel_dimension(basis: SpectralBasis) -> int:
    """Number of eigenvalues that are numerically zero (one per component)."""
    return int(np.sum(basis.eigenvalues < KERNEL_RATIO * basis.eigenvalues[-1]))


def skip_count(basis: SpectralBasis, cfg: WksConfig) -> int:
    """Leading eigenpairs left out: ``skip_first``, raised to the kernel dimension."""
    return max(cfg.skip_first, kernel_dimension(basis))


def energy_grid(basis: SpectralBasis, cfg: WksConfig) -> tuple[np.ndarray, float]:
    """Log-energy samples and the Gaussian width used by :func:`compute_wks`."""
    skip = skip_count(basis, cfg)
    if basis.k <= skip + 1:
        raise InsufficientSpectrum(f"basis of {basis.k} eigenpairs cannot skip {skip} and still span a band")
    log_values = np.log(basis.eigenvalues[skip:])
    e_min, e_max = float(log_values[0]), float(log_values[-1])
    delta = (e_max - e_min) / cfg.num_energies
    sigma = cfg.sigma_factor * delta
    if not e_max - e_min > 4 * sigma:
        raise InsufficientSpectrum(
            f"log-eigenvalue range {e_max - e_min:.4g} too narrow for sigma {sigma:.4g}"
        )
    return np.linspace(e_min + 2 * sigma, e_max - 2 * sigma, cfg.num_energies), sigma


def compute_wks(basis: SpectralBasis, cfg: WksConfig | None = None) -> np.ndarray:
    """Per-vertex WKS, an ``n x num_energies`` matrix of nonnegative entries.

    Each column is a Gaussian band filter on the log-spectrum applied to the
    squared eigenfunctions and normalised by the filter's total weight. Every
    numerically zero eigenvalue is skipped, one per connected component, even
    when ``skip_first`` is smaller.
    """
    cfg = cfg or WksConfig()
    skip = skip_count(basis, cfg)
    if skip > cfg.skip_first:
        logger.warning(
            "spectrum has %d near-zero eigenvalues but skip_first=%d; skipping %d for this multi-component mesh",
            skip,
            cfg.skip_first,
            skip,
        )
    energies, sigma = energy_grid(basis, cfg)
    log_values = np.log(basis.eigenvalues[skip:])
    weights = np.exp(-((energies[None, :] - log_values[:, None]) ** 2) / (2 * sigma**2))
    squared = basis.eigenfunctions[:, skip:] ** 2
    return (squared @ weights) / weights.sum(axis=0)[None, :]
