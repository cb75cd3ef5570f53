"""Unsupervised matching objectives.

Structural terms act on the two solver maps ``C_MN`` and ``C_NM``; the
coupling term ties each solver map to the functional map induced by the
soft point-wise map of the same direction; the Dirichlet term penalises
non-smooth point maps during adaptation.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch
from .fmap import FunctionalMap
from .pointwise import SoftCorrespondence, pmap_to_fmap
from .spectral import SpectralBasis

MODES = ("full", "partial")


@dataclass(frozen=True)
class LossWeights:
    w_bij: float = 1.0
    w_orth: float = 1.0
    w_couple: float = 1.0
    w_dirichlet: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be nonnegative")


@dataclass(frozen=True)
class PartialityInfo:
    """``mode="partial"`` means M is complete and N is a part of it."""

    mode: str = "full"
    rank: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown partiality mode {self.mode!r}")
        if self.mode == "partial" and (self.rank is None or self.rank < 1):
            raise ValueError("partial mode needs a rank of at least 1")


FULL = PartialityInfo()


@dataclass
class LossComponents:
    bij: ad.DiffTensor
    orth: ad.DiffTensor
    couple: ad.DiffTensor
    dirichlet: ad.DiffTensor | None = None

    def as_floats(self) -> dict[str, float]:
        return {
            "loss_bij": self.bij.item(),
            "loss_orth": self.orth.item(),
            "loss_couple": self.couple.item(),
            "loss_dirichlet": self.dirichlet.item() if self.dirichlet is not None else 0.0,
        }


def _matrix(c) -> ad.DiffTensor:
    return c.matrix if isinstance(c, FunctionalMap) else ad.constant(c)


def _target_identity(k: int, part: PartialityInfo) -> np.ndarray:
    if part.mode == "full":
        return np.eye(k)
    if part.rank > k:
        raise DimensionMismatch(f"partial rank {part.rank} exceeds k={k}")
    return np.diag((np.arange(k) < part.rank).astype(np.float64))


def _square_pair(c_mn: ad.DiffTensor, c_nm: ad.DiffTensor) -> int:
    if c_mn.value.ndim != 2 or c_mn.shape[0] != c_mn.shape[1] or c_mn.shape != c_nm.shape:
        raise DimensionMismatch(f"expected two k x k maps, got {c_mn.shape} and {c_nm.shape}")
    return c_mn.shape[0]


def bijectivity_loss(c_mn, c_nm, part: PartialityInfo = FULL) -> ad.DiffTensor:
    c_mn, c_nm = _matrix(c_mn), _matrix(c_nm)
    eye = _target_identity(_square_pair(c_mn, c_nm), part)
    loss = ad.frobenius_sq(ad.matmul(c_nm, c_mn) - eye)
    if part.mode == "full":
        loss = loss + ad.frobenius_sq(ad.matmul(c_mn, c_nm) - eye)
    return loss


def orthogonality_loss(c_mn, c_nm, part: PartialityInfo = FULL) -> ad.DiffTensor:
    c_mn, c_nm = _matrix(c_mn), _matrix(c_nm)
    eye = _target_identity(_square_pair(c_mn, c_nm), part)
    loss = ad.frobenius_sq(ad.matmul(ad.transpose(c_mn), c_mn) - eye)
    if part.mode == "full":
        loss = loss + ad.frobenius_sq(ad.matmul(ad.transpose(c_nm), c_nm) - eye)
    return loss


def coupling_loss(c_mn, pi: SoftCorrespondence, basis_m: SpectralBasis, basis_n: SpectralBasis) -> ad.DiffTensor:
    """``||C_MN - Phi_N^+ Pi_NM Phi_M||^2``."""
    c_mn = _matrix(c_mn)
    induced = pmap_to_fmap(pi, basis_m, basis_n).matrix
    if c_mn.shape != induced.shape:
        raise DimensionMismatch(f"functional map {c_mn.shape} vs induced map {induced.shape}")
    return ad.frobenius_sq(c_mn - induced)


def dirichlet_loss(pi: SoftCorrespondence, positions_m: np.ndarray, stiffness_n) -> ad.DiffTensor:
    """``Trace((Pi X_M)^T W_N (Pi X_M))``."""
    positions_m = np.asarray(positions_m, dtype=np.float64)
    if positions_m.shape[0] != pi.n_target:
        raise DimensionMismatch(f"{positions_m.shape[0]} positions for a map onto {pi.n_target} vertices")
    if stiffness_n.shape != (pi.n_source, pi.n_source):
        raise DimensionMismatch(f"stiffness {stiffness_n.shape} does not fit {pi.n_source} source vertices")
    mapped = ad.matmul(pi.matrix, positions_m)
    return ad.quadratic_form(stiffness_n, mapped)


def total_loss(components: LossComponents, weights: LossWeights) -> ad.DiffTensor:
    loss = (
        ad.scale(ad.constant(components.bij), weights.w_bij)
        + ad.scale(ad.constant(components.orth), weights.w_orth)
        + ad.scale(ad.constant(components.couple), weights.w_couple)
    )
    if components.dirichlet is not None and weights.w_dirichlet > 0:
        loss = loss + ad.scale(ad.constant(components.dirichlet), weights.w_dirichlet)
    return loss


def estimate_partial_rank(basis_m: SpectralBasis, basis_n: SpectralBasis, area_m: float, area_n: float) -> int:
    """Slanted-diagonal rank ``round(k * area_N / area_M)`` clamped to ``[1, k]``."""
    k = min(basis_m.k, basis_n.k)
    if area_m <= 0:
        raise ValueError("complete shape must have positive area")
    r = int(np.floor(k * area_n / area_m + 0.5))
    return int(min(max(r, 1), k))
