"""Soft and hard point-wise maps and their conversion to functional maps.

Point-wise maps go from the vertices of N onto the vertices of M: row ``i``
of a soft map is a distribution over M's vertices, a hard map stores one
M index per N vertex. The functional map they induce is
``C_MN = Phi_N^+ Pi Phi_M``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.spatial.distance import cdist

from . import autodiff as ad
from .errors import DimensionMismatch, IndexOutOfRange, NonFiniteScore
from .fmap import FunctionalMap
from .spectral import SpectralBasis

# above this many entries a soft map is applied block by block instead of materialised
MAX_DENSE_ENTRIES = 200_000_000
NN_BLOCK_ENTRIES = 1 << 24


@dataclass(eq=False)
class SoftCorrespondence:
    """Row-stochastic ``n_N x n_M`` matrix (differentiable) and its temperature."""

    matrix: ad.DiffTensor
    tau: float

    @property
    def value(self) -> np.ndarray:
        return self.matrix.value

    @property
    def n_source(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def n_target(self) -> int:
        return int(self.matrix.shape[1])


@dataclass(frozen=True, eq=False)
class HardCorrespondence:
    """``target_index[i]`` is the M vertex matched to N vertex ``i``."""

    target_index: np.ndarray
    n_target: int

    def __post_init__(self) -> None:
        index = np.array(self.target_index, dtype=np.int64).reshape(-1)
        if index.size and (index.min() < 0 or index.max() >= self.n_target):
            raise IndexOutOfRange(f"correspondence index outside [0, {self.n_target})")
        index.setflags(write=False)
        object.__setattr__(self, "target_index", index)
        object.__setattr__(self, "n_target", int(self.n_target))

    @property
    def n_source(self) -> int:
        return int(self.target_index.shape[0])

    def as_matrix(self) -> sparse.csr_matrix:
        """One-hot ``n_N x n_M`` sparse matrix."""
        rows = np.arange(self.n_source)
        data = np.ones(self.n_source)
        return sparse.csr_matrix((data, (rows, self.target_index)), shape=(self.n_source, self.n_target))

    def accuracy(self, other: "HardCorrespondence") -> float:
        """Fraction of N vertices on which both maps agree."""
        if other.n_source != self.n_source:
            raise DimensionMismatch(f"correspondences have {self.n_source} and {other.n_source} rows")
        return float(np.mean(self.target_index == other.target_index)) if self.n_source else 1.0


def _values(x) -> np.ndarray:
    return x.value if isinstance(x, ad.DiffTensor) else np.asarray(x, dtype=np.float64)


def soft_pmap(features_n, features_m, tau: float = 0.07) -> SoftCorrespondence:
    """``softmax_rows(F_N F_M^T / tau)``, differentiable in both feature sets."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    features_n, features_m = ad.constant(features_n), ad.constant(features_m)
    if features_n.shape[1] != features_m.shape[1]:
        raise DimensionMismatch(f"feature widths {features_n.shape[1]} and {features_m.shape[1]} differ")
    entries = features_n.shape[0] * features_m.shape[0]
    if entries > MAX_DENSE_ENTRIES:
        raise MemoryError(
            f"soft map with {entries} entries exceeds {MAX_DENSE_ENTRIES}; use streamed_soft_product for inference"
        )
    scores = ad.scale(ad.matmul(features_n, ad.transpose(features_m)), 1.0 / tau)
    if not np.all(np.isfinite(scores.value)):
        raise NonFiniteScore("feature similarity scores contain NaN or inf")
    return SoftCorrespondence(ad.softmax_rows(scores), float(tau))


def streamed_soft_product(features_n, features_m, tau: float, values: np.ndarray, block_rows: int = 2048) -> np.ndarray:
    """``Pi @ values`` for the soft map of the given features, one row block at a time."""
    f_n, f_m = _values(features_n), _values(features_m)
    values = np.asarray(values, dtype=np.float64)
    if f_n.shape[1] != f_m.shape[1] or values.shape[0] != f_m.shape[0]:
        raise DimensionMismatch("features and values disagree in shape")
    out = np.empty((f_n.shape[0],) + values.shape[1:])
    for start in range(0, f_n.shape[0], block_rows):
        scores = f_n[start : start + block_rows] @ f_m.T / tau
        if not np.all(np.isfinite(scores)):
            raise NonFiniteScore("feature similarity scores contain NaN or inf")
        scores -= scores.max(axis=1, keepdims=True)
        weights = np.exp(scores)
        weights /= weights.sum(axis=1, keepdims=True)
        out[start : start + block_rows] = weights @ values
    return out


def _check_bases(n_rows: int, n_cols: int, basis_m: SpectralBasis, basis_n: SpectralBasis) -> None:
    if basis_m.k != basis_n.k:
        raise DimensionMismatch(f"bases have different sizes {basis_m.k} and {basis_n.k}")
    if n_rows != basis_n.n or n_cols != basis_m.n:
        raise DimensionMismatch(
            f"point map is {n_rows} x {n_cols}, bases expect {basis_n.n} x {basis_m.n}"
        )


def pmap_to_fmap(
    pi: SoftCorrespondence | HardCorrespondence,
    basis_m: SpectralBasis,
    basis_n: SpectralBasis,
) -> FunctionalMap:
    """``Phi_N^+ (Pi Phi_M)``, differentiable for soft maps."""
    if isinstance(pi, HardCorrespondence):
        _check_bases(pi.n_source, pi.n_target, basis_m, basis_n)
        value = basis_n.pinv @ basis_m.eigenfunctions[pi.target_index]
        return FunctionalMap(ad.constant(value))
    _check_bases(pi.n_source, pi.n_target, basis_m, basis_n)
    transported = ad.matmul(pi.matrix, basis_m.eigenfunctions)
    return FunctionalMap(ad.matmul(basis_n.pinv, transported))


def nearest_rows(query: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Index of the Euclidean-nearest ``reference`` row for every ``query`` row.

    Ties go to the smallest index.
    """
    query = np.asarray(query, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if query.ndim != 2 or reference.ndim != 2 or query.shape[1] != reference.shape[1]:
        raise DimensionMismatch(f"cannot compare rows of {query.shape} and {reference.shape}")
    block = max(1, NN_BLOCK_ENTRIES // max(reference.shape[0], 1))
    out = np.empty(query.shape[0], dtype=np.int64)
    for start in range(0, query.shape[0], block):
        dist = cdist(query[start : start + block], reference, "sqeuclidean")
        out[start : start + block] = np.argmin(dist, axis=1)
    return out


def nn_pmap(features_n, features_m) -> HardCorrespondence:
    """Hard map from nearest neighbours in feature space."""
    f_n, f_m = _values(features_n), _values(features_m)
    return HardCorrespondence(nearest_rows(f_n, f_m), f_m.shape[0])


def _spectral_nn(fmap_value: np.ndarray, basis_m: SpectralBasis, basis_n: SpectralBasis) -> HardCorrespondence:
    embedded = basis_n.eigenfunctions @ fmap_value
    return HardCorrespondence(nearest_rows(embedded, basis_m.eigenfunctions), basis_m.n)


def spectral_filtered_pmap(pi: SoftCorrespondence, basis_m: SpectralBasis, basis_n: SpectralBasis) -> HardCorrespondence:
    """Low-pass the soft map through the truncated bases, then match in the spectral domain."""
    return _spectral_nn(pmap_to_fmap(pi, basis_m, basis_n).value, basis_m, basis_n)


def spectral_filtered_from_features(
    features_n, features_m, tau: float, basis_m: SpectralBasis, basis_n: SpectralBasis
) -> HardCorrespondence:
    """Same result as :func:`spectral_filtered_pmap` for meshes too large for a dense soft map."""
    _check_bases(_values(features_n).shape[0], _values(features_m).shape[0], basis_m, basis_n)
    transported = streamed_soft_product(features_n, features_m, tau, basis_m.eigenfunctions)
    return _spectral_nn(basis_n.pinv @ transported, basis_m, basis_n)


def fmap_to_pmap(fmap: FunctionalMap, basis_m: SpectralBasis, basis_n: SpectralBasis) -> HardCorrespondence:
    """Point map read off a solver functional map ``C_MN``."""
    if fmap.value.shape != (basis_n.k, basis_m.k):
        raise DimensionMismatch(f"functional map is {fmap.value.shape}, bases have k={basis_m.k}")
    return _spectral_nn(fmap.value, basis_m, basis_n)
