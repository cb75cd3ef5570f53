"""Generalised Laplace-Beltrami eigenbasis and spectral operators.

The basis solves ``W phi = lambda A phi`` for the smallest eigenvalues and is
A-orthonormal (``Phi^T A Phi = I``). The pseudo-inverse of ``Phi`` is taken in
the A-inner product, ``Phi^+ = Phi^T A``, so that ``Phi^+ Phi = I``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .errors import ConvergenceFailure, DimensionMismatch, KTooLarge
from .mesh import LaplacianPair

logger = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-6
DENSE_LIMIT = 400
SIGN_TOLERANCE = 1e-10
SOLVERS = ("auto", "dense", "sparse")


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """First ``k`` eigenpairs of a mesh, ascending."""

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    mass: np.ndarray

    @property
    def k(self) -> int:
        return int(self.eigenvalues.shape[0])

    @property
    def n(self) -> int:
        return int(self.eigenfunctions.shape[0])

    @cached_property
    def pinv(self) -> np.ndarray:
        """``Phi^T A`` as a dense k x n matrix."""
        return np.ascontiguousarray((self.eigenfunctions * self.mass[:, None]).T)

    def truncated(self, k: int) -> "SpectralBasis":
        if not 1 <= k <= self.k:
            raise KTooLarge(f"cannot truncate a {self.k}-term basis to {k} terms")
        return SpectralBasis(self.eigenvalues[:k], self.eigenfunctions[:, :k], self.mass)


def _fix_signs(phi: np.ndarray) -> np.ndarray:
    """Make the first clearly nonzero entry of every column positive."""
    scale = np.abs(phi).max(axis=0)
    significant = np.abs(phi) > SIGN_TOLERANCE * np.maximum(scale, np.finfo(float).tiny)
    first = significant.argmax(axis=0)
    signs = np.sign(phi[first, np.arange(phi.shape[1])])
    signs[signs == 0] = 1.0
    return phi * signs


def _a_orthonormalize(phi: np.ndarray, mass: np.ndarray) -> np.ndarray:
    gram = phi.T @ (phi * mass[:, None])
    upper = scipy.linalg.cholesky(gram, lower=False)
    return scipy.linalg.solve_triangular(upper, phi.T, trans="T", lower=False).T


def _dense_eigenpairs(lap: LaplacianPair, k: int) -> tuple[np.ndarray, np.ndarray]:
    values, vectors = scipy.linalg.eigh(lap.stiffness.toarray(), np.diag(lap.mass))
    return values[:k], vectors[:, :k]


def _sparse_eigenpairs(lap: LaplacianPair, k: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    n = lap.n
    stiffness = lap.stiffness.tocsc()
    mass = sparse.diags(lap.mass).tocsc()
    # small negative shift keeps W - sigma A positive definite
    sigma = -1e-8 * float(stiffness.diagonal().sum()) / n
    lu = splinalg.splu((stiffness - sigma * mass).tocsc())
    op_inv = splinalg.LinearOperator((n, n), matvec=lu.solve, dtype=np.float64)
    v0 = np.random.default_rng(seed).uniform(0.5, 1.5, size=n)
    try:
        values, vectors = splinalg.eigsh(
            stiffness,
            k=k,
            M=mass,
            sigma=sigma,
            which="LM",
            OPinv=op_inv,
            v0=v0,
            maxiter=50 * k,
        )
    except splinalg.ArpackNoConvergence as exc:
        raise ConvergenceFailure(
            f"eigensolver converged {len(exc.eigenvalues)} of {k} eigenpairs within {50 * k} iterations"
        ) from exc
    order = np.argsort(values, kind="stable")
    return values[order], vectors[:, order]


def eigendecompose(lap: LaplacianPair, k: int, solver: str = "auto", seed: int = 0) -> SpectralBasis:
    """Smallest ``k`` eigenpairs of ``W phi = lambda A phi``.

    ``solver="auto"`` uses a dense solve for small meshes and shift-invert
    Lanczos otherwise. ``k == n`` is only accepted with ``solver="dense"``.
    Eigenvectors are A-orthonormal and sign-normalised so that the first
    significant entry is positive.
    """
    n = lap.n
    if solver not in SOLVERS:
        raise ValueError(f"unknown eigensolver {solver!r}; expected one of {SOLVERS}")
    if k < 1:
        raise KTooLarge(f"k must be positive, got {k}")
    if k > n or (k == n and solver != "dense"):
        raise KTooLarge(f"requested k={k} eigenpairs on a mesh with n={n} vertices (need k < n)")

    if solver == "dense" or (solver == "auto" and n <= DENSE_LIMIT):
        values, vectors = _dense_eigenpairs(lap, k)
    else:
        values, vectors = _sparse_eigenpairs(lap, k, seed)

    vectors = _fix_signs(_a_orthonormalize(vectors, lap.mass))
    values = np.maximum(values, 0.0)

    residual = np.linalg.norm(lap.stiffness @ vectors - (vectors * lap.mass[:, None]) * values)
    scale = np.linalg.norm(lap.stiffness @ vectors)
    if residual > RESIDUAL_TOLERANCE * max(scale, np.finfo(float).tiny):
        raise ConvergenceFailure(f"eigen residual {residual:.3e} exceeds {RESIDUAL_TOLERANCE:g} x {scale:.3e}")
    logger.debug("eigendecompose: n=%d k=%d lambda_max=%.4g residual=%.2e", n, k, values[-1], residual)
    return SpectralBasis(values, vectors, np.asarray(lap.mass, dtype=np.float64))


def _as_matrix(basis: SpectralBasis, signal: np.ndarray, rows: int, what: str) -> tuple[np.ndarray, bool]:
    signal = np.asarray(signal, dtype=np.float64)
    vector = signal.ndim == 1
    if vector:
        signal = signal[:, None]
    if signal.ndim != 2 or signal.shape[0] != rows:
        raise DimensionMismatch(f"{what} expects {rows} rows, got shape {signal.shape}")
    return signal, vector


def project(basis: SpectralBasis, signal: np.ndarray) -> np.ndarray:
    """Spectral coefficients ``Phi^T A signal`` (k x c)."""
    matrix, vector = _as_matrix(basis, signal, basis.n, "project")
    coeffs = basis.pinv @ matrix
    return coeffs[:, 0] if vector else coeffs


def unproject(basis: SpectralBasis, coeffs: np.ndarray) -> np.ndarray:
    """Reconstruct ``Phi coeffs`` (n x c)."""
    matrix, vector = _as_matrix(basis, coeffs, basis.k, "unproject")
    values = basis.eigenfunctions @ matrix
    return values[:, 0] if vector else values


def diffusion_filter(basis: SpectralBasis, times: np.ndarray) -> np.ndarray:
    """``exp(-lambda_i t_j)`` as a k x c matrix."""
    return np.exp(-np.outer(basis.eigenvalues, times))


def diffuse(basis: SpectralBasis, signal: np.ndarray, times) -> np.ndarray:
    """Heat diffusion of every channel for its own time, in the truncated basis."""
    matrix, vector = _as_matrix(basis, signal, basis.n, "diffuse")
    times = np.broadcast_to(np.asarray(times, dtype=np.float64), (matrix.shape[1],))
    if np.any(times < 0):
        raise ValueError("diffusion times must be nonnegative")
    out = basis.eigenfunctions @ (diffusion_filter(basis, times) * (basis.pinv @ matrix))
    return out[:, 0] if vector else out
