"""Regularised functional map solver.

``C_MN`` maps spectral coefficients of functions on M into N's basis. Given
projected features ``A = Phi_M^+ F_M`` and ``B = Phi_N^+ F_N`` (both k x c)
the solver minimises ``||C A - B||^2 + lambda * sum_ij mask_ij C_ij^2``. The
objective separates over rows of ``C``, so every row is a k x k symmetric
positive definite solve. Gradients are propagated with the adjoint of those
solves rather than by unrolling.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import autodiff as ad
from .errors import DimensionMismatch, SingularSystem
from .spectral import SpectralBasis

logger = logging.getLogger(__name__)

MASK_KINDS = ("resolvent", "commutativity")
MAX_CONDITION = 1e14
JITTER_START = 1e-12
JITTER_STOP = 1e-6


@dataclass(frozen=True)
class SolverConfig:
    lambda_: float = 100.0
    mask_kind: str = "resolvent"
    resolvent_gamma: float = 0.5

    def __post_init__(self) -> None:
        if self.lambda_ < 0:
            raise ValueError("solver lambda must be nonnegative")
        if self.mask_kind not in MASK_KINDS:
            raise ValueError(f"unknown mask kind {self.mask_kind!r}; expected one of {MASK_KINDS}")
        if self.resolvent_gamma <= 0:
            raise ValueError("resolvent_gamma must be positive")


@dataclass(eq=False)
class FunctionalMap:
    """``matrix`` is k x k; ``source``/``target`` name the shapes (M, N)."""

    matrix: ad.DiffTensor
    source: str = "M"
    target: str = "N"

    @property
    def k(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def value(self) -> np.ndarray:
        return self.matrix.value


def commutativity_mask(evals_m: np.ndarray, evals_n: np.ndarray, kind: str = "resolvent", gamma: float = 0.5) -> np.ndarray:
    """Penalty weights for entry (i, j) of ``C_MN``; ``i`` indexes N, ``j`` indexes M.

    ``commutativity``: squared difference of eigenvalues each normalised by
    its own largest value. ``resolvent``: squared distance between
    ``1 / (1 + i (lambda / lambda_max)^gamma)`` of both eigenvalues, with
    ``lambda_max`` shared by both spectra.
    """
    evals_m = np.asarray(evals_m, dtype=np.float64)
    evals_n = np.asarray(evals_n, dtype=np.float64)
    tiny = np.finfo(float).tiny
    if kind == "commutativity":
        rel_n = evals_n / max(evals_n[-1], tiny)
        rel_m = evals_m / max(evals_m[-1], tiny)
        return (rel_n[:, None] - rel_m[None, :]) ** 2
    if kind == "resolvent":
        lam_max = max(float(evals_m.max()), float(evals_n.max()), tiny)

        def resolvent(values: np.ndarray) -> np.ndarray:
            scaled = np.clip(values / lam_max, 0.0, None) ** gamma
            return 1.0 / (1.0 + 1j * scaled)

        r_n, r_m = resolvent(evals_n), resolvent(evals_m)
        return (r_n.real[:, None] - r_m.real[None, :]) ** 2 + (r_n.imag[:, None] - r_m.imag[None, :]) ** 2
    raise ValueError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")


def _factor(system: np.ndarray, row: int) -> tuple:
    """Cholesky factor of ``system``, adding diagonal jitter when it is ill conditioned."""
    trace = float(np.trace(system))
    if not np.all(np.isfinite(system)) or trace <= 0.0:
        raise SingularSystem(f"functional map row {row} has a zero or non-finite system matrix")
    scale = trace
    jitter = 0.0
    while True:
        try:
            factor = scipy.linalg.cho_factor(system + jitter * np.eye(system.shape[0]), lower=False)
            diag = np.abs(np.diag(factor[0]))
            # squared ratio of Cholesky pivots, a lower bound on the 2-norm condition number
            if diag.min() > 0 and (diag.max() / diag.min()) ** 2 <= MAX_CONDITION:
                if jitter:
                    logger.debug("fmap row %d solved with jitter %.1e", row, jitter)
                return factor
        except np.linalg.LinAlgError:
            pass
        jitter = JITTER_START * scale if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_STOP * scale * (1 + 1e-9):
            raise SingularSystem(f"functional map row {row} is singular (condition number above {MAX_CONDITION:g})")


def _solve_rows(a: np.ndarray, b: np.ndarray, lam: float, mask: np.ndarray) -> tuple[np.ndarray, list[tuple]]:
    gram = a @ a.T
    rhs = b @ a.T  # row i is (A b_i)^T
    k = a.shape[0]
    c = np.empty((k, k))
    factors: list[tuple] = []
    shared = _factor(gram, 0) if lam == 0.0 else None
    for i in range(k):
        factor = shared if shared is not None else _factor(gram + lam * np.diag(mask[i]), i)
        factors.append(factor)
        c[i] = scipy.linalg.cho_solve(factor, rhs[i])
    return c, factors


def solve_fmap(
    basis_m: SpectralBasis,
    basis_n: SpectralBasis,
    features_m,
    features_n,
    cfg: SolverConfig | None = None,
    source: str = "M",
    target: str = "N",
) -> FunctionalMap:
    """Differentiable ``C_MN`` from per-vertex features of M and N."""
    cfg = cfg or SolverConfig()
    features_m, features_n = ad.constant(features_m), ad.constant(features_n)
    if basis_m.k != basis_n.k:
        raise DimensionMismatch(f"bases have different sizes {basis_m.k} and {basis_n.k}")
    if features_m.value.ndim != 2 or features_n.value.ndim != 2:
        raise DimensionMismatch("features must be matrices")
    if features_m.shape[1] != features_n.shape[1] or features_m.shape[1] < 1:
        raise DimensionMismatch(f"feature widths {features_m.shape[1]} and {features_n.shape[1]} differ")
    if features_m.shape[0] != basis_m.n or features_n.shape[0] != basis_n.n:
        raise DimensionMismatch("feature rows do not match the vertex counts of their bases")

    proj_m = ad.matmul(basis_m.pinv, features_m)
    proj_n = ad.matmul(basis_n.pinv, features_n)
    mask = commutativity_mask(basis_m.eigenvalues, basis_n.eigenvalues, cfg.mask_kind, cfg.resolvent_gamma)
    a, b = proj_m.value, proj_n.value
    c, factors = _solve_rows(a, b, cfg.lambda_, mask)

    def grad_fn(g):
        u = np.vstack([scipy.linalg.cho_solve(factors[i], g[i]) for i in range(len(factors))])
        grad_a = u.T @ b - (u.T @ c + c.T @ u) @ a
        grad_b = u @ a
        return grad_a, grad_b

    matrix = ad.make_op("solve_fmap", c, (proj_m, proj_n), grad_fn)
    return FunctionalMap(matrix, source, target)
