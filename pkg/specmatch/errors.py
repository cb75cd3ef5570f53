"""Exception hierarchy for specmatch.

Library code raises these; only :mod:`specmatch.cli` turns them into exit
codes.
"""

from __future__ import annotations


class SpecMatchError(Exception):
    """Base class for all specmatch errors."""


class ParseError(SpecMatchError):
    """Malformed mesh, correspondence or checkpoint file."""


class DegenerateFace(SpecMatchError):
    """A triangle has (near) zero area."""


class IndexOutOfRange(SpecMatchError):
    """A vertex index does not exist on the mesh it refers to."""


class ConvergenceFailure(SpecMatchError):
    """The eigensolver stopped before reaching its residual tolerance."""


class KTooLarge(SpecMatchError):
    """Requested more eigenpairs than the mesh supports."""


class DimensionMismatch(SpecMatchError):
    """Operands have incompatible shapes."""


class InsufficientSpectrum(SpecMatchError):
    """The eigenvalue range is too narrow for the WKS energy grid."""


class NonFiniteActivation(SpecMatchError):
    """The feature network produced NaN or inf."""


class TapeConsumed(SpecMatchError):
    """backward() was called twice on the same recorded graph."""


class SingularSystem(SpecMatchError):
    """A functional map row system could not be factorised."""


class NonFiniteScore(SpecMatchError):
    """Feature similarity scores contain NaN or inf."""


class NonFiniteLoss(SpecMatchError):
    """Training or adaptation produced a NaN or inf loss."""

    def __init__(self, message: str, pair: str | None = None):
        super().__init__(message)
        self.pair = pair


class EmptyErrors(SpecMatchError):
    """PCK requested on an empty error array."""


class CacheError(SpecMatchError):
    """Missing, stale or unreadable spectral cache entry."""
