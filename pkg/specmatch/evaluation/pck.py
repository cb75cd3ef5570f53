"""Proportion of correct keypoints and its area under the curve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from ..errors import EmptyErrors

PCK_POINTS = 20


def default_thresholds(mode: str = "near_isometric") -> np.ndarray:
    """20 thresholds on [0, 0.1] for near-isometric pairs, [0, 0.2] otherwise."""
    upper = 0.1 if mode == "near_isometric" else 0.2
    return np.linspace(0.0, upper, PCK_POINTS)


@dataclass
class PckCurve:
    thresholds: np.ndarray
    fractions: np.ndarray
    auc: float

    def points(self) -> list[tuple[float, float]]:
        return [(float(t), float(p)) for t, p in zip(self.thresholds, self.fractions)]


def normalised_auc(thresholds, fractions, start_fraction: float | None = None) -> float:
    """Trapezoidal area under a PCK curve on ``[0, t_last]`` divided by ``t_last``.

    A grid that starts above 0 needs ``start_fraction``, the PCK at threshold 0.
    """
    t = np.asarray(thresholds, dtype=np.float64)
    p = np.asarray(fractions, dtype=np.float64)
    if t[0] < 0:
        raise ValueError("thresholds must be nonnegative")
    if t[0] > 0:
        if start_fraction is None:
            raise ValueError(f"PCK curve starts at {t[0]}; its value at 0 is unknown")
        t = np.concatenate([[0.0], t])
        p = np.concatenate([[start_fraction], p])
    return float(np.clip(trapezoid(p, t) / trapezoid(np.ones_like(t), t), 0.0, 1.0))


def pck_curve(errors, thresholds=None, auc_max: float | None = None) -> PckCurve:
    """Fraction of errors at or below every threshold, plus the normalised AUC.

    The AUC integrates the curve from 0 to ``auc_max`` (the last threshold)
    and divides by ``auc_max``, so a perfect curve scores exactly 1.
    """
    errors = np.asarray(errors, dtype=np.float64).reshape(-1)
    if errors.size == 0:
        raise EmptyErrors("cannot build a PCK curve without errors")
    thresholds = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    if thresholds.ndim != 1 or thresholds.size < 2 or np.any(np.diff(thresholds) <= 0):
        raise ValueError("thresholds must be a strictly ascending array of at least two values")
    if thresholds[0] < 0:
        raise ValueError("thresholds must be nonnegative")
    if auc_max is not None and not np.isclose(auc_max, thresholds[-1]):
        raise ValueError(f"auc_max {auc_max} must equal the last threshold {thresholds[-1]}")

    ordered = np.sort(errors)
    fractions = np.searchsorted(ordered, thresholds, side="right") / errors.size
    auc = normalised_auc(thresholds, fractions, float(np.mean(errors <= 0.0)))
    return PckCurve(thresholds, fractions, auc)
