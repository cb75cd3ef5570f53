"""Evaluation utilities for specmatch correspondences."""

from .geodesic import compose_through_reference, geodesic_error
from .pck import PckCurve, default_thresholds, pck_curve
from .report import EvalReport, build_report, evaluate_correspondence, plot_pck, write_report

__all__ = [
    "geodesic_error",
    "compose_through_reference",
    "pck_curve",
    "default_thresholds",
    "PckCurve",
    "EvalReport",
    "build_report",
    "evaluate_correspondence",
    "write_report",
    "plot_pck",
]
