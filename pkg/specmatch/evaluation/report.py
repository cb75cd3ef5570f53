"""Evaluation reports: JSON summary, PCK table, run summary row and plots."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from ..mesh import TriangleMesh
from ..pointwise import HardCorrespondence
from .geodesic import geodesic_error
from .pck import default_thresholds, normalised_auc, pck_curve

logger = logging.getLogger(__name__)


@dataclass
class EvalReport:
    per_vertex_errors: np.ndarray
    mean_geo_error_x100: float
    pck: list[tuple[float, float]]
    auc: float

    def summary(self) -> dict:
        return {
            "mean_geo_error_x100": self.mean_geo_error_x100,
            "auc": self.auc,
            "n_vertices": int(self.per_vertex_errors.size),
            "exact_fraction": float(np.mean(self.per_vertex_errors == 0.0)),
        }

    def pck_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.pck, columns=["threshold", "pck"])


def build_report(errors: np.ndarray, thresholds=None) -> EvalReport:
    errors = np.asarray(errors, dtype=np.float64)
    curve = pck_curve(errors, thresholds)
    return EvalReport(
        per_vertex_errors=errors,
        mean_geo_error_x100=float(100.0 * errors.mean()),
        pck=curve.points(),
        auc=curve.auc,
    )


def evaluate_correspondence(
    pred: HardCorrespondence,
    gt: HardCorrespondence,
    mesh_m: TriangleMesh,
    mode: str = "near_isometric",
    thresholds=None,
) -> EvalReport:
    """Geodesic errors of ``pred`` against ``gt`` on M and their PCK curve."""
    if thresholds is None:
        thresholds = default_thresholds(mode)
    return build_report(geodesic_error(pred, gt, mesh_m), thresholds)


def write_report(report: EvalReport, out_dir: str | Path, run_id: str, stage: str = "eval") -> tuple[Path, Path]:
    """Write ``<run_id>_<stage>.json``, ``<run_id>_<stage>_pck.csv`` and append ``summary.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / f"{run_id}_{stage}.json"
    payload = {**report.summary(), "pck": [{"threshold": t, "pck": p} for t, p in report.pck]}
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2)

    pck_path = out_dir / f"{run_id}_{stage}_pck.csv"
    report.pck_frame().to_csv(pck_path, index=False)

    summary_path = out_dir / "summary.csv"
    file_exists = summary_path.exists()
    with open(summary_path, "a", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        if not file_exists:
            writer.writerow(["run_id", "stage", "metric", "value"])
        for k, v in report.summary().items():
            writer.writerow([run_id, stage, k, v])
    return json_path, pck_path


def plot_pck(csv_paths: Sequence[str | Path], out_path: str | Path, labels: Sequence[str] | None = None) -> Path:
    """Render PCK tables to one PNG, with the AUC of each curve in the legend."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = list(labels) if labels else [Path(p).stem for p in csv_paths]
    if len(labels) != len(csv_paths):
        raise ValueError("need one label per PCK table")
    fig, ax = plt.subplots(figsize=(5, 4))
    for path, label in zip(csv_paths, labels):
        table = pd.read_csv(path)
        if list(table.columns) != ["threshold", "pck"]:
            raise ValueError(f"{path}: expected columns threshold,pck")
        auc = table_auc(table)
        ax.plot(table["threshold"], table["pck"], label=f"{label} ({auc:.3f})")
    ax.set_xlabel("Geodesic error")
    ax.set_ylabel("PCK")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    logger.info("wrote %s", out_path)
    return out_path


def table_auc(table: pd.DataFrame) -> float:
    """AUC of a stored PCK table, normalised the same way as :func:`pck_curve`."""
    t = table["threshold"].to_numpy(dtype=np.float64)
    p = table["pck"].to_numpy(dtype=np.float64)
    return normalised_auc(t, p)
