"""Geodesic error of a predicted correspondence."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch, IndexOutOfRange
from ..mesh import TriangleMesh, geodesic_matrix
from ..pointwise import HardCorrespondence

# Dijkstra rows computed per batch
SOURCE_BATCH = 256


def geodesic_error(pred: HardCorrespondence, gt: HardCorrespondence, mesh_m: TriangleMesh) -> np.ndarray:
    """Per-vertex geodesic distance on M between predicted and true targets, over ``sqrt(area(M))``."""
    if pred.n_source != gt.n_source:
        raise DimensionMismatch(f"prediction has {pred.n_source} rows, ground truth {gt.n_source}")
    for corr, what in ((pred, "prediction"), (gt, "ground truth")):
        if corr.n_target != mesh_m.n_vertices:
            raise IndexOutOfRange(f"{what} indexes {corr.n_target} target vertices, {mesh_m.name} has {mesh_m.n_vertices}")

    errors = np.zeros(pred.n_source)
    wrong = np.flatnonzero(pred.target_index != gt.target_index)
    if wrong.size == 0:
        return errors
    sources, inverse = np.unique(gt.target_index[wrong], return_inverse=True)
    for start in range(0, sources.size, SOURCE_BATCH):
        batch = slice(start, start + SOURCE_BATCH)
        dist = geodesic_matrix(mesh_m, sources[batch])
        rows = np.flatnonzero((inverse >= start) & (inverse < start + SOURCE_BATCH))
        errors[wrong[rows]] = dist[inverse[rows] - start, pred.target_index[wrong[rows]]]
    return errors / np.sqrt(mesh_m.face_areas.sum())


def compose_through_reference(n_to_r: HardCorrespondence, r_to_m: HardCorrespondence) -> HardCorrespondence:
    """Ground truth N->M from maps N->R and R->M to a shared reference shape R."""
    if n_to_r.n_target != r_to_m.n_source:
        raise DimensionMismatch(
            f"reference map targets {n_to_r.n_target} vertices, second map starts from {r_to_m.n_source}"
        )
    return HardCorrespondence(r_to_m.target_index[n_to_r.target_index], r_to_m.n_target)
