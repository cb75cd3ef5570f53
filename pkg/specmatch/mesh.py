"""Triangle meshes, cotangent Laplacians and graph geodesics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import DegenerateFace, IndexOutOfRange

logger = logging.getLogger(__name__)

AREA_TOLERANCE = 1e-12
COT_CLAMP = 1e8
MAX_CLAMPED_FRACTION = 1e-3


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Vertex positions (n x 3, float64) and faces (m x 3, int64).

    Instances are validated on construction and their arrays are made
    read-only, so a mesh can be shared freely between threads.
    """

    vertices: np.ndarray
    faces: np.ndarray
    name: str = "mesh"

    def __post_init__(self) -> None:
        vertices = np.array(self.vertices, dtype=np.float64, copy=True)
        faces = np.array(self.faces, dtype=np.int64, copy=True)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValueError(f"{self.name}: vertices must have shape (n, 3), got {vertices.shape}")
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"{self.name}: faces must have shape (m, 3), got {faces.shape}")

        n = vertices.shape[0]
        if faces.size and (faces.min() < 0 or faces.max() >= n):
            bad = int(np.flatnonzero((faces < 0).any(axis=1) | (faces >= n).any(axis=1))[0])
            raise IndexOutOfRange(
                f"{self.name}: face {bad} references vertex outside [0, {n}): {faces[bad].tolist()}"
            )
        repeated = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
        if repeated.any():
            bad = int(np.flatnonzero(repeated)[0])
            raise DegenerateFace(f"{self.name}: face {bad} repeats a vertex: {faces[bad].tolist()}")

        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

        if faces.size:
            threshold = AREA_TOLERANCE * self.bbox_diagonal ** 2
            small = self.face_areas <= threshold
            if small.any():
                bad = int(np.flatnonzero(small)[0])
                raise DegenerateFace(
                    f"{self.name}: face {bad} has area {self.face_areas[bad]:.3e} <= {threshold:.3e}"
                )

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    @cached_property
    def bbox_diagonal(self) -> float:
        if self.n_vertices == 0:
            return 0.0
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    @cached_property
    def face_areas(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(cross, axis=1)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted ``(i, j)`` rows, ``i < j``."""
        f = self.faces
        pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    @property
    def median_edge_length(self) -> float:
        return float(np.median(self.edge_lengths))

    @cached_property
    def edge_graph(self) -> sparse.csr_matrix:
        """Symmetric sparse adjacency weighted by Euclidean edge length."""
        e = self.edges
        n = self.n_vertices
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.concatenate([self.edge_lengths, self.edge_lengths])
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    @property
    def n_components(self) -> int:
        count, _ = csgraph.connected_components(self.edge_graph, directed=False)
        return int(count)

    def transformed(self, rotation: np.ndarray | None = None, translation=None, scale: float = 1.0) -> "TriangleMesh":
        """Return ``scale * R x + t`` applied to every vertex."""
        v = self.vertices * scale
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=np.float64).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        return TriangleMesh(v, self.faces, self.name)

    def permuted(self, perm: np.ndarray) -> "TriangleMesh":
        """Relabel vertices so that new vertex ``i`` is old vertex ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(perm.size)
        return TriangleMesh(self.vertices[perm], inverse[self.faces], self.name)

    def extract_faces(self, keep: np.ndarray, name: str | None = None) -> tuple["TriangleMesh", np.ndarray]:
        """Sub-mesh made of the faces selected by ``keep``.

        Returns the new mesh and, for every new vertex, its index in ``self``.
        Vertices are kept in their original relative order.
        """
        faces = self.faces[np.asarray(keep)]
        used = np.unique(faces)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(used.size)
        sub = TriangleMesh(self.vertices[used], remap[faces], name or f"{self.name}-part")
        return sub, used


@dataclass(frozen=True, eq=False)
class LaplacianPair:
    """Cotangent stiffness ``W`` and lumped mass diagonal of a mesh."""

    stiffness: sparse.csr_matrix
    mass: np.ndarray
    total_area: float = field(default=0.0)

    @property
    def n(self) -> int:
        return int(self.mass.shape[0])


def cotangents(mesh: TriangleMesh) -> np.ndarray:
    """Cotangent of the interior angle at every face corner, shape (m, 3)."""
    v = mesh.vertices
    f = mesh.faces
    cots = np.empty(f.shape, dtype=np.float64)
    for corner in range(3):
        a = v[f[:, corner]]
        b = v[f[:, (corner + 1) % 3]]
        c = v[f[:, (corner + 2) % 3]]
        u = b - a
        w = c - a
        cross = np.linalg.norm(np.cross(u, w), axis=1)
        dot = np.einsum("ij,ij->i", u, w)
        with np.errstate(divide="ignore", invalid="ignore"):
            cots[:, corner] = dot / cross
    return cots


def compute_laplacian(mesh: TriangleMesh) -> LaplacianPair:
    """Assemble the cotangent stiffness matrix and the lumped mass matrix.

    The weight of edge ``(i, j)`` is ``w_ij = (cot a_ij + cot b_ij) / 2`` over
    the one or two triangles sharing it. ``W`` stores ``-w_ij`` off the
    diagonal and the row sums on it, so ``W`` is positive semi-definite and
    every row sums to zero. Each mass entry is a third of the area of the
    triangles around the vertex.
    """
    n = mesh.n_vertices
    f = mesh.faces
    cots = cotangents(mesh)

    out_of_range = ~np.isfinite(cots) | (np.abs(cots) > COT_CLAMP)
    clamped = int(out_of_range.sum())
    if clamped:
        fraction = clamped / cots.size
        if fraction > MAX_CLAMPED_FRACTION:
            raise DegenerateFace(
                f"{mesh.name}: {clamped} of {cots.size} cotangents exceed {COT_CLAMP:g}; "
                "the mesh has too many near-degenerate triangles"
            )
        logger.warning("%s: clamped %d cotangent(s) to +/-%g", mesh.name, clamped, COT_CLAMP)
        cots = np.nan_to_num(cots, nan=0.0, posinf=COT_CLAMP, neginf=-COT_CLAMP)
        cots = np.clip(cots, -COT_CLAMP, COT_CLAMP)

    # corner c is opposite the edge (c+1, c+2)
    rows = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    cols = np.concatenate([f[:, 2], f[:, 0], f[:, 1]])
    weights = 0.5 * np.concatenate([cots[:, 0], cots[:, 1], cots[:, 2]])

    off = sparse.coo_matrix(
        (np.concatenate([-weights, -weights]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n, n),
    ).tocsr()
    off.sum_duplicates()
    diagonal = -np.asarray(off.sum(axis=1)).ravel()
    stiffness = (off + sparse.diags(diagonal)).tocsr()
    stiffness.sort_indices()

    mass = np.bincount(f.ravel(), weights=np.repeat(mesh.face_areas, 3), minlength=n) / 3.0
    if np.any(mass <= 0):
        lonely = int(np.flatnonzero(mass <= 0)[0])
        raise DegenerateFace(f"{mesh.name}: vertex {lonely} belongs to no face")
    return LaplacianPair(stiffness=stiffness, mass=mass, total_area=float(mass.sum()))


def geodesic_distances(mesh: TriangleMesh, source: int) -> np.ndarray:
    """Dijkstra distances over the edge graph from ``source`` to every vertex.

    Vertices not connected to ``source`` get ``inf``.
    """
    if not 0 <= int(source) < mesh.n_vertices:
        raise IndexOutOfRange(f"{mesh.name}: source {source} outside [0, {mesh.n_vertices})")
    return csgraph.dijkstra(mesh.edge_graph, directed=False, indices=int(source))


def geodesic_matrix(mesh: TriangleMesh, sources: np.ndarray) -> np.ndarray:
    """Distances from each of ``sources`` (rows) to all vertices (columns)."""
    sources = np.asarray(sources, dtype=np.int64)
    if sources.size and (sources.min() < 0 or sources.max() >= mesh.n_vertices):
        raise IndexOutOfRange(f"{mesh.name}: geodesic source outside [0, {mesh.n_vertices})")
    return np.atleast_2d(csgraph.dijkstra(mesh.edge_graph, directed=False, indices=sources))
