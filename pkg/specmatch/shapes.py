"""Analytic meshes used as fixtures, demos and sanity checks."""

from __future__ import annotations

import numpy as np

from .mesh import TriangleMesh


def single_triangle() -> TriangleMesh:
    """Unit right triangle (0,0,0), (1,0,0), (0,1,0)."""
    return TriangleMesh(
        np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        np.array([[0, 1, 2]]),
        "triangle",
    )


def octahedron() -> TriangleMesh:
    """Regular octahedron with vertices on the coordinate axes.

    Vertex order: +x, -x, +y, -y, +z, -z.
    """
    vertices = np.array(
        [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=np.float64
    )
    faces = np.array(
        [
            [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
            [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
        ]
    )
    return TriangleMesh(vertices, faces, "octahedron")


def half_octahedron() -> tuple[TriangleMesh, np.ndarray]:
    """Upper half of :func:`octahedron` (the four faces around +z).

    Returns the partial mesh and the octahedron index of every kept vertex.
    """
    full = octahedron()
    keep = ~(full.faces == 5).any(axis=1)
    return full.extract_faces(keep, name="half-octahedron")


def icosahedron() -> TriangleMesh:
    """Regular icosahedron inscribed in the unit sphere."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    vertices = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    vertices /= np.linalg.norm(vertices, axis=1, keepdims=True)
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return TriangleMesh(vertices, faces, "icosahedron")


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> TriangleMesh:
    """Loop-style midpoint subdivision of the icosahedron projected on a sphere.

    ``subdivisions`` 3 gives 642 vertices, 4 gives 2562.
    """
    base = icosahedron()
    vertices = [tuple(v) for v in base.vertices]
    faces = base.faces.tolist()
    for _ in range(subdivisions):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                p = (np.asarray(vertices[a]) + np.asarray(vertices[b])) / 2.0
                vertices.append(tuple(p / np.linalg.norm(p)))
                midpoint[key] = len(vertices) - 1
            return midpoint[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            refined.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        faces = refined
    points = radius * np.array(vertices, dtype=np.float64)
    return TriangleMesh(points, np.array(faces, dtype=np.int64), f"icosphere{subdivisions}")


def bumpy_sphere(subdivisions: int = 2, amplitude: float = 0.15, seed: int = 0) -> TriangleMesh:
    """Icosphere with smooth seeded radial bumps, so that no two vertices look alike."""
    sphere = icosphere(subdivisions)
    rng = np.random.default_rng(seed)
    centres = rng.normal(size=(4, 3))
    centres /= np.linalg.norm(centres, axis=1, keepdims=True)
    heights = rng.uniform(0.5, 1.0, size=4) * amplitude
    cos = sphere.vertices @ centres.T
    radial = 1.0 + (heights * np.exp(4.0 * (cos - 1.0))).sum(axis=1)
    return TriangleMesh(sphere.vertices * radial[:, None], sphere.faces, f"bumpy{subdivisions}-{seed}")


def grid(nx: int = 4, ny: int = 4, spacing: float = 1.0) -> TriangleMesh:
    """Flat ``nx`` by ``ny`` vertex grid in the z=0 plane, each cell split along
    its (i, j)-(i+1, j+1) diagonal. Vertex ``i + nx * j`` sits at ``(i, j)``."""
    xs, ys = np.meshgrid(np.arange(nx), np.arange(ny))
    vertices = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)]) * spacing
    faces = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            a = i + nx * j
            b = a + 1
            c = a + nx
            d = c + 1
            faces.append([a, b, d])
            faces.append([a, d, c])
    return TriangleMesh(vertices, np.array(faces), f"grid{nx}x{ny}")


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed proper rotation matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
