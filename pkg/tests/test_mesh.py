import unittest

import numpy as np
from numpy.testing import assert_allclose

from specmatch import shapes
from specmatch.errors import DegenerateFace, IndexOutOfRange
from specmatch.mesh import TriangleMesh, compute_laplacian, cotangents, geodesic_distances, geodesic_matrix


FIXTURES = [
    shapes.single_triangle,
    shapes.octahedron,
    lambda: shapes.half_octahedron()[0],
    shapes.icosahedron,
    lambda: shapes.icosphere(2),
    shapes.grid,
    lambda: shapes.bumpy_sphere(1),
]


class TestTriangleMesh(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(IndexOutOfRange):
            TriangleMesh(np.eye(3), np.array([[0, 1, 3]]))
        with self.assertRaises(DegenerateFace):
            TriangleMesh(np.eye(3), np.array([[0, 1, 1]]))
        collinear = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]])
        with self.assertRaises(DegenerateFace):
            TriangleMesh(collinear, np.array([[0, 1, 2]]))

    def test_arrays_are_read_only(self):
        mesh = shapes.octahedron()
        with self.assertRaises(ValueError):
            mesh.vertices[0, 0] = 5.0

    def test_statistics(self):
        mesh = shapes.grid(4, 4)
        self.assertEqual(mesh.n_vertices, 16)
        self.assertEqual(mesh.n_faces, 18)
        self.assertEqual(mesh.n_components, 1)
        self.assertEqual(mesh.edges.shape[0], 33)
        self.assertAlmostEqual(mesh.median_edge_length, 1.0)
        self.assertAlmostEqual(mesh.face_areas.sum(), 9.0)

    def test_fixture_sizes(self):
        self.assertEqual(shapes.icosphere(3).n_vertices, 642)
        self.assertEqual(shapes.icosahedron().n_faces, 20)
        half, kept = shapes.half_octahedron()
        self.assertEqual(half.n_faces, 4)
        self.assertEqual(kept.tolist(), [0, 1, 2, 3, 4])

    def test_permuted_and_transformed(self):
        mesh = shapes.bumpy_sphere(1)
        perm = np.random.default_rng(3).permutation(mesh.n_vertices)
        moved = mesh.permuted(perm)
        assert_allclose(moved.vertices, mesh.vertices[perm])
        assert_allclose(moved.face_areas.sum(), mesh.face_areas.sum(), rtol=1e-12)
        rotation = shapes.random_rotation(np.random.default_rng(0))
        turned = mesh.transformed(rotation, translation=[1.0, 2.0, 3.0])
        assert_allclose(turned.edge_lengths, mesh.edge_lengths, rtol=1e-10)


class TestLaplacian(unittest.TestCase):
    def test_unit_right_triangle(self):
        lap = compute_laplacian(shapes.single_triangle())
        w = lap.stiffness.toarray()
        self.assertAlmostEqual(-w[0, 1], 0.5, delta=1e-12)
        self.assertAlmostEqual(-w[0, 2], 0.5, delta=1e-12)
        self.assertLessEqual(abs(w[1, 2]), 1e-12)
        assert_allclose(lap.mass, np.full(3, 1.0 / 6.0), atol=1e-15)
        self.assertAlmostEqual(lap.total_area, 0.5)

    def test_fixture_invariants(self):
        for make in FIXTURES:
            mesh = make()
            with self.subTest(mesh=mesh.name):
                lap = compute_laplacian(mesh)
                w = lap.stiffness.toarray()
                self.assertLessEqual(np.abs(w - w.T).max(), 1e-14)
                self.assertLessEqual(np.abs(w.sum(axis=1)).max(), 1e-10)
                self.assertGreaterEqual(np.linalg.eigvalsh(w).min(), -1e-10)
                assert_allclose(lap.mass.sum(), mesh.face_areas.sum(), rtol=1e-12)

    def test_quadratic_form_is_edge_sum(self):
        mesh = shapes.octahedron()
        lap = compute_laplacian(mesh)
        x = mesh.vertices
        w = lap.stiffness.toarray()
        edge_sum = sum(-w[i, j] * np.sum((x[i] - x[j]) ** 2) for i, j in mesh.edges)
        self.assertAlmostEqual(np.trace(x.T @ lap.stiffness @ x), edge_sum, delta=1e-12)

    def test_permutation_equivariance(self):
        mesh = shapes.bumpy_sphere(1)
        perm = np.random.default_rng(1).permutation(mesh.n_vertices)
        w = compute_laplacian(mesh).stiffness.toarray()
        w_perm = compute_laplacian(mesh.permuted(perm)).stiffness.toarray()
        assert_allclose(w_perm, w[np.ix_(perm, perm)], atol=1e-12)

    def test_cotangents_of_equilateral_triangle(self):
        mesh = TriangleMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]]), np.array([[0, 1, 2]]))
        assert_allclose(cotangents(mesh), np.full((1, 3), 1 / np.sqrt(3)), rtol=1e-12)


class TestGeodesics(unittest.TestCase):
    def test_grid_distances(self):
        mesh = shapes.grid(3, 3)
        d = geodesic_distances(mesh, 0)
        self.assertAlmostEqual(d[1], 1.0)
        self.assertAlmostEqual(d[4], np.sqrt(2))
        self.assertAlmostEqual(d[8], 2 * np.sqrt(2))
        rows = geodesic_matrix(mesh, np.array([0, 8]))
        assert_allclose(rows[0], d)
        self.assertAlmostEqual(rows[1, 0], 2 * np.sqrt(2))

    def test_bad_source(self):
        with self.assertRaises(IndexOutOfRange):
            geodesic_distances(shapes.octahedron(), 6)


if __name__ == '__main__':
    unittest.main()
