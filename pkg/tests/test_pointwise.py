import unittest
from unittest import mock

import numpy as np
from numpy.testing import assert_allclose

from specmatch import autodiff as ad
from specmatch import pointwise, shapes
from specmatch.errors import DimensionMismatch, IndexOutOfRange, NonFiniteScore
from specmatch.fmap import FunctionalMap
from specmatch.mesh import compute_laplacian
from specmatch.pointwise import (
    HardCorrespondence,
    fmap_to_pmap,
    nearest_rows,
    nn_pmap,
    pmap_to_fmap,
    soft_pmap,
    spectral_filtered_from_features,
    spectral_filtered_pmap,
    streamed_soft_product,
)
from specmatch.spectral import eigendecompose


class TestSoftMap(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.f_n = rng.normal(size=(7, 4))
        self.f_m = rng.normal(size=(9, 4))

    def test_rows_are_distributions(self):
        pi = soft_pmap(self.f_n, self.f_m, tau=0.5)
        self.assertEqual((pi.n_source, pi.n_target), (7, 9))
        self.assertTrue(np.all(pi.value >= 0))
        assert_allclose(pi.value.sum(axis=1), np.ones(7))

    def test_low_temperature_is_argmax(self):
        pi = soft_pmap(self.f_n, self.f_m, tau=1e-4)
        best = np.argmax(self.f_n @ self.f_m.T, axis=1)
        assert_allclose(pi.value[np.arange(7), best], 1.0, atol=1e-6)

    def test_gradient(self):
        f_n, f_m = ad.parameter(self.f_n), ad.parameter(self.f_m)
        target = np.random.default_rng(1).uniform(size=(7, 9))
        fn = lambda: ad.frobenius_sq(soft_pmap(f_n, f_m, tau=0.3).matrix - target)
        self.assertLess(ad.gradient_check(fn, [f_n, f_m]), 1e-6)

    def test_errors(self):
        with self.assertRaises(ValueError):
            soft_pmap(self.f_n, self.f_m, tau=0.0)
        with self.assertRaises(DimensionMismatch):
            soft_pmap(self.f_n, self.f_m[:, :3])
        bad = self.f_n.copy()
        bad[2, 1] = np.nan
        with self.assertRaises(NonFiniteScore):
            soft_pmap(bad, self.f_m)
        with mock.patch.object(pointwise, "MAX_DENSE_ENTRIES", 50):
            with self.assertRaises(MemoryError):
                soft_pmap(self.f_n, self.f_m)

    def test_streamed_product_matches_dense(self):
        values = np.random.default_rng(2).normal(size=(9, 3))
        dense = soft_pmap(self.f_n, self.f_m, tau=0.2).value @ values
        assert_allclose(streamed_soft_product(self.f_n, self.f_m, 0.2, values, block_rows=3), dense, atol=1e-12)


class TestHardCorrespondence(unittest.TestCase):
    def test_copy_and_read_only(self):
        index = np.array([1, 0, 2])
        corr = HardCorrespondence(index, 3)
        index[0] = 2
        self.assertEqual(corr.target_index.tolist(), [1, 0, 2])
        with self.assertRaises(ValueError):
            corr.target_index[0] = 0

    def test_matrix_and_accuracy(self):
        corr = HardCorrespondence(np.array([1, 0, 2, 2]), 3)
        self.assertEqual(corr.as_matrix().toarray().tolist(), [[0, 1, 0], [1, 0, 0], [0, 0, 1], [0, 0, 1]])
        self.assertAlmostEqual(corr.accuracy(HardCorrespondence(np.array([1, 0, 0, 2]), 3)), 0.75)
        with self.assertRaises(DimensionMismatch):
            corr.accuracy(HardCorrespondence(np.array([1]), 3))
        with self.assertRaises(IndexOutOfRange):
            HardCorrespondence(np.array([0, -1]), 3)


class TestNearest(unittest.TestCase):
    def test_ties_go_to_smallest_index(self):
        reference = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        self.assertEqual(nearest_rows(np.array([[2.0, 0.0], [0.5, 0.5]]), reference).tolist(), [0, 0])

    def test_blocks_agree_with_one_pass(self):
        rng = np.random.default_rng(3)
        query, reference = rng.normal(size=(50, 3)), rng.normal(size=(20, 3))
        whole = nearest_rows(query, reference)
        with mock.patch.object(pointwise, "NN_BLOCK_ENTRIES", 40):
            self.assertTrue(np.array_equal(nearest_rows(query, reference), whole))

    def test_nn_pmap_recovers_permutation(self):
        features = np.random.default_rng(4).normal(size=(30, 5))
        perm = np.random.default_rng(5).permutation(30)
        self.assertEqual(nn_pmap(features[perm], features).target_index.tolist(), perm.tolist())


class TestSpectralConversions(unittest.TestCase):
    def setUp(self):
        mesh = shapes.bumpy_sphere(1)
        self.perm = np.random.default_rng(6).permutation(mesh.n_vertices)
        self.basis_m = eigendecompose(compute_laplacian(mesh), 9)
        self.basis_n = eigendecompose(compute_laplacian(mesh.permuted(self.perm)), 9)
        self.f_m = 10 * np.eye(mesh.n_vertices)
        self.f_n = self.f_m[self.perm]

    def test_hard_identity_gives_identity_map(self):
        identity = HardCorrespondence(np.arange(self.basis_m.n), self.basis_m.n)
        assert_allclose(pmap_to_fmap(identity, self.basis_m, self.basis_m).value, np.eye(9), atol=1e-10)

    def test_soft_map_gradient(self):
        rng = np.random.default_rng(7)
        f_n = ad.parameter(rng.normal(size=(self.basis_n.n, 3)))
        f_m = ad.parameter(rng.normal(size=(self.basis_m.n, 3)))
        weights = np.random.default_rng(8).normal(size=(9, 9))

        def fn():
            pi = soft_pmap(f_n, f_m, tau=0.5)
            return ad.total(ad.multiply(pmap_to_fmap(pi, self.basis_m, self.basis_n).matrix, weights))

        self.assertLess(ad.gradient_check(fn, [f_n, f_m]), 1e-6)

    def test_spectral_filtering_recovers_permutation(self):
        pi = soft_pmap(self.f_n, self.f_m, tau=0.07)
        corr = spectral_filtered_pmap(pi, self.basis_m, self.basis_n)
        self.assertEqual(corr.target_index.tolist(), self.perm.tolist())
        streamed = spectral_filtered_from_features(self.f_n, self.f_m, 0.07, self.basis_m, self.basis_n)
        self.assertTrue(np.array_equal(streamed.target_index, corr.target_index))

    def test_fmap_to_pmap(self):
        fmap = pmap_to_fmap(HardCorrespondence(self.perm, self.basis_m.n), self.basis_m, self.basis_n)
        self.assertEqual(fmap_to_pmap(fmap, self.basis_m, self.basis_n).target_index.tolist(), self.perm.tolist())
        with self.assertRaises(DimensionMismatch):
            fmap_to_pmap(FunctionalMap(ad.constant(np.eye(5))), self.basis_m, self.basis_n)

    def test_shape_checks(self):
        with self.assertRaises(DimensionMismatch):
            pmap_to_fmap(HardCorrespondence(np.zeros(5, dtype=int), self.basis_m.n), self.basis_m, self.basis_n)


if __name__ == "__main__":
    unittest.main()
