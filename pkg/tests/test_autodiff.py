import unittest

import numpy as np

from specmatch import autodiff as ad
from specmatch import shapes
from specmatch.errors import DimensionMismatch, TapeConsumed
from specmatch.mesh import compute_laplacian
from specmatch.spectral import eigendecompose


class TestPrimitives(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.a = ad.parameter(rng.normal(size=(4, 3)), "a")
        self.b = ad.parameter(rng.normal(size=(3, 5)), "b")
        self.bias = ad.parameter(rng.normal(size=(1, 5)), "bias")

    def test_composite_gradient(self):
        def fn():
            h = ad.matmul(self.a, self.b) + self.bias
            h = ad.leaky_relu(h, 0.1)
            p = ad.softmax_rows(ad.scale(h, 2.0))
            q = ad.pad_columns(ad.transpose(self.a), 7)
            return ad.frobenius_sq(p - 0.2) + ad.total(ad.exp(ad.scale(q, 0.5))) + ad.total(ad.multiply(h, h))

        self.assertLess(ad.gradient_check(fn, [self.a, self.b, self.bias]), 1e-6)

    def test_operators_build_the_same_graph(self):
        y = (self.a @ self.b) * 2.0 - self.bias
        self.assertEqual(y.node.op, "sub")
        z = np.ones((2, 4)) @ self.a
        self.assertEqual(z.node.op, "matmul")
        self.assertEqual(z.shape, (2, 3))

    def test_fan_out_accumulates(self):
        x = ad.parameter(np.array([[1.5, -2.0]]))
        loss = ad.total(x * x + x)
        loss.backward()
        np.testing.assert_allclose(x.grad, 2 * x.value + 1)

    def test_leaf_gradients_sum_across_passes(self):
        x = ad.parameter(np.array([[1.0, 2.0]]))
        ad.backward(ad.total(ad.scale(x, 3.0)))
        ad.backward(ad.total(ad.scale(x, 4.0)))
        np.testing.assert_allclose(x.grad, [[7.0, 7.0]])
        x.zero_grad()
        self.assertFalse(x.grad.any())

    def test_tape_is_consumed(self):
        loss = ad.frobenius_sq(self.a)
        loss.backward()
        with self.assertRaises(TapeConsumed):
            loss.backward()

    def test_constants_record_nothing(self):
        y = ad.matmul(np.ones((2, 2)), np.ones((2, 2)))
        self.assertIsNone(y.node)
        self.assertFalse(y.requires_grad)
        ad.backward(ad.total(y))

    def test_shape_errors(self):
        with self.assertRaises(DimensionMismatch):
            ad.matmul(self.a, self.a)
        with self.assertRaises(DimensionMismatch):
            ad.backward(self.a)
        with self.assertRaises(DimensionMismatch):
            ad.pad_columns(self.a, 2)

    def test_softmax_rows_is_stable(self):
        p = ad.softmax_rows(np.array([[1000.0, 1000.0], [-1000.0, 0.0]]))
        np.testing.assert_allclose(p.value, [[0.5, 0.5], [0.0, 1.0]])


class TestSpectralOps(unittest.TestCase):
    def setUp(self):
        self.mesh = shapes.bumpy_sphere(1)
        self.lap = compute_laplacian(self.mesh)
        self.basis = eigendecompose(self.lap, 10)

    def test_spectral_diffuse_gradient(self):
        rng = np.random.default_rng(1)
        x = ad.parameter(rng.normal(size=(self.mesh.n_vertices, 3)))
        log_t = ad.parameter(np.log([0.05, 0.2, 1.0]))
        weights = rng.normal(size=(self.mesh.n_vertices, 3))
        b = self.basis

        def fn():
            out = ad.spectral_diffuse(b.eigenvalues, b.eigenfunctions, b.pinv, x, ad.exp(log_t))
            return ad.total(ad.multiply(out, weights))

        self.assertLess(ad.gradient_check(fn, [x, log_t]), 1e-6)

    def test_spectral_diffuse_checks_channels(self):
        b = self.basis
        with self.assertRaises(DimensionMismatch):
            ad.spectral_diffuse(b.eigenvalues, b.eigenfunctions, b.pinv, np.ones((self.mesh.n_vertices, 3)), np.ones(2))

    def test_quadratic_form(self):
        y = ad.parameter(np.random.default_rng(2).normal(size=(self.mesh.n_vertices, 3)))
        value = ad.quadratic_form(self.lap.stiffness, y)
        self.assertAlmostEqual(value.item(), float(np.trace(y.value.T @ (self.lap.stiffness @ y.value))))
        self.assertLess(ad.gradient_check(lambda: ad.quadratic_form(self.lap.stiffness, y), [y]), 1e-6)


if __name__ == "__main__":
    unittest.main()
