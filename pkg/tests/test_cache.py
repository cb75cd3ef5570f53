import tempfile
import unittest
from pathlib import Path

import numpy as np

from specmatch import cache, shapes
from specmatch.config import MatchConfig
from specmatch.descriptors import WksConfig, compute_wks
from specmatch.errors import CacheError
from specmatch.formats import write_off
from specmatch.utils import content_hash


WKS = WksConfig(num_energies=16, sigma_factor=2.0)


class TestSpectralCache(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)
        self.mesh_path = write_off(shapes.bumpy_sphere(1), self.root / "bumpy.off")
        self.cache_dir = self.root / "cache"

    def tearDown(self):
        self._tmp.cleanup()

    def test_preprocess_skips_fresh_entries(self):
        path, fresh = cache.preprocess_mesh(self.mesh_path, self.cache_dir, 12, WKS)
        self.assertTrue(fresh)
        self.assertEqual(path.name, f"bumpy-{content_hash(self.mesh_path)}.npz")
        _, again = cache.preprocess_mesh(self.mesh_path, self.cache_dir, 12, WKS)
        self.assertFalse(again)
        _, other_k = cache.preprocess_mesh(self.mesh_path, self.cache_dir, 10, WKS)
        self.assertTrue(other_k)
        _, other_wks = cache.preprocess_mesh(self.mesh_path, self.cache_dir, 10, WksConfig(num_energies=20, sigma_factor=2.0))
        self.assertTrue(other_wks)

    def test_entry_contents(self):
        path, _ = cache.preprocess_mesh(self.mesh_path, self.cache_dir, 12, WKS)
        entry = cache.load_entry(path)
        self.assertEqual(entry.content_hash, content_hash(self.mesh_path))
        self.assertEqual(entry.k, 12)
        self.assertEqual(entry.wks_config, WKS)
        self.assertEqual(entry.wks.shape, (42, 16))
        basis = entry.basis()
        np.testing.assert_allclose(basis.pinv @ basis.eigenfunctions, np.eye(12), atol=1e-10)

    def test_edited_mesh_gets_a_new_entry(self):
        first, _ = cache.preprocess_mesh(self.mesh_path, self.cache_dir, 12, WKS)
        write_off(shapes.bumpy_sphere(1, seed=3), self.mesh_path)
        second, fresh = cache.preprocess_mesh(self.mesh_path, self.cache_dir, 12, WKS)
        self.assertTrue(fresh)
        self.assertNotEqual(first, second)

    def test_corrupt_entry_is_rebuilt(self):
        path, _ = cache.preprocess_mesh(self.mesh_path, self.cache_dir, 12, WKS)
        path.write_bytes(b"garbage")
        with self.assertRaises(CacheError):
            cache.load_entry(path)
        with self.assertLogs("specmatch.cache", "WARNING"):
            _, fresh = cache.preprocess_mesh(self.mesh_path, self.cache_dir, 12, WKS)
        self.assertTrue(fresh)
        self.assertEqual(cache.load_entry(path).k, 12)

    def test_load_shape(self):
        cache.preprocess_mesh(self.mesh_path, self.cache_dir, 12, WKS)
        cfg = MatchConfig(k=12, wks=WKS)
        shape = cache.load_shape(self.mesh_path, self.cache_dir, cfg)
        self.assertEqual(shape.name, "bumpy")
        self.assertEqual(shape.basis.k, 12)
        self.assertAlmostEqual(shape.area, shape.mesh.face_areas.sum())

    def test_load_shape_truncates(self):
        cache.preprocess_mesh(self.mesh_path, self.cache_dir, 12, WKS)
        shape = cache.load_shape(self.mesh_path, self.cache_dir, MatchConfig(k=8, wks=WKS))
        self.assertEqual(shape.basis.k, 8)
        np.testing.assert_allclose(shape.wks, compute_wks(shape.basis, WKS))

    def test_load_shape_errors(self):
        with self.assertRaises(CacheError) as ctx:
            cache.load_shape(self.mesh_path, self.cache_dir, MatchConfig(k=8, wks=WKS))
        self.assertIn("specmatch preprocess", str(ctx.exception))
        cache.preprocess_mesh(self.mesh_path, self.cache_dir, 8, WKS)
        with self.assertRaises(CacheError):
            cache.load_shape(self.mesh_path, self.cache_dir, MatchConfig(k=12, wks=WKS))


if __name__ == "__main__":
    unittest.main()
