import tempfile
import unittest
from pathlib import Path

import numpy as np

from specmatch import shapes
from specmatch.errors import DegenerateFace, IndexOutOfRange, ParseError
from specmatch.formats import load_mesh, read_correspondence, write_correspondence, write_off
from specmatch.pointwise import HardCorrespondence


OBJ_TEXT = """# square
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
f 1 2 3
f 1/1 3/3 -1
"""

PLY_TEXT = """ply
format ascii 1.0
comment two triangles
element vertex 4
property float x
property float y
property float z
element face 2
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
1 1 0
0 1 0
3 0 1 2
3 0 2 3
"""


class TestMeshFiles(unittest.TestCase):
    def test_off_write_then_read_keeps_order(self):
        mesh = shapes.bumpy_sphere(1)
        with tempfile.TemporaryDirectory() as td:
            path = write_off(mesh, Path(td, "bumpy.off"))
            loaded = load_mesh(path)
        self.assertEqual(loaded.name, "bumpy")
        self.assertTrue(np.array_equal(loaded.vertices, mesh.vertices))
        self.assertTrue(np.array_equal(loaded.faces, mesh.faces))

    def test_obj_and_ply_agree(self):
        with tempfile.TemporaryDirectory() as td:
            Path(td, "square.obj").write_text(OBJ_TEXT)
            Path(td, "square.ply").write_text(PLY_TEXT)
            obj = load_mesh(Path(td, "square.obj"))
            ply = load_mesh(Path(td, "square.ply"))
        self.assertEqual(obj.faces.tolist(), [[0, 1, 2], [0, 2, 3]])
        self.assertTrue(np.array_equal(obj.faces, ply.faces))
        self.assertTrue(np.allclose(obj.vertices, ply.vertices))

    def test_off_counts_on_header_line(self):
        with tempfile.TemporaryDirectory() as td:
            path = Path(td, "tri.off")
            path.write_text("OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
            self.assertEqual(load_mesh(path).n_faces, 1)

    def test_bad_files(self):
        cases = {
            "missing.off": ("COFF\n3 1 0\n", ParseError),
            "short.off": ("OFF\n3 1 0\n0 0 0\n", ParseError),
            "quad.off": ("OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n", ParseError),
            "range.off": ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n", IndexOutOfRange),
            "flat.off": ("OFF\n3 1 0\n0 0 0\n1 0 0\n2 0 0\n3 0 1 2\n", DegenerateFace),
            "mesh.stl": ("solid\n", ParseError),
            "binary.ply": ("ply\nformat binary_little_endian 1.0\nend_header\n", ParseError),
            "letter.ply": (PLY_TEXT.replace("3 0 2 3", "3 0 2 x"), ParseError),
            "count.ply": (PLY_TEXT.replace("element face 2", "element face two"), ParseError),
            "nocount.ply": (PLY_TEXT.replace("element face 2", "element face"), ParseError),
            "ragged.ply": (PLY_TEXT.replace("3 0 2 3", "3 0 2"), ParseError),
        }
        with tempfile.TemporaryDirectory() as td:
            for name, (text, error) in cases.items():
                with self.subTest(name=name):
                    path = Path(td, name)
                    path.write_text(text)
                    with self.assertRaises(error):
                        load_mesh(path)


class TestCorrespondenceFiles(unittest.TestCase):
    def test_write_then_read(self):
        corr = HardCorrespondence(np.array([2, 0, 1, 1]), 3)
        with tempfile.TemporaryDirectory() as td:
            path = write_correspondence(corr, Path(td, "pred.corr"))
            self.assertEqual(path.read_text().splitlines()[0], "#specmatch-corr v1 nN=4 nM=3")
            loaded = read_correspondence(path)
        self.assertEqual(loaded.target_index.tolist(), [2, 0, 1, 1])
        self.assertEqual(loaded.n_target, 3)

    def test_malformed(self):
        with tempfile.TemporaryDirectory() as td:
            bad_header = Path(td, "a.corr")
            bad_header.write_text("0\n1\n")
            wrong_count = Path(td, "b.corr")
            wrong_count.write_text("#specmatch-corr v1 nN=3 nM=2\n0\n1\n")
            out_of_range = Path(td, "c.corr")
            out_of_range.write_text("#specmatch-corr v1 nN=2 nM=2\n0\n2\n")
            with self.assertRaises(ParseError):
                read_correspondence(bad_header)
            with self.assertRaises(ParseError):
                read_correspondence(wrong_count)
            with self.assertRaises(IndexOutOfRange):
                read_correspondence(out_of_range)


if __name__ == "__main__":
    unittest.main()
