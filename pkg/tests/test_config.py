import json
import tempfile
import unittest
from pathlib import Path

from specmatch import config
from specmatch.config import ConfigError, MatchConfig, config_from_dict, load_config


EXAMPLE = Path(__file__).resolve().parent.parent / "config_example.yaml"
FAUST = Path(__file__).resolve().parent.parent / "configs" / "faust_remeshed.yaml"


class TestConfig(unittest.TestCase):
    def test_defaults(self):
        cfg = MatchConfig()
        self.assertEqual(cfg.k, 200)
        self.assertEqual(cfg.tau, 0.07)
        self.assertEqual(cfg.solver.lambda_, 100.0)
        self.assertEqual(cfg.tta_iters, 15)
        self.assertEqual(cfg.wks.num_energies, 128)
        self.assertEqual(cfg.network.width, 256)

    def test_empty_file_gives_defaults(self):
        with tempfile.TemporaryDirectory() as td:
            path = Path(td, "empty.yaml")
            path.write_text("")
            self.assertEqual(load_config(path).to_dict(), MatchConfig().to_dict())

    def test_example_file(self):
        cfg = load_config(EXAMPLE)
        self.assertEqual(cfg.run_id, "sphere_selfpair")
        self.assertEqual(cfg.epochs, 200)
        self.assertEqual(cfg.extra["pairs"], [["sphere", "sphere"]])
        self.assertEqual(cfg.network.input_dim, cfg.wks.num_energies)

    def test_faust_file_uses_published_settings(self):
        cfg = load_config(FAUST, required_keys=["shapes", "cache_dir", "output_dir"])
        self.assertEqual(cfg.mode, "near_isometric")
        self.assertEqual(cfg.k, 200)
        self.assertEqual((cfg.wks.num_energies, cfg.network.width, cfg.network.n_blocks), (128, 256, 4))
        self.assertEqual((cfg.solver.lambda_, cfg.tau, cfg.lr, cfg.tta_iters), (100.0, 0.07, 1e-3, 15))
        self.assertEqual(len(cfg.extra["shapes"]), 80)
        self.assertNotIn("tr_reg_080.off", " ".join(cfg.extra["shapes"]))

    def test_sections(self):
        cfg = config_from_dict(
            {
                "mode": "partial",
                "spectral": {"k": 30},
                "descriptors": {"num_energies": 32},
                "network": {"width": 8, "init_time": 0.01},
                "solver": {"lambda": 5, "mask_kind": "commutativity"},
                "training": {"seed": 7, "lr": "0.01"},
                "adaptation": {"tta_iters": 0},
                "cache_dir": "cache",
            }
        )
        self.assertEqual(cfg.mode, "partial")
        self.assertEqual(cfg.k, 30)
        self.assertEqual(cfg.network.input_dim, 32)
        self.assertEqual(cfg.network.seed, 7)
        self.assertEqual(cfg.init_time, 0.01)
        self.assertEqual(cfg.solver.lambda_, 5)
        self.assertEqual(cfg.lr, 0.01)
        self.assertEqual(cfg.tta_iters, 0)
        self.assertEqual(cfg.extra, {"cache_dir": "cache"})

    def test_to_dict_reads_back(self):
        cfg = config_from_dict({"spectral": {"k": 40}, "solver": {"lambda": 3.0}, "training": {"seed": 2}})
        self.assertEqual(config_from_dict(cfg.to_dict()).to_dict(), cfg.to_dict())

    def test_adaptation_weights(self):
        self.assertEqual(MatchConfig().adaptation_weights().w_dirichlet, 0.0)
        self.assertEqual(MatchConfig(mode="non_isometric").adaptation_weights().w_dirichlet, 5.0)

    def test_invalid(self):
        bad = [
            {"spectral": {"k": 1}},
            {"spectral": {"k": "many"}},
            {"spectral": {"size": 3}},
            {"solver": {"lambda": -1}},
            {"training": {"batch": 2}},
            {"descriptors": {"num_energies": 1}},
            {"mode": "rigid"},
            {"adaptation": {"inference": "greedy"}},
            {"network": 3},
        ]
        for data in bad:
            with self.subTest(data=data):
                with self.assertRaises(ConfigError):
                    config_from_dict(data)
        with self.assertRaises(ConfigError):
            config_from_dict(["k", 3])

    def test_files(self):
        with tempfile.TemporaryDirectory() as td:
            good = Path(td, "cfg.json")
            good.write_text(json.dumps({"spectral": {"k": 12}}))
            self.assertEqual(load_config(good).k, 12)
            with self.assertRaises(ConfigError):
                load_config(good, required_keys=["shapes"])
            other = Path(td, "cfg.toml")
            other.write_text("k = 3")
            with self.assertRaises(ConfigError):
                load_config(other)
            with self.assertRaises(FileNotFoundError):
                load_config(Path(td, "missing.yaml"))

    def test_config_error_is_specmatch_error(self):
        self.assertTrue(issubclass(config.ConfigError, config.SpecMatchError))


if __name__ == "__main__":
    unittest.main()
