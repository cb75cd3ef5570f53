from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Iterable, Optional
import json
import os

try:
    import yaml  # type: ignore
except Exception:  # pragma: no cover - optional dependency
    yaml = None

from .descriptors import WksConfig
from .errors import SpecMatchError
from .fmap import SolverConfig
from .losses import LossWeights
from .network import NetworkConfig

MATCH_MODES = ("near_isometric", "non_isometric", "partial")
INFERENCE_KINDS = ("auto", "spectral", "nn", "fmap")
SECTIONS = ("spectral", "descriptors", "network", "solver", "loss_weights", "training", "adaptation")


class ConfigError(SpecMatchError):
    """Custom error for configuration issues."""


@dataclass
class MatchConfig:
    """Every knob of a matching run. The defaults are the published settings."""

    k: int = 200
    eigensolver: str = "auto"
    wks: WksConfig = field(default_factory=WksConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    init_time: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    tau: float = 0.07
    lr: float = 1e-3
    epochs: int = 1
    seed: int = 0
    accumulate_pairs: int = 1
    workers: int = 1
    progress: bool = True
    tta_iters: int = 15
    dirichlet_weight: float = 5.0
    keep_best: bool = True
    mode: str = "near_isometric"
    inference: str = "auto"
    run_id: str = "specmatch"
    project_root: str | None = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ConfigError("k must be at least 2")
        if self.tta_iters < 0:
            raise ConfigError("tta_iters must be nonnegative")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.tau <= 0 or self.lr <= 0:
            raise ConfigError("tau and lr must be positive")
        if self.accumulate_pairs < 1 or self.workers < 1:
            raise ConfigError("accumulate_pairs and workers must be at least 1")
        if self.dirichlet_weight < 0:
            raise ConfigError("dirichlet_weight must be nonnegative")
        if self.mode not in MATCH_MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MATCH_MODES}")
        if self.inference not in INFERENCE_KINDS:
            raise ConfigError(f"unknown inference {self.inference!r}; expected one of {INFERENCE_KINDS}")

    def adaptation_weights(self) -> LossWeights:
        """Loss weights used during test-time adaptation for this mode."""
        if self.mode == "non_isometric":
            return LossWeights(self.weights.w_bij, self.weights.w_orth, self.weights.w_couple, self.dirichlet_weight)
        return self.weights

    def to_dict(self) -> Dict[str, Any]:
        """Sectioned mapping that :func:`config_from_dict` reads back."""
        solver = asdict(self.solver)
        solver["lambda"] = solver.pop("lambda_")
        network = asdict(self.network)
        network.pop("input_dim")
        network.pop("seed")
        network["init_time"] = self.init_time
        return {
            "run_id": self.run_id,
            "mode": self.mode,
            "spectral": {"k": self.k, "eigensolver": self.eigensolver},
            "descriptors": asdict(self.wks),
            "network": network,
            "solver": solver,
            "loss_weights": asdict(self.weights),
            "training": {
                "epochs": self.epochs,
                "lr": self.lr,
                "tau": self.tau,
                "seed": self.seed,
                "accumulate_pairs": self.accumulate_pairs,
                "workers": self.workers,
                "progress": self.progress,
            },
            "adaptation": {
                "tta_iters": self.tta_iters,
                "dirichlet_weight": self.dirichlet_weight,
                "keep_best": self.keep_best,
                "inference": self.inference,
            },
            **self.extra,
        }


def _load_raw(path: str) -> Dict[str, Any]:
    """Load raw configuration data from YAML or JSON."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Configuration file '{path}' does not exist.")

    with open(path, "r", encoding="utf-8") as f:
        if path.lower().endswith((".yaml", ".yml")):
            if yaml is None:
                raise ConfigError("PyYAML is required to load YAML files.")
            return yaml.safe_load(f) or {}
        elif path.lower().endswith(".json"):
            return json.load(f)
        else:
            raise ConfigError("Unsupported config format. Use YAML or JSON.")


def _section(data: Dict[str, Any], name: str) -> Dict[str, Any]:
    section = data.pop(name, None) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"Config section '{name}' must be a mapping.")
    return dict(section)


def _build(cls, values: Dict[str, Any], section: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown key(s) in section '{section}': " + ", ".join(unknown))
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid section '{section}': {e}") from e


def _pop_typed(section: Dict[str, Any], key: str, kind, default, where: str):
    if key not in section:
        return default
    value = section.pop(key)
    if value is None:
        return None
    try:
        return kind(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"'{where}.{key}' must be {kind.__name__}, got {value!r}") from e


def config_from_dict(data: Dict[str, Any]) -> MatchConfig:
    """Build a :class:`MatchConfig` from a sectioned mapping; missing keys keep defaults."""
    if not isinstance(data, dict):
        raise ConfigError("Configuration root must be a mapping/dictionary.")
    data = dict(data)
    defaults = MatchConfig()

    spectral = _section(data, "spectral")
    k = _pop_typed(spectral, "k", int, defaults.k, "spectral")
    eigensolver = str(spectral.pop("eigensolver", defaults.eigensolver))
    _reject_leftovers(spectral, "spectral")

    wks = _build(WksConfig, _section(data, "descriptors"), "descriptors")

    network_raw = _section(data, "network")
    init_time = _pop_typed(network_raw, "init_time", float, None, "network")

    solver_raw = _section(data, "solver")
    if "lambda" in solver_raw:
        solver_raw["lambda_"] = solver_raw.pop("lambda")
    solver = _build(SolverConfig, solver_raw, "solver")
    weights = _build(LossWeights, _section(data, "loss_weights"), "loss_weights")

    training = _section(data, "training")
    seed = _pop_typed(training, "seed", int, defaults.seed, "training")
    network_raw.setdefault("seed", seed)
    network_raw["input_dim"] = wks.num_energies
    network = _build(NetworkConfig, network_raw, "network")
    values: Dict[str, Any] = {
        "epochs": _pop_typed(training, "epochs", int, defaults.epochs, "training"),
        "lr": _pop_typed(training, "lr", float, defaults.lr, "training"),
        "tau": _pop_typed(training, "tau", float, defaults.tau, "training"),
        "accumulate_pairs": _pop_typed(training, "accumulate_pairs", int, defaults.accumulate_pairs, "training"),
        "workers": _pop_typed(training, "workers", int, defaults.workers, "training"),
        "progress": _pop_typed(training, "progress", bool, defaults.progress, "training"),
    }
    _reject_leftovers(training, "training")

    adaptation = _section(data, "adaptation")
    values.update(
        tta_iters=_pop_typed(adaptation, "tta_iters", int, defaults.tta_iters, "adaptation"),
        dirichlet_weight=_pop_typed(adaptation, "dirichlet_weight", float, defaults.dirichlet_weight, "adaptation"),
        keep_best=_pop_typed(adaptation, "keep_best", bool, defaults.keep_best, "adaptation"),
        inference=str(adaptation.pop("inference", defaults.inference)),
    )
    _reject_leftovers(adaptation, "adaptation")

    return MatchConfig(
        k=k,
        eigensolver=eigensolver,
        wks=wks,
        network=network,
        init_time=init_time,
        solver=solver,
        weights=weights,
        seed=seed,
        mode=str(data.pop("mode", defaults.mode)),
        run_id=str(data.pop("run_id", defaults.run_id)),
        project_root=data.pop("project_root", None),
        extra=data,
        **values,
    )


def _reject_leftovers(section: Dict[str, Any], name: str) -> None:
    if section:
        raise ConfigError(f"Unknown key(s) in section '{name}': " + ", ".join(sorted(section)))


def load_config(path: str, required_keys: Optional[Iterable[str]] = None) -> MatchConfig:
    """Load a configuration file and validate required keys.

    Parameters
    ----------
    path:
        Path to YAML or JSON configuration file.
    required_keys:
        Top-level keys that must exist in the configuration. Nothing is
        required by default: an empty file gives the published settings.

    Returns
    -------
    MatchConfig
        Parsed configuration dataclass.
    """
    data = _load_raw(str(path))
    if not isinstance(data, dict):
        raise ConfigError("Configuration root must be a mapping/dictionary.")

    missing = [k for k in (required_keys or ()) if k not in data]
    if missing:
        raise ConfigError(
            "Missing required config key(s): " + ", ".join(missing)
        )
    return config_from_dict(data)
