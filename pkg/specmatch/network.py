"""Spectral-diffusion feature network, Adam and the checkpoint format.

The network is a simplified stand-in for DiffusionNet: a stack of residual
blocks, each diffusing every channel with its own learned time, followed by
two affine layers with a leaky-ReLU in between. There are no spatial
gradient features or per-vertex frames; the matching losses do not depend
on the architecture.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch, NonFiniteActivation, ParseError
from .spectral import SpectralBasis
from .utils import atomic_write

MAGIC = b"SMNET01"
FORMAT_VERSION = 1


@dataclass
class NetworkConfig:
    input_dim: int = 128
    width: int = 256
    n_blocks: int = 4
    slope: float = 0.01
    seed: int = 0


class FeatureNet:
    """Parameters ``Theta`` of the feature extractor shared by both shapes."""

    def __init__(self, config: NetworkConfig, params: dict[str, ad.DiffTensor], steps: int = 0):
        self.config = config
        self.params = params
        self.steps = steps

    @classmethod
    def initialize(cls, config: NetworkConfig, init_time: float) -> "FeatureNet":
        """Seeded fan-in uniform weights; every diffusion time starts at ``init_time``."""
        if init_time <= 0:
            raise ValueError("initial diffusion time must be positive")
        rng = np.random.default_rng(config.seed)
        params: dict[str, ad.DiffTensor] = {}
        for b in range(config.n_blocks):
            c_in = config.input_dim if b == 0 else config.width
            prefix = f"block{b}"
            params[f"{prefix}.log_time"] = ad.parameter(np.full(c_in, np.log(init_time)), f"{prefix}.log_time")
            for layer, fan_in in (("linear1", c_in), ("linear2", config.width)):
                bound = 1.0 / np.sqrt(fan_in)
                params[f"{prefix}.{layer}.weight"] = ad.parameter(
                    rng.uniform(-bound, bound, size=(fan_in, config.width)), f"{prefix}.{layer}.weight"
                )
                params[f"{prefix}.{layer}.bias"] = ad.parameter(
                    rng.uniform(-bound, bound, size=(1, config.width)), f"{prefix}.{layer}.bias"
                )
        return cls(config, params)

    def copy(self) -> "FeatureNet":
        params = {name: ad.parameter(p.value, name) for name, p in self.params.items()}
        return FeatureNet(copy.deepcopy(self.config), params, self.steps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def values(self) -> dict[str, np.ndarray]:
        return {name: p.value.copy() for name, p in self.params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, value in values.items():
            self.params[name].value = np.array(value, dtype=np.float64, copy=True)

    def diffusion_times(self, block: int) -> np.ndarray:
        return np.exp(self.params[f"block{block}.log_time"].value)

    def forward(self, basis: SpectralBasis, wks: np.ndarray) -> ad.DiffTensor:
        return forward_features(self, basis, wks)


def forward_features(net: FeatureNet, basis: SpectralBasis, wks: np.ndarray) -> ad.DiffTensor:
    """Per-vertex features (n x width) recorded for differentiation."""
    wks = np.asarray(wks, dtype=np.float64)
    if wks.ndim != 2 or wks.shape[0] != basis.n:
        raise DimensionMismatch(f"input features have shape {wks.shape}, mesh has {basis.n} vertices")
    if wks.shape[1] != net.config.input_dim:
        raise DimensionMismatch(f"network expects {net.config.input_dim} input channels, got {wks.shape[1]}")
    x = ad.constant(wks)
    for b in range(net.config.n_blocks):
        p = net.params
        prefix = f"block{b}"
        h = ad.spectral_diffuse(
            basis.eigenvalues, basis.eigenfunctions, basis.pinv, x, ad.exp(p[f"{prefix}.log_time"])
        )
        h = ad.leaky_relu(h @ p[f"{prefix}.linear1.weight"] + p[f"{prefix}.linear1.bias"], net.config.slope)
        h = h @ p[f"{prefix}.linear2.weight"] + p[f"{prefix}.linear2.bias"]
        x = ad.pad_columns(x, net.config.width) + h
        if not np.all(np.isfinite(x.value)):
            raise NonFiniteActivation(f"non-finite activation after {prefix}")
    return x


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(net: FeatureNet, state: AdamState, lr: float) -> tuple[FeatureNet, AdamState]:
    """Bias-corrected Adam update of every parameter, then zero the gradients."""
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, p in net.params.items():
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p.value = p.value - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.zero_grad()
    net.steps += 1
    return net, state


def save_checkpoint(net: FeatureNet, path: str | Path, config_echo: dict | None = None) -> Path:
    """Write ``SMNET01`` + version + JSON metadata + named row-major float64 tensors.

    Identical parameters and metadata give identical bytes.
    """
    meta = {"network": asdict(net.config), "steps": net.steps, "config": config_echo or {}}
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<H", FORMAT_VERSION), struct.pack("<I", len(meta_bytes)), meta_bytes]
    chunks.append(struct.pack("<I", len(net.params)))
    for name, p in net.params.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", p.value.ndim))
        chunks.append(struct.pack(f"<{p.value.ndim}Q", *p.value.shape))
        chunks.append(np.ascontiguousarray(p.value, dtype="<f8").tobytes())
    blob = b"".join(chunks)
    return atomic_write(path, lambda tmp: tmp.write_bytes(blob))


def load_checkpoint(path: str | Path) -> tuple[FeatureNet, dict]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ParseError(f"{path}: not a specmatch checkpoint (bad magic)")
    offset = len(MAGIC)

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(data):
            raise ParseError(f"{path}: truncated checkpoint")
        values = struct.unpack_from(fmt, data, offset)
        offset += size
        return values

    (version,) = take("<H")
    if version != FORMAT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    (meta_len,) = take("<I")
    try:
        meta = json.loads(data[offset : offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: unreadable checkpoint metadata") from exc
    offset += meta_len
    (count,) = take("<I")
    params: dict[str, ad.DiffTensor] = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = data[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = take("<B")
        shape = take(f"<{ndim}Q")
        size = int(np.prod(shape)) * 8
        if offset + size > len(data):
            raise ParseError(f"{path}: truncated tensor {name}")
        value = np.frombuffer(data, dtype="<f8", count=size // 8, offset=offset).reshape(shape)
        offset += size
        params[name] = ad.parameter(value.astype(np.float64), name)
    net = FeatureNet(NetworkConfig(**meta["network"]), params, int(meta.get("steps", 0)))
    return net, meta
