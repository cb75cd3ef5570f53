"""Training, test-time adaptation and inference on shape pairs.

A pair is ordered: N is the source whose vertices get matched, M the target
(the complete shape in partial mode). Every step runs the shared feature
network on both shapes, solves ``C_MN`` and ``C_NM``, builds both soft
point-wise maps and combines the structural, coupling and optional
Dirichlet losses.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import permutations
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

try:
    import yaml
except Exception:  # pragma: no cover - optional dependency
    yaml = None

from . import __git_hash__, __version__
from . import autodiff as ad
from .config import MatchConfig
from .descriptors import compute_wks
from .errors import DimensionMismatch, NonFiniteLoss
from .fmap import solve_fmap
from .losses import (
    FULL,
    LossComponents,
    LossWeights,
    PartialityInfo,
    bijectivity_loss,
    coupling_loss,
    dirichlet_loss,
    estimate_partial_rank,
    orthogonality_loss,
    total_loss,
)
from .mesh import LaplacianPair, TriangleMesh, compute_laplacian
from .network import AdamState, FeatureNet, adam_step, forward_features
from .paths import is_tty
from .pointwise import (
    MAX_DENSE_ENTRIES,
    HardCorrespondence,
    fmap_to_pmap,
    nn_pmap,
    soft_pmap,
    spectral_filtered_from_features,
    spectral_filtered_pmap,
)
from .spectral import SpectralBasis, eigendecompose

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ["epoch", "pair", "loss_total", "loss_bij", "loss_orth", "loss_couple", "loss_dirichlet"]


@dataclass(eq=False)
class ShapeData:
    """A mesh with everything the network and the losses read from it."""

    name: str
    mesh: TriangleMesh
    laplacian: LaplacianPair
    basis: SpectralBasis
    wks: np.ndarray

    @property
    def area(self) -> float:
        return float(self.laplacian.total_area)

    @property
    def n(self) -> int:
        return self.mesh.n_vertices


@dataclass(eq=False)
class ShapePairBundle:
    shape_m: ShapeData
    shape_n: ShapeData
    ground_truth: HardCorrespondence | None = None

    def __post_init__(self) -> None:
        if self.shape_m.basis.k != self.shape_n.basis.k:
            raise DimensionMismatch(
                f"{self.shape_n.name} and {self.shape_m.name} have bases of size "
                f"{self.shape_n.basis.k} and {self.shape_m.basis.k}"
            )

    @property
    def name(self) -> str:
        return f"{self.shape_n.name}->{self.shape_m.name}"

    @property
    def k(self) -> int:
        return self.shape_m.basis.k

    def without_ground_truth(self) -> "ShapePairBundle":
        return replace(self, ground_truth=None)


def prepare_shape(mesh: TriangleMesh, cfg: MatchConfig, k: int | None = None, name: str | None = None) -> ShapeData:
    """Laplacian, eigenbasis and WKS of a mesh."""
    lap = compute_laplacian(mesh)
    basis = eigendecompose(lap, k or cfg.k, solver=cfg.eigensolver, seed=cfg.seed)
    return ShapeData(name or mesh.name, mesh, lap, basis, compute_wks(basis, cfg.wks))


def all_ordered_pairs(shapes: Sequence[ShapeData]) -> list[ShapePairBundle]:
    """Every ordered pair of distinct shapes; a single shape is paired with itself."""
    if len(shapes) == 1:
        return [ShapePairBundle(shapes[0], shapes[0])]
    return [ShapePairBundle(m, n) for n, m in permutations(shapes, 2)]


def init_network(cfg: MatchConfig, shapes: Sequence[ShapeData]) -> FeatureNet:
    """Fresh network whose diffusion times start at the squared median edge length."""
    init_time = cfg.init_time
    if init_time is None:
        if not shapes:
            raise ValueError("need at least one shape to choose the initial diffusion time")
        init_time = float(np.median([s.mesh.median_edge_length for s in shapes])) ** 2
    return FeatureNet.initialize(cfg.network, init_time)


def partiality_for(pair: ShapePairBundle, cfg: MatchConfig) -> PartialityInfo:
    if cfg.mode != "partial":
        return FULL
    rank = estimate_partial_rank(pair.shape_m.basis, pair.shape_n.basis, pair.shape_m.area, pair.shape_n.area)
    return PartialityInfo("partial", rank)


def pair_loss(
    pair: ShapePairBundle,
    net: FeatureNet,
    cfg: MatchConfig,
    weights: LossWeights | None = None,
    part: PartialityInfo | None = None,
) -> tuple[LossComponents, ad.DiffTensor]:
    """Loss components and their weighted total, recorded for differentiation."""
    weights = weights or cfg.weights
    part = part or partiality_for(pair, cfg)
    m, n = pair.shape_m, pair.shape_n
    f_m = forward_features(net, m.basis, m.wks)
    f_n = forward_features(net, n.basis, n.wks)
    c_mn = solve_fmap(m.basis, n.basis, f_m, f_n, cfg.solver, m.name, n.name)
    c_nm = solve_fmap(n.basis, m.basis, f_n, f_m, cfg.solver, n.name, m.name)
    pi_nm = soft_pmap(f_n, f_m, cfg.tau)
    pi_mn = soft_pmap(f_m, f_n, cfg.tau)
    components = LossComponents(
        bij=bijectivity_loss(c_mn, c_nm, part),
        orth=orthogonality_loss(c_mn, c_nm, part),
        couple=coupling_loss(c_mn, pi_nm, m.basis, n.basis) + coupling_loss(c_nm, pi_mn, n.basis, m.basis),
        dirichlet=dirichlet_loss(pi_nm, m.mesh.vertices, n.laplacian.stiffness) if weights.w_dirichlet > 0 else None,
    )
    loss = total_loss(components, weights)
    if not np.isfinite(loss.item()):
        raise NonFiniteLoss(f"non-finite loss on pair {pair.name}", pair=pair.name)
    return components, loss


def evaluate_loss(pair: ShapePairBundle, net: FeatureNet, cfg: MatchConfig, weights: LossWeights | None = None) -> dict[str, float]:
    """Loss components of a pair without touching the parameters."""
    components, loss = pair_loss(pair, net, cfg, weights)
    return {"loss_total": loss.item(), **components.as_floats()}


def _pair_gradients(pair: ShapePairBundle, net: FeatureNet, cfg: MatchConfig) -> dict[str, float]:
    components, loss = pair_loss(pair, net, cfg)
    ad.backward(loss)
    return {"loss_total": loss.item(), **components.as_floats()}


def _group_step(group: list[ShapePairBundle], net: FeatureNet, cfg: MatchConfig, pool: ThreadPoolExecutor | None) -> list[dict[str, float]]:
    """Accumulate gradients of every pair in ``group`` into ``net``."""
    if pool is None or len(group) == 1:
        return [_pair_gradients(pair, net, cfg) for pair in group]
    copies = [net.copy() for _ in group]
    results = list(pool.map(lambda job: _pair_gradients(job[0], job[1], cfg), zip(group, copies)))
    # sum in pair order so the result does not depend on thread timing
    for replica in copies:
        for name, p in net.params.items():
            p.grad = p.grad + replica.params[name].grad
    return results


def train(
    dataset: Sequence[ShapePairBundle],
    net: FeatureNet,
    cfg: MatchConfig,
) -> tuple[FeatureNet, pd.DataFrame]:
    """Train a copy of ``net`` for ``cfg.epochs`` passes over ``dataset``.

    Returns the trained network and a loss log with one row per pair visit.
    """
    if not dataset:
        raise ValueError("training needs at least one shape pair")
    ks = {pair.k for pair in dataset}
    if len(ks) != 1:
        raise DimensionMismatch(f"all pairs must share k, got {sorted(ks)}")
    pairs = [pair.without_ground_truth() for pair in dataset]
    assert all(pair.ground_truth is None for pair in pairs)

    net = net.copy()
    state = AdamState()
    rng = np.random.default_rng(cfg.seed)
    rows: list[dict] = []
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    show = cfg.progress and is_tty()
    try:
        for epoch in tqdm(range(cfg.epochs), desc="train", disable=not show):
            order = rng.permutation(len(pairs))
            for start in range(0, len(order), cfg.accumulate_pairs):
                group = [pairs[i] for i in order[start : start + cfg.accumulate_pairs]]
                results = _group_step(group, net, cfg, pool)
                adam_step(net, state, cfg.lr)
                for pair, values in zip(group, results):
                    rows.append({"epoch": epoch, "pair": pair.name, **values})
            if rows:
                logger.debug("epoch %d: last loss %.6g", epoch, rows[-1]["loss_total"])
    finally:
        if pool is not None:
            pool.shutdown()
    return net, pd.DataFrame(rows, columns=LOSS_COLUMNS)


def test_time_adapt(
    pair: ShapePairBundle,
    net: FeatureNet,
    cfg: MatchConfig,
    history: list[dict] | None = None,
) -> FeatureNet:
    """Continue optimising a copy of ``net`` on one pair.

    Non-isometric mode adds the Dirichlet term. With ``keep_best`` the copy
    is reset to its lowest-loss iterate, so the result never scores worse
    on the pair than ``net`` itself.
    """
    adapted = net.copy()
    if cfg.tta_iters == 0:
        return adapted
    if net.steps == 0:
        logger.warning(
            "adapting an untrained network on %s (axiomatic mode); expect much lower quality than a trained one",
            pair.name,
        )
    pair = pair.without_ground_truth()
    weights = cfg.adaptation_weights()
    part = partiality_for(pair, cfg)
    state = AdamState()
    best_loss, best_values = np.inf, None
    show = cfg.progress and is_tty()
    for it in tqdm(range(cfg.tta_iters + 1), desc="adapt", disable=not show, leave=False):
        components, loss = pair_loss(pair, adapted, cfg, weights, part)
        value = loss.item()
        if history is not None:
            history.append({"iteration": it, "loss_total": value, **components.as_floats()})
        if value < best_loss:
            best_loss, best_values = value, adapted.values()
        if it == cfg.tta_iters:
            break
        ad.backward(loss)
        adam_step(adapted, state, cfg.lr)
    if cfg.keep_best and best_values is not None:
        adapted.load_values(best_values)
    logger.debug("adaptation on %s: best loss %.6g", pair.name, best_loss)
    return adapted


def _inference_kind(cfg: MatchConfig) -> str:
    if cfg.inference != "auto":
        return cfg.inference
    return "spectral" if cfg.mode == "near_isometric" else "nn"


def match_pair(pair: ShapePairBundle, net: FeatureNet, cfg: MatchConfig, tta: bool | None = None) -> HardCorrespondence:
    """Point map from N's vertices onto M's, optionally after adaptation."""
    if tta is None:
        tta = cfg.tta_iters > 0
    if tta:
        net = test_time_adapt(pair, net, cfg)
    m, n = pair.shape_m, pair.shape_n
    f_m = forward_features(net, m.basis, m.wks)
    f_n = forward_features(net, n.basis, n.wks)
    kind = _inference_kind(cfg)
    if kind == "nn":
        return nn_pmap(f_n, f_m)
    if kind == "fmap":
        return fmap_to_pmap(solve_fmap(m.basis, n.basis, f_m.value, f_n.value, cfg.solver), m.basis, n.basis)
    if n.n * m.n > MAX_DENSE_ENTRIES:
        return spectral_filtered_from_features(f_n.value, f_m.value, cfg.tau, m.basis, n.basis)
    return spectral_filtered_pmap(soft_pmap(f_n.value, f_m.value, cfg.tau), m.basis, n.basis)


def write_loss_log(log: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    log.reindex(columns=LOSS_COLUMNS).to_csv(path, index=False)
    return path


def write_run_files(cfg: MatchConfig, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``config_snapshot.yaml`` and ``run_info.yaml`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    snapshot = cfg.to_dict()
    snapshot["version"] = __version__
    snapshot["commit"] = __git_hash__

    snapshot_file = out_dir / "config_snapshot.yaml"
    with open(snapshot_file, "w", encoding="utf-8") as f:
        if yaml:
            yaml.safe_dump(snapshot, f, sort_keys=False)
        else:
            json.dump(snapshot, f, ensure_ascii=False, indent=2)

    run_info = {
        "run_id": cfg.run_id,
        "pipeline_version": __version__,
        "git_hash": __git_hash__,
        "timestamp": time.strftime("%Y%m%d_%H%M"),
    }
    info_file = out_dir / "run_info.yaml"
    with open(info_file, "w", encoding="utf-8") as f:
        if yaml:
            yaml.safe_dump(run_info, f, sort_keys=False)
        else:
            json.dump(run_info, f, ensure_ascii=False, indent=2)
    return snapshot_file, info_file
