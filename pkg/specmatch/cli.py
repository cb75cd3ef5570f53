import argparse
import json
import logging
import sys
from pathlib import Path

from . import cache, config, pipeline
from .errors import ParseError, SpecMatchError
from .evaluation import evaluate_correspondence, plot_pck, write_report
from .formats import load_mesh, read_correspondence, write_correspondence
from .network import load_checkpoint, save_checkpoint
from .paths import get_path, set_project_root
from .utils import configure_logging

logger = logging.getLogger("specmatch.cli")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _load_cfg(path, mode=None, inference=None) -> config.MatchConfig:
    cfg = config.load_config(path) if path else config.MatchConfig()
    if mode:
        cfg.mode = mode
    if inference:
        cfg.inference = inference
    cfg.__post_init__()
    if cfg.project_root:
        set_project_root(Path(cfg.project_root))
    return cfg


def _shape(mesh_path: str, cfg: config.MatchConfig, cache_dir, k: int) -> pipeline.ShapeData:
    if cache_dir:
        return cache.load_shape(mesh_path, cache_dir, cfg, k=k)
    return pipeline.prepare_shape(load_mesh(mesh_path), cfg, k=k, name=Path(mesh_path).stem)


def _pair(args, cfg: config.MatchConfig) -> pipeline.ShapePairBundle:
    """Source is N, target is M."""
    k = cfg.k
    if not args.cache_dir:
        smallest = min(load_mesh(args.source).n_vertices, load_mesh(args.target).n_vertices)
        if k > smallest - 2:
            logger.info("using k=%d eigenpairs (meshes have %d vertices)", smallest - 2, smallest)
            k = smallest - 2
    shape_n = _shape(args.source, cfg, args.cache_dir, k)
    shape_m = _shape(args.target, cfg, args.cache_dir, k)
    return pipeline.ShapePairBundle(shape_m, shape_n)


def cmd_preprocess(args) -> int:
    cfg = _load_cfg(args.config)
    k = args.k or cfg.k
    failures = []
    recomputed = 0
    for mesh_path in args.meshes:
        try:
            _, fresh = cache.preprocess_mesh(mesh_path, args.cache_dir, k, cfg.wks, cfg.eigensolver, cfg.seed)
            recomputed += int(fresh)
        except (SpecMatchError, OSError) as e:
            failures.append(mesh_path)
            logger.error("%s: %s: %s", mesh_path, type(e).__name__, e)
    logger.info("preprocessed %d mesh(es), %d recomputed, %d failed", len(args.meshes), recomputed, len(failures))
    return EXIT_RUNTIME if failures else EXIT_OK


def _training_set(cfg: config.MatchConfig) -> tuple[list, list]:
    cache_dir = cfg.extra.get("cache_dir")
    mesh_paths = cfg.extra.get("shapes") or []
    if not cache_dir or not mesh_paths:
        raise config.ConfigError("training config needs 'cache_dir' and a non-empty 'shapes' list")
    shapes = {}
    for mesh_path in mesh_paths:
        shape = cache.load_shape(get_path(mesh_path), get_path(cache_dir), cfg)
        shapes[shape.name] = shape
    pairs_raw = cfg.extra.get("pairs")
    if not pairs_raw:
        return list(shapes.values()), pipeline.all_ordered_pairs(list(shapes.values()))
    pairs = []
    for entry in pairs_raw:
        if len(entry) != 2 or any(name not in shapes for name in entry):
            raise config.ConfigError(f"pair {entry!r} must name two entries of 'shapes' by file stem")
        source, target = entry
        pairs.append(pipeline.ShapePairBundle(shapes[target], shapes[source]))
    return list(shapes.values()), pairs


def cmd_train(args) -> int:
    cfg = _load_cfg(args.config)
    logger.info("Loaded config from %s", args.config)
    shapes, dataset = _training_set(cfg)
    out_dir = get_path(args.out or cfg.extra.get("output_dir", "output"))
    net = pipeline.init_network(cfg, shapes)
    net, log = pipeline.train(dataset, net, cfg)
    pipeline.write_run_files(cfg, out_dir)
    log_path = pipeline.write_loss_log(log, out_dir / f"{cfg.run_id}_loss.csv")
    ckpt = save_checkpoint(net, out_dir / f"{cfg.run_id}.smnet", cfg.to_dict())
    if len(log):
        logger.info("final loss %.6g after %d step(s)", log["loss_total"].iloc[-1], net.steps)
    logger.info("wrote %s and %s", ckpt, log_path)
    return EXIT_OK


def cmd_match(args) -> int:
    cfg = _load_cfg(args.config, args.mode, args.inference)
    net, _ = load_checkpoint(args.checkpoint)
    pair = _pair(args, cfg)
    corr = pipeline.match_pair(pair, net, cfg, tta=args.tta)
    write_correspondence(corr, args.out)
    logger.info("wrote %s (%d -> %d vertices)", args.out, corr.n_source, corr.n_target)
    return EXIT_OK


def cmd_adapt(args) -> int:
    cfg = _load_cfg(args.config, args.mode)
    if args.iters is not None:
        cfg.tta_iters = args.iters
        cfg.__post_init__()
    net, meta = load_checkpoint(args.checkpoint)
    pair = _pair(args, cfg)
    history: list[dict] = []
    adapted = pipeline.test_time_adapt(pair, net, cfg, history=history)
    save_checkpoint(adapted, args.out, meta.get("config"))
    if history:
        logger.info(
            "adapted %s: loss %.6g -> best %.6g",
            pair.name,
            history[0]["loss_total"],
            min(h["loss_total"] for h in history),
        )
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = read_correspondence(args.prediction)
    gt = read_correspondence(args.ground_truth)
    mesh = load_mesh(args.mesh)
    report = evaluate_correspondence(pred, gt, mesh, mode=args.mode)
    json_path, pck_path = write_report(report, args.out_dir, args.run_id)
    print(json.dumps(report.summary(), indent=2))
    logger.info("wrote %s and %s", json_path, pck_path)
    return EXIT_OK


def cmd_plot_pck(args) -> int:
    plot_pck(args.tables, args.out, args.labels)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specmatch", description="Unsupervised spectral shape matching"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)

    pre = subparsers.add_parser("preprocess", help="Cache eigenpairs and WKS of meshes")
    pre.add_argument("meshes", nargs="+", help="Mesh files (OFF, OBJ or PLY)")
    pre.add_argument("--cache-dir", required=True, help="Directory for cache files")
    pre.add_argument("--k", type=int, help="Number of eigenpairs (default from config, 200)")
    pre.add_argument("--config", help="Path to a configuration file (YAML or JSON)")
    pre.set_defaults(func=cmd_preprocess)

    train = subparsers.add_parser("train", help="Train the feature network")
    train.add_argument("--config", required=True, help="Path to a configuration file (YAML or JSON)")
    train.add_argument("--out", help="Output directory (default: output_dir from config)")
    train.set_defaults(func=cmd_train)

    for name, helptext in (("match", "Write a correspondence SOURCE -> TARGET"), ("adapt", "Adapt a checkpoint to one pair")):
        sub = subparsers.add_parser(name, help=helptext)
        sub.add_argument("checkpoint", help="Network checkpoint")
        sub.add_argument("source", help="Mesh whose vertices are matched (N)")
        sub.add_argument("target", help="Mesh matched onto (M, the complete shape when partial)")
        sub.add_argument("--out", required=True, help="Output file")
        sub.add_argument("--config", help="Path to a configuration file (YAML or JSON)")
        sub.add_argument("--mode", choices=config.MATCH_MODES, help="Matching setting")
        sub.add_argument("--cache-dir", help="Read spectral data from this cache")
        if name == "match":
            sub.add_argument("--tta", action=argparse.BooleanOptionalAction, default=None, help="Test-time adaptation")
            sub.add_argument("--inference", choices=config.INFERENCE_KINDS, help="Point map extraction")
            sub.set_defaults(func=cmd_match)
        else:
            sub.add_argument("--iters", type=int, help="Adaptation iterations (default from config, 15)")
            sub.set_defaults(func=cmd_adapt)

    ev = subparsers.add_parser("eval", help="Geodesic error and PCK of a correspondence")
    ev.add_argument("prediction", help="Predicted correspondence file")
    ev.add_argument("ground_truth", help="Ground-truth correspondence file")
    ev.add_argument("mesh", help="Target mesh M")
    ev.add_argument("--mode", choices=config.MATCH_MODES, default="near_isometric", help="Selects the PCK range")
    ev.add_argument("--out-dir", default="outputs/metrics", help="Report directory")
    ev.add_argument("--run-id", default="specmatch", help="Prefix of report files")
    ev.set_defaults(func=cmd_eval)

    plot = subparsers.add_parser("plot-pck", help="Plot PCK tables")
    plot.add_argument("tables", nargs="+", help="PCK CSV files written by eval")
    plot.add_argument("--out", required=True, help="PNG path")
    plot.add_argument("--labels", nargs="+", help="Legend labels")
    plot.set_defaults(func=cmd_plot_pck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    configure_logging(args.verbose)
    try:
        return args.func(args)
    except (config.ConfigError, ParseError, FileNotFoundError) as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_USAGE
    except SpecMatchError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_RUNTIME
    except Exception as e:  # pragma: no cover - unexpected failure
        logger.exception("unexpected failure: %s", e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
