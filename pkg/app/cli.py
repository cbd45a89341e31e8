"""
Command line entry point:  python -m app <subcommand> [flags]

Experiment subcommands (converge, lkc-converge, unbiased, zero-count) share
the global flags; --config FILE supplies a JSON object of ExperimentConfig
fields and explicitly given flags override it. The geometry subcommands
(lkc, gmf, gkf-table) print JSON to stdout.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from app.core.config import LOG_LEVEL, NUM_WAVES, QUADRATURE_NODES, ROOT_SEED, SPECTRUM
from app.core.errors import ConfigValidationError, GeometryError, OutputWriteError
from app.models import ExperimentConfig, ExperimentKind, build_config
from app.services.atlas import parse_manifold
from app.services.curvature import pullback_lkc, reference_lkc
from app.services.embedding import realize
from app.services.gkf import DEFAULT_J_MAX, gkf_table, gmf_half_line, gmf_point, gmf_point_numeric
from app.services.gp_model import build_model
from app.services.harness import run_experiment
from app.services.outputs import emit_outputs
from app.services.seeding import replicate_seed

logger = logging.getLogger("CLI")

DEFAULT_K_LISTS = {
    ExperimentKind.CONVERGE: [64, 256, 1024, 4096],
    ExperimentKind.LKC_CONVERGE: [256, 1024, 4096],
    ExperimentKind.UNBIASED: [10, 50],
    ExperimentKind.ZERO_COUNT: [2],
}

# flag dest -> ExperimentConfig field
CONFIG_FLAGS = {
    "manifold": "manifold",
    "waves": "waves",
    "spectrum": "spectrum",
    "seed": "seed",
    "k_list": "k_list",
    "replicates": "replicates",
    "threads": "threads",
    "out_dir": "out_dir",
    "plot": "plot",
    "nodes": "nodes",
    "grid": "grid",
    "zero_grid": "zero_grid",
}


def _k_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--k-list expects comma-separated integers, got '{text}'")


def _global_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--manifold", help="torus:<m>[:<P1,..,Pm>] or sphere:<radius>")
    parent.add_argument("--waves", type=int, help="number of random waves in the field model")
    parent.add_argument("--spectrum", help="uniform-shell or gaussian")
    parent.add_argument("--seed", type=int, help="root seed")
    parent.add_argument("--k-list", dest="k_list", type=_k_list, help="comma-separated embedding dimensions")
    parent.add_argument("--replicates", type=int)
    parent.add_argument("--threads", type=int)
    parent.add_argument("--out-dir", dest="out_dir")
    parent.add_argument("--plot", action="store_true", default=None, help="also write an SVG plot")
    parent.add_argument("--config", help="JSON file with ExperimentConfig fields")
    parent.add_argument("--nodes", type=int, help="quadrature nodes per axis")
    parent.add_argument("--grid", type=int, help="evaluation grid points per axis for C^i norms")
    parent.add_argument("--zero-grid", dest="zero_grid", type=int, help="sign grid points per axis for zero search")
    parent.add_argument("--log-level", dest="log_level", default=LOG_LEVEL)
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _global_flags()
    parser = argparse.ArgumentParser(prog="python -m app", description="Random Gaussian embeddings of compact manifolds")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in ExperimentKind:
        sub.add_parser(kind.value, parents=[parent], help=f"run the {kind.value} experiment")

    lkc = sub.add_parser("lkc", parents=[parent], help="Lipschitz-Killing curvatures of one metric")
    lkc.add_argument("--metric", choices=["reference", "pullback"], default="reference")
    lkc.add_argument("--k", type=int, default=64, help="embedding dimension for --metric pullback")

    gmf = sub.add_parser("gmf", parents=[parent], help="Gaussian Minkowski functionals of a point or half-line")
    gmf.add_argument("--n", type=int, default=1, help="codimension of the point")
    gmf.add_argument("--jmax", type=int, default=DEFAULT_J_MAX)
    gmf.add_argument("--half-line", dest="half_line", type=float, default=None,
                     help="functionals of [u, inf) instead of a point")

    table = sub.add_parser("gkf-table", parents=[parent], help="GKF expectations for a codimension-n subspace")
    table.add_argument("--codim", type=int, default=1)
    return parser


def experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    kind = ExperimentKind(args.command)
    data: Dict[str, Any] = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigValidationError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigValidationError(f"config file {args.config} must hold a JSON object")
    for dest, name in CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            data[name] = value
    data["kind"] = kind.value
    data.setdefault("k_list", DEFAULT_K_LISTS[kind])
    return build_config(data)


def check_writable(out_dir: str) -> None:
    path = Path(out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputWriteError(f"cannot create output directory {out_dir}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise OutputWriteError(f"output directory {out_dir} is not writable")


def _emit_json(payload: Any) -> None:
    print(json.dumps(payload, indent=2))


def command_experiment(args: argparse.Namespace) -> int:
    cfg = experiment_config(args)
    check_writable(cfg.out_dir)
    result = run_experiment(cfg)
    paths = emit_outputs(result, cfg.out_dir, cfg.plot)
    _emit_json({"excluded": result.excluded, "files": {k: str(v) for k, v in paths.items()}})
    return 0


def command_lkc(args: argparse.Namespace) -> int:
    atlas = parse_manifold(args.manifold or "sphere:1", args.nodes or QUADRATURE_NODES)
    seed = ROOT_SEED if args.seed is None else args.seed
    if args.metric == "reference":
        values = reference_lkc(atlas)
    else:
        model = build_model(atlas, args.waves or NUM_WAVES, args.spectrum or SPECTRUM, seed)
        values = pullback_lkc(realize(model, args.k, replicate_seed(seed, args.k, 0)), atlas)
    _emit_json({"manifold": atlas.name, "metric": args.metric, "k": args.k if args.metric == "pullback" else None,
                "seed": seed, "lkc": values.to_list()})
    return 0


def command_gmf(args: argparse.Namespace) -> int:
    if args.half_line is not None:
        table = gmf_half_line(args.half_line, args.jmax)
        _emit_json({"set": f"[{args.half_line!r}, inf)", "values": list(table.values)})
        return 0
    table = gmf_point(args.n, args.jmax)
    oracle = gmf_point_numeric(args.n, args.jmax)
    _emit_json({
        "set": "point",
        "n": args.n,
        "rows": [{"j": j, "closed_form": table[j], "cauchy_oracle": oracle[j]} for j in range(args.jmax + 1)],
    })
    return 0


def command_gkf_table(args: argparse.Namespace) -> int:
    atlas = parse_manifold(args.manifold or "sphere:1", args.nodes or QUADRATURE_NODES)
    rows = gkf_table(atlas, args.codim)
    _emit_json({"manifold": atlas.name, "codim": args.codim, "rows": [{"i": i, "expected_lkc": v} for i, v in rows]})
    return 0


COMMANDS = {"lkc": command_lkc, "gmf": command_gmf, "gkf-table": command_gkf_table}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(name)s %(levelname)s %(message)s")
    handler = COMMANDS.get(args.command, command_experiment)
    try:
        return handler(args)
    except ConfigValidationError as exc:
        logger.error(str(exc))
        return 2
    except GeometryError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
