"""Command-line entry point: run suites, list them, export spaces and fillings."""

from __future__ import annotations

import argparse
import json
import sys

from . import experiments
from .filling import build_filling, save_filling
from .metric_space import make_space, save_space


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypfill",
        description="hyperbolic-filling seminorm experiments on finite metric spaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run an experiment suite and write reports")
    runp.add_argument("--experiment", required=True, metavar="ID",
                      help="suite id (see `hypfill list`)")
    runp.add_argument("--config", metavar="FILE.json", default=None,
                      help="JSON overrides for the suite defaults")
    runp.add_argument("--out", metavar="DIR", default=None,
                      help="output directory (default: ./<id>-out)")

    sub.add_parser("list", help="list experiment suites")

    spacep = sub.add_parser("space", help="generate a space, export its point cloud")
    spacep.add_argument("--spec", required=True,
                        help="space spec, e.g. 'square_grid(64)' or 'carpet(4)'")
    spacep.add_argument("--export", required=True, metavar="FILE")

    fillp = sub.add_parser("fill", help="build a filling, export it as JSON")
    fillp.add_argument("--space", required=True, help="space spec")
    fillp.add_argument("--depth", type=int, required=True, metavar="N")
    fillp.add_argument("--seed", type=int, default=0, metavar="K")
    fillp.add_argument("--export", required=True, metavar="FILE.json")

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "list":
        catalog = experiments.list_experiments()
        width = max(len(name) for name in catalog)
        for name in catalog:
            print(f"{name:<{width}}  {catalog[name]}")
        return 0

    if args.command == "run":
        out_dir = args.out if args.out is not None else f"{args.experiment}-out"
        try:
            cfg = experiments.load_config(args.experiment, args.config, out_dir)
        except (ValueError, OSError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        report = experiments.run_experiment(cfg)
        verdict = "PASS" if report.passed else "FAIL"
        print(f"{report.experiment}: {verdict} "
              f"({len(report.rows)} rows, config {report.config_hash}) -> {out_dir}")
        for name, stats in report.ratio_summary.items():
            print(f"  {name}: {stats}")
        return 0 if report.passed else 1

    if args.command == "space":
        try:
            space = make_space(args.spec)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        save_space(space, args.export)
        print(f"{space.label}: {space.n_points} points -> {args.export}")
        return 0

    if args.command == "fill":
        try:
            space = make_space(args.space)
            filling = build_filling(space, args.depth, seed=args.seed)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        save_filling(filling, args.export)
        print(f"{space.label} depth {args.depth} seed {args.seed}: "
              f"{filling.n_vertices} vertices, {filling.n_edges} edges "
              f"-> {args.export}")
        return 0

    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
