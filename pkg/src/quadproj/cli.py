"""Command-line entry point: ``quadproj bench`` and ``quadproj project``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench
from .exact import QuadricProjector
from .exceptions import QuadprojError
from .quadric import Quadric
from .quasi import quasi_project
from .splitting import Method, SolverConfig


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from exc


def _method_list(text):
    try:
        return [Method.parse(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"unknown method in {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadproj", description="Projections onto quadrics.")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run the randomised splitting benchmark")
    b.add_argument("--family", choices=[f.value for f in bench.Family], default="ellipsoid")
    b.add_argument("--dims", type=_int_list, default=[10, 50, 100])
    b.add_argument("--trials", type=int, default=100)
    b.add_argument("--methods", type=_method_list, default=list(Method))
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--gamma", type=float, default=0.2)
    b.add_argument("--deviation-tol", type=float, default=1e-6)
    b.add_argument("--max-iter", type=int, default=1000)
    b.add_argument("--box-halfwidth", type=float, default=1.0)
    b.add_argument("--no-restart", action="store_true", help="disable the restart heuristic")
    b.add_argument("--config", type=Path, help="JSON file with solver settings (flags override it)")
    b.add_argument("--out", type=Path, default=Path("results.csv"))
    b.add_argument("--no-plots", action="store_true", help="skip the PNG figures")

    p = sub.add_parser("project", help="project one point onto a quadric")
    p.add_argument("--quadric", type=Path, required=True, help='JSON {"B": ..., "b": ..., "c": ...}')
    p.add_argument("--point", type=Path, required=True, help='JSON list, or {"point": [...]}')
    p.add_argument("--method", choices=["exact", "center", "gradient"], default="exact")
    return parser


def _bench(args) -> int:
    base = {}
    if args.config is not None:
        base = json.loads(args.config.read_text())
    base.update(gamma=args.gamma, deviation_tol=args.deviation_tol, max_iter=args.max_iter)
    if args.no_restart:
        base["restart"] = False
    cfg = SolverConfig.from_dict(base)
    records = bench.run_trials(args.family, args.dims, args.trials, args.methods, cfg,
                               base_seed=args.seed, box_halfwidth=args.box_halfwidth)
    bench.emit_report(records, args.out, plots=not args.no_plots)
    return 0


def _project(args) -> int:
    q = Quadric.from_json(args.quadric)
    data = json.loads(args.point.read_text())
    x0 = np.asarray(data["point"] if isinstance(data, dict) else data, dtype=float)
    if args.method == "exact":
        print(json.dumps(QuadricProjector(q).project(x0).to_dict()))
        return 0
    point = quasi_project(q, x0, args.method, "closest")
    if point is None:
        print(json.dumps({"point": None}))
        return 1
    print(json.dumps({"point": point.tolist(), "objective": float(np.linalg.norm(point - x0))}))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "bench":
            return _bench(args)
        return _project(args)
    except (QuadprojError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"quadproj: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
