"""Command-line entry point.

Exit codes: 0 success, 1 failed check, 2 invalid input, 3 scheme failure.
"""

from __future__ import annotations

import argparse
import sys

from . import experiments as ex
from .grid import GridError
from .metrics import MetricsError
from .simplicial import MeshError, read_mesh, validate_mesh
from .upwind import SchemeError

EXIT_OK, EXIT_CHECK, EXIT_INVALID, EXIT_SCHEME = 0, 1, 2, 3


def _cmd_run(args) -> int:
    cfg = ex.load_config(args.config)
    rec = ex.run_experiment(cfg)
    last = rec.rows[-1]
    print(f"steps={last['n']} t={last['t']:.6g} dt={rec.dt:.6g} mass={last['mass']!r}")
    if hasattr(rec, "error"):
        print(f"e_max_w2={rec.error.e_max:.6g} e_max_w1={rec.error_w1.e_max:.6g}")
    for path in rec.dumps:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_study(args) -> int:
    cfg = ex.load_config(args.config)
    levels = [int(v) for v in args.levels.split(",")] if args.levels else None
    res = ex.convergence_study(cfg, levels)
    print("n_cells,dx,dt,e_max_w2,e_max_w1,slope_running")
    for r in res.rows:
        print(f"{r['n_cells']},{r['dx']:.6g},{r['dt']:.6g},{r['e_max_w2']:.6g},"
              f"{r['e_max_w1']:.6g},{r['slope_running']:.4f}")
    print(res.fit.summary())
    return EXIT_OK


def _cmd_counterexample(args) -> int:
    dts = [float(v) for v in args.dts.split(",")]
    out = ex.energy_counterexample(args.p, dts)
    for h, inc in zip(out["dts"], out["increments"]):
        print(f"dt={h:.6g} energy_increment={inc!r}")
    rel = abs(out["coefficient"] - out["closed_form"]) / abs(out["closed_form"]) if out["closed_form"] else float("nan")
    print(f"coefficient={out['coefficient']!r} closed_form={out['closed_form']!r} rel_diff={rel:.3g}")
    return EXIT_OK


def _cmd_burgers(args) -> int:
    cfg = ex.load_config(args.config)
    gap = ex.burgers_check(cfg, args.steps)
    print(f"max_abs_diff={gap!r}")
    return EXIT_OK if gap <= args.tol else EXIT_CHECK


def _cmd_validate_mesh(args) -> int:
    report = validate_mesh(read_mesh(args.mesh))
    print(f"conformal={report.conformal} hbar={report.hbar!r}")
    for problem in report.problems:
        print(problem)
    return EXIT_OK if report.ok else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aggupwind", description="Upwind schemes for the aggregation equation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("study", help="grid refinement study with rate fit")
    p.add_argument("config")
    p.add_argument("--levels", help="comma-separated cell counts (default: study.levels)")
    p.set_defaults(fn=_cmd_study)

    p = sub.add_parser("counterexample", help="one-step energy increase on three atoms")
    p.add_argument("--p", type=float, default=0.75)
    p.add_argument("--dts", default="1e-3,5e-4,2.5e-4")
    p.set_defaults(fn=_cmd_counterexample)

    p = sub.add_parser("burgers-check", help="compare the upwind and Burgers trajectories")
    p.add_argument("config")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-12)
    p.set_defaults(fn=_cmd_burgers)

    p = sub.add_parser("validate-mesh", help="check a triangle mesh file for conformity")
    p.add_argument("mesh")
    p.set_defaults(fn=_cmd_validate_mesh)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ex.ConfigError, MeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SchemeError, GridError, MetricsError, ValueError) as exc:
        print(f"scheme error: {exc}", file=sys.stderr)
        return EXIT_SCHEME


if __name__ == "__main__":
    sys.exit(main())
