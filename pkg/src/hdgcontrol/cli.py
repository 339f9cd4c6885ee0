"""Command line entry point: ``hdgcontrol <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import parse_config, parse_levels
from .errors import AssumptionViolation, ConfigurationError, SolverError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_SOLVER = 4

log = logging.getLogger("hdgcontrol")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--levels", help="level range A..B")
    p.add_argument("--method", choices=["condensed", "monolithic"])
    p.add_argument("--sigma", help="constant:<c>, a number, or 'balanced'")
    p.add_argument("--beta", help="experiment, zero, rotation or constant:(a,b)")
    p.add_argument("--quad-boost", type=int, dest="quad_boost")
    p.add_argument("--reference-level", type=int, dest="reference_level")
    p.add_argument("--a3", choices=["error", "warn", "ignore"])
    p.add_argument("--f", help="source: zero, one, bubble or a number")
    p.add_argument("--y-d", dest="y_d", help="desired state: zero, one, bubble or a number")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hdgcontrol",
        description="HDG solver for Dirichlet boundary control of convection-diffusion.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("run-smooth", "manufactured-solution convergence study"),
                        ("run-nonsmooth", "distances to a fine reference solution"),
                        ("run-custom", "solve user-specified data on a level range")]:
        _add_run_flags(sub.add_parser(name, help=help_))
    inv = sub.add_parser("check-invariants", help="run the structural property checks")
    inv.add_argument("--quick", action="store_true", help="smallest meshes only")
    return parser


def _overrides(args) -> dict:
    keys = ("epsilon", "gamma", "k", "method", "sigma", "beta", "quad_boost",
            "reference_level", "a3", "f", "y_d", "out")
    out = {k: getattr(args, k) for k in keys}
    if args.levels is not None:
        out["levels"] = parse_levels(args.levels)
    return out


def _print_table(report) -> None:
    from .experiments import format_error, format_rate

    print("level  h/sqrt2    err_y     rate   err_z     rate   err_u     rate")
    for level, h, ey, ry, ez, rz, eu, ru in report.rows():
        print(f"{level:5d}  {format_error(h)}  {format_error(ey)} {format_rate(ry):>6}  "
              f"{format_error(ez)} {format_rate(rz):>6}  {format_error(eu)} {format_rate(ru):>6}")


def _run(args) -> int:
    from . import experiments

    if args.command == "check-invariants":
        from .invariants import run_all

        results = run_all(quick=args.quick)
        for r in results:
            print(r)
        return EXIT_OK if all(r.passed for r in results) else EXIT_SOLVER
    experiment = args.command.split("-", 1)[1]
    cfg = parse_config(args.config, _overrides(args), experiment=experiment)
    if experiment == "smooth":
        report, _ = experiments.run_smooth_experiment(cfg)
        _print_table(report)
    elif experiment == "nonsmooth":
        report, _, _ = experiments.run_nonsmooth_experiment(cfg)
        _print_table(report)
    else:
        rows, _, _ = experiments.run_custom_experiment(cfg)
        for r in rows:
            print(f"level {r[0]}: |y| {r[2]:.4e}  |z| {r[3]:.4e}  |u| {r[4]:.4e}")
    print(f"results written to {cfg.out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolation as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
