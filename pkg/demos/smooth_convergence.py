"""Convergence study on the manufactured solution.

Solves the optimality system with k=1 on levels 1..5 and prints errors and
observed rates for the state, adjoint and control.

    python demos/smooth_convergence.py [--k 0] [--epsilon 1e-7]
"""

import argparse

from hdgcontrol.config import parse_config
from hdgcontrol.experiments import format_error, format_rate, run_smooth_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--k", type=int, default=1)
    ap.add_argument("--epsilon", type=float, default=1e-7)
    ap.add_argument("--top", type=int, default=5, help="finest level")
    args = ap.parse_args()

    cfg = parse_config(overrides={"epsilon": args.epsilon, "k": args.k, "levels": (1, args.top)},
                       experiment="smooth")
    report, stats = run_smooth_experiment(cfg, write=False)
    print(f"k={cfg.k}, eps={cfg.epsilon:g}, sigma={cfg.sigma}")
    print("level    dofs   err_y     rate    err_z     rate    err_u     rate")
    for row, s in zip(report.rows(), stats):
        level, _, ey, ry, ez, rz, eu, ru = row
        print(f"{level:5d} {s['dofs']:7d}  {format_error(ey)} {format_rate(ry):>6}  "
              f"{format_error(ez)} {format_rate(rz):>6}  {format_error(eu)} {format_rate(ru):>6}")
    print(f"largest optimality residual {max(s['optimality_residual'] for s in stats):.1e}")


if __name__ == "__main__":
    main()
