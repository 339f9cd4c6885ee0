"""Boundary layers of the control problem with a bubble target and no source.

For each epsilon the solution on the finest level is compared against a nested
reference solution, and VTK files of y_h, z_h and u_h are written for viewing
in ParaView. Locations of the largest |y_h| and |u_h| are printed.

    python demos/nonsmooth_layers.py [--top 4] [--reference 6] [--out demo_output]
"""

import argparse

from hdgcontrol.config import parse_config
from hdgcontrol.experiments import boundary_layer_location, format_error, run_nonsmooth_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--top", type=int, default=4, help="finest level of the study")
    ap.add_argument("--reference", type=int, default=6, help="reference level")
    ap.add_argument("--out", default="demo_output")
    ap.add_argument("--epsilon", type=float, nargs="+", default=[0.1, 0.01, 1e-4])
    args = ap.parse_args()

    for eps in args.epsilon:
        cfg = parse_config(overrides={"epsilon": eps, "levels": (1, args.top),
                                      "reference_level": args.reference, "out": args.out},
                           experiment="nonsmooth")
        report, _, finest = run_nonsmooth_experiment(cfg)
        where = boundary_layer_location(finest)
        print(f"eps={eps:g}")
        for level, ey, ez, eu in zip(report.levels, report.err_y, report.err_z, report.err_u):
            print(f"  level {level}: |y-y_ref| {format_error(ey)}  |z-z_ref| {format_error(ez)}"
                  f"  |u-u_ref| {format_error(eu)}")
        print(f"  max |y_h| = {where['y_max']:.3e} at {where['y_point']}")
        print(f"  max |u_h| = {where['u_max']:.3e} at {where['u_point']}, "
              f"{where['u_to_corner']:.3f} from the nearest corner")
    print(f"VTK files written to {args.out}/")


if __name__ == "__main__":
    main()
