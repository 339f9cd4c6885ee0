"""Experiment drivers and table/manifest output."""

from __future__ import annotations

import csv
import gc
import io
import json
import logging
import time
from pathlib import Path

import numpy as np

from .analysis import (
    ConvergenceReport, compare_to_reference, evaluate, export_boundary_vtk, export_field_vtk,
    l2_error_boundary, l2_error_domain,
)
from .basis import edge_basis, edge_exactness, element_exactness
from .config import RunConfig, build_problem
from .errors import ConfigurationError, SolverError
from .mesh import build_uniform_mesh
from .solver import optimality_residual, optimality_scale, solve_optimal_control

log = logging.getLogger(__name__)

CSV_HEADER = ["level", "h_over_sqrt2", "err_y", "rate_y", "err_z", "rate_z", "err_u", "rate_u"]
OPTIMALITY_DEFECT_TOL = 1e-12


def format_error(v) -> str:
    """Scientific notation with 4 significant digits."""
    return f"{float(v):.3e}"


def format_rate(v) -> str:
    if v is None:
        return ""
    return f"{float(v):.4f}"


def emit_csv(report: ConvergenceReport, path) -> Path:
    """Table with ``#`` metadata lines, errors and rates per level."""
    buf = io.StringIO()
    for key in sorted(report.metadata):
        buf.write(f"# {key}: {report.metadata[key]}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for level, h, ey, ry, ez, rz, eu, ru in report.rows():
        w.writerow([level, format_error(h), format_error(ey), format_rate(ry),
                    format_error(ez), format_rate(rz), format_error(eu), format_rate(ru)])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def read_csv(path) -> list[dict]:
    lines = [l for l in Path(path).read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


def l2_norm(coeffs, mesh) -> float:
    """L2(Omega) norm of an element field in the orthonormal basis."""
    c = np.asarray(coeffs)
    return float(np.sqrt(np.sum(mesh.areas * np.sum(c.reshape(len(c), -1) ** 2, axis=1))))


def boundary_norm(u, mesh) -> float:
    hE = mesh.h_E[mesh.boundary_edges]
    return float(np.sqrt(np.sum(hE[:, None] * np.asarray(u) ** 2)))


def _metadata(cfg: RunConfig, data) -> dict:
    return {
        "experiment": cfg.experiment, "epsilon": f"{cfg.epsilon:g}", "k": cfg.k,
        "gamma": f"{cfg.gamma:g}", "sigma": data.sigma_label, "beta": cfg.beta,
        "method": cfg.method, "quad_boost": cfg.quad_boost,
        "quadrature": f"element {element_exactness(cfg.k, cfg.quad_boost)}, "
                      f"edge {edge_exactness(cfg.k, cfg.quad_boost)}",
    }


def _solve_level(cfg: RunConfig, data, level: int, stats: list):
    mesh = build_uniform_mesh(level)
    warnings = data.validate(mesh, a3=cfg.a3_policy)
    t0 = time.perf_counter()
    try:
        sol = solve_optimal_control(mesh, data, method=cfg.method, a3="ignore")
    except SolverError as exc:
        raise type(exc)(f"level {level}: {exc}") from exc
    opt = optimality_residual(sol) / optimality_scale(sol)
    stats.append({
        "level": level, "dofs": int(sol.layout.total), "seconds": time.perf_counter() - t0,
        "relative_residual": sol.relative_residual, "optimality_residual": opt,
        "warnings": warnings,
    })
    log.info("level %d: %d dofs, %.2fs, residual %.1e, optimality %.1e", level,
             sol.layout.total, stats[-1]["seconds"], sol.relative_residual, opt)
    return sol


def write_manifest(cfg: RunConfig, path, **extra) -> Path:
    payload = {"config": cfg.to_dict(), "a3_policy": cfg.a3_policy}
    payload.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n")
    return path


def _stem(cfg: RunConfig) -> str:
    return f"{cfg.experiment}_eps{cfg.epsilon:g}_k{cfg.k}"


def run_smooth_experiment(cfg: RunConfig, write: bool = True):
    """Errors against the manufactured solution on each level.

    Returns ``(report, stats)``; ``stats`` holds per-level solver diagnostics.
    """
    if cfg.experiment != "smooth":
        raise ConfigurationError("run_smooth_experiment needs experiment 'smooth'", "experiment")
    data, exact = build_problem(cfg)
    # the manufactured pair must satisfy gamma u = eps dz/dn on the boundary
    defect = exact.optimality_defect(cfg.gamma)
    if defect > OPTIMALITY_DEFECT_TOL * max(1.0, cfg.epsilon * np.pi ** 2):
        raise ConfigurationError(
            f"gamma: manufactured solution violates the optimality condition (defect {defect:.3g})",
            "gamma")
    report = ConvergenceReport([], [], [], [], [], metadata=_metadata(cfg, data))
    stats = []
    for level in cfg.level_range:
        sol = _solve_level(cfg, data, level, stats)
        report.levels.append(level)
        report.h_over_sqrt2.append(2.0 ** -level)
        report.err_y.append(l2_error_domain(exact.y, sol.y, sol.mesh))
        report.err_z.append(l2_error_domain(exact.z, sol.z, sol.mesh))
        report.err_u.append(l2_error_boundary(exact.u, sol.u, sol.mesh))
    if write:
        out = Path(cfg.out)
        emit_csv(report, out / f"{_stem(cfg)}.csv")
        write_manifest(cfg, out / f"{_stem(cfg)}.json", levels=stats,
                       optimality_defect=defect, sigma=data.sigma_label)
    return report, stats


def run_nonsmooth_experiment(cfg: RunConfig, write: bool = True):
    """Distances to a nested reference solution on ``cfg.reference_level``.

    Returns ``(report, stats, finest)`` where ``finest`` is the solution on
    the finest level of the range.
    """
    if cfg.experiment != "nonsmooth":
        raise ConfigurationError("run_nonsmooth_experiment needs experiment 'nonsmooth'",
                                 "experiment")
    data, _ = build_problem(cfg)
    stats = []
    reference = _solve_level(cfg, data, cfg.reference_level, stats)
    report = ConvergenceReport([], [], [], [], [], metadata=_metadata(cfg, data))
    report.metadata["reference_level"] = cfg.reference_level
    flux = {"q": [], "p": []}
    finest = None
    for level in cfg.level_range:
        finest = _solve_level(cfg, data, level, stats)
        d = compare_to_reference(finest, reference)
        report.levels.append(level)
        report.h_over_sqrt2.append(2.0 ** -level)
        report.err_y.append(d["y"])
        report.err_z.append(d["z"])
        report.err_u.append(d["u"])
        flux["q"].append(d["q"])
        flux["p"].append(d["p"])
    del reference
    gc.collect()
    if write:
        out = Path(cfg.out)
        stem = _stem(cfg)
        emit_csv(report, out / f"{stem}.csv")
        export_field_vtk(finest.y, finest.mesh, out / f"{stem}_y.vtk", "y_h")
        export_field_vtk(finest.z, finest.mesh, out / f"{stem}_z.vtk", "z_h")
        export_boundary_vtk(finest.u, finest.mesh, out / f"{stem}_u.vtk", "u_h")
        write_manifest(cfg, out / f"{stem}.json", levels=stats, flux_distances=flux,
                       reference_level=cfg.reference_level, sigma=data.sigma_label)
    return report, stats, finest


CUSTOM_HEADER = ["level", "h_over_sqrt2", "norm_y", "norm_z", "norm_u",
                 "relative_residual", "optimality_residual"]


def run_custom_experiment(cfg: RunConfig, write: bool = True):
    """Solve user-specified data on each level and tabulate solution norms."""
    data, _ = build_problem(cfg)
    stats, rows, sol = [], [], None
    for level in cfg.level_range:
        sol = _solve_level(cfg, data, level, stats)
        rows.append([level, 2.0 ** -level, l2_norm(sol.y, sol.mesh), l2_norm(sol.z, sol.mesh),
                     boundary_norm(sol.u, sol.mesh), stats[-1]["relative_residual"],
                     stats[-1]["optimality_residual"]])
    if write:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        for key, value in sorted(_metadata(cfg, data).items()):
            buf.write(f"# {key}: {value}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CUSTOM_HEADER)
        for r in rows:
            w.writerow([r[0]] + [format_error(v) for v in r[1:]])
        (out / f"{_stem(cfg)}.csv").write_text(buf.getvalue())
        export_field_vtk(sol.y, sol.mesh, out / f"{_stem(cfg)}_y.vtk", "y_h")
        export_boundary_vtk(sol.u, sol.mesh, out / f"{_stem(cfg)}_u.vtk", "u_h")
        write_manifest(cfg, out / f"{_stem(cfg)}.json", levels=stats, sigma=data.sigma_label)
    return rows, stats, sol


def boundary_layer_location(solution) -> dict:
    """Where |y_h| and |u_h| peak, measured as distance to the boundary and corners.

    Values are sampled at element and edge vertices, as in the VTK exports.
    """
    mesh = solution.mesh
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    yv = np.abs(evaluate(mesh, solution.y, ref))
    t, j = np.unravel_index(np.argmax(yv), yv.shape)
    py = mesh.vertices[mesh.triangles[t, j]]
    k = solution.u.shape[-1] - 1
    uv = np.abs(solution.u @ edge_basis(k).values([0.0, 1.0]).T)
    e, j = np.unravel_index(np.argmax(uv), uv.shape)
    pu = mesh.vertices[mesh.edges[mesh.boundary_edges[e], j]]
    corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)

    def dist_boundary(p):
        return float(min(p[0], 1 - p[0], p[1], 1 - p[1]))

    return {
        "h": mesh.h,
        "y_point": py.tolist(), "y_max": float(yv.max()), "y_to_boundary": dist_boundary(py),
        "u_point": pu.tolist(), "u_max": float(uv.max()), "u_to_boundary": dist_boundary(pu),
        "u_to_corner": float(np.min(np.linalg.norm(corners - pu, axis=1))),
    }
