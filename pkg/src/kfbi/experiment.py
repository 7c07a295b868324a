"""Convergence sweeps against manufactured solutions."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from .bie import ProblemSpec, solve
from .catalog import ExperimentConfig
from .exact import Manufactured, manufactured
from .fd import CartesianGrid
from .interface import get_curve
from .potentials import build_geometry
from .surfaces import get_surface

log = logging.getLogger(__name__)

TABLE_HEADER = ("N", "M", "iters", "cpu_s", "max_err", "order")


@dataclass
class ConvergenceRow:
    N: int
    M: int
    gmres_iterations: int
    cpu_seconds: float
    max_error: float
    observed_order: Optional[float] = None
    error: Optional[str] = None  # set when the row failed

    @property
    def ok(self) -> bool:
        return self.error is None


def error_norm(u_h: np.ndarray, exact: np.ndarray, mask: np.ndarray) -> float:
    """Max |u_h - exact| over the nodes selected by ``mask``."""
    if not np.any(mask):
        return 0.0
    return float(np.max(np.abs(u_h - exact)[mask]))


def error_mask(grid: CartesianGrid, side: np.ndarray, kind: str) -> np.ndarray:
    """BVPs are measured on S+ nodes only; interface problems on all interior nodes."""
    interior = grid.interior_mask()
    if kind.endswith("_bvp"):
        return interior & (side > 0)
    return interior


def problem_data(geom, man: Manufactured, cfg: ExperimentConfig, closed: bool) -> ProblemSpec:
    """Right-hand sides and interface data induced by the exact solution."""
    pts = geom.points
    u, v = pts.points[:, 0], pts.points[:, 1]
    fp, fm = man.source(cfg.beta_plus, cfg.kappa_plus, cfg.beta_minus, cfg.kappa_minus)
    common = dict(kind=cfg.kind, kappa_plus=cfg.kappa_plus, kappa_minus=cfg.kappa_minus,
                  beta_plus=cfg.beta_plus, beta_minus=cfg.beta_minus, closed_surface=closed,
                  gmres_tol=cfg.gmres_tol)
    p = man.plus
    if cfg.kind == "dirichlet_bvp":
        return ProblemSpec(f_plus=fp, g=p.value(u, v), **common)
    if cfg.kind == "neumann_bvp":
        return ProblemSpec(f_plus=fp, g=p.flux(u, v, pts.b1, pts.b2), **common)
    m = man.minus
    g1 = p.value(u, v) - m.value(u, v)
    g2 = (cfg.beta_plus * p.flux(u, v, pts.b1, pts.b2)
          - cfg.beta_minus * m.flux(u, v, pts.b1, pts.b2))
    return ProblemSpec(f_plus=fp, f_minus=fm, g1=g1, g2=g2,
                       g0=None if closed else m.value, **common)


def _surface_and_solution(cfg: ExperimentConfig):
    surface = get_surface(cfg.surface, **cfg.surface_params)
    man = manufactured(surface, cfg.solution_plus, cfg.solution_minus, cfg.coords)
    return surface, man


def run_size(cfg: ExperimentConfig, N: int, surface=None, man=None, dump_dir=None) -> ConvergenceRow:
    """One refinement level. Failures are recorded in the row, not raised."""
    if surface is None:
        surface, man = _surface_and_solution(cfg)
    closed = surface.periodic_u and surface.periodic_v
    curve = get_curve(cfg.curve, **cfg.curve_params)
    M = 0
    try:
        t0 = time.perf_counter()
        geom = build_geometry(surface, curve, N, mg_tol=cfg.mg_tol)
        M = geom.M
        spec = problem_data(geom, man, cfg, closed)
        sol = solve(geom, spec)
        cpu = time.perf_counter() - t0
        X, Y = geom.grid.coords()
        exact = man.exact_on_grid(X, Y, geom.cls.side)
        err = error_norm(sol.u, exact, error_mask(geom.grid, geom.cls.side, cfg.kind))
        if dump_dir is not None:
            dump_field(sol.u, geom.grid, Path(dump_dir) / f"{cfg.name}_N{N}.txt")
        return ConvergenceRow(N, M, sol.stats.iterations, cpu, err)
    except Exception as exc:  # noqa: BLE001 - recorded per row
        log.warning("%s N=%d failed: %s", cfg.name, N, exc)
        return ConvergenceRow(N, M, -1, float("nan"), float("nan"), error=f"{type(exc).__name__}: {exc}")


def fill_orders(rows: List[ConvergenceRow]) -> List[ConvergenceRow]:
    """observed_order = log2(e_{N/2} / e_N) between consecutive rows with halved h."""
    for prev, row in zip(rows, rows[1:]):
        if (row.N == 2 * prev.N and prev.ok and row.ok
                and prev.max_error > 0 and row.max_error > 0):
            row.observed_order = math.log2(prev.max_error / row.max_error)
    return rows


def run_example(cfg: ExperimentConfig, parallel: bool = False, dump_dir=None) -> List[ConvergenceRow]:
    cfg.validate()
    sizes = sorted(cfg.grid_sizes)
    if parallel and len(sizes) > 1:
        with ProcessPoolExecutor() as pool:
            rows = list(pool.map(run_size, [cfg] * len(sizes), sizes, [None] * len(sizes),
                                 [None] * len(sizes), [dump_dir] * len(sizes)))
    else:
        surface, man = _surface_and_solution(cfg)
        rows = [run_size(cfg, N, surface, man, dump_dir) for N in sizes]
    rows = fill_orders(rows)
    if cfg.output:
        emit_table(rows, cfg.output)
    return rows


def _fmt(x: Optional[float]) -> str:
    if x is None:
        return ""
    return f"{x:.6e}"


def emit_table(rows: List[ConvergenceRow], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_HEADER)
        for r in rows:
            w.writerow([r.N, r.M, r.gmres_iterations, f"{r.cpu_seconds:.3f}",
                        _fmt(r.max_error), "" if r.observed_order is None else f"{r.observed_order:.3f}"])
    return path


def read_table(path) -> List[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def dump_field(u_h: np.ndarray, grid: CartesianGrid, path) -> Path:
    """Plain-text dump: three header lines, then one grid row (fixed x index) per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(f"# N {grid.N}\n")
        fh.write(f"# rect {grid.x0!r} {grid.x1!r} {grid.y0!r} {grid.y1!r}\n")
        fh.write(f"# periodic {int(grid.periodic_x)} {int(grid.periodic_y)}\n")
        np.savetxt(fh, u_h, fmt="%.16e")
    return path


def load_field(path):
    with Path(path).open() as fh:
        N = int(fh.readline().split()[2])
        rect = tuple(float(s) for s in fh.readline().split()[2:])
        periodic = tuple(bool(int(s)) for s in fh.readline().split()[2:])
        u = np.loadtxt(fh, ndmin=2)
    return N, rect, periodic, u


def format_rows(rows: List[ConvergenceRow]) -> str:
    lines = ["  ".join(f"{h:>10}" for h in TABLE_HEADER)]
    for r in rows:
        if not r.ok:
            lines.append(f"{r.N:>10}  {r.M:>10}  FAILED: {r.error}")
            continue
        order = "" if r.observed_order is None else f"{r.observed_order:.2f}"
        lines.append(f"{r.N:>10}  {r.M:>10}  {r.gmres_iterations:>10}  {r.cpu_seconds:>10.2f}  "
                     f"{r.max_error:>10.3e}  {order:>10}")
    return "\n".join(lines)
