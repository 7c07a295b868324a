"""Geometric multigrid for the seven-point operator.

Coarse operators are re-discretized from the coefficient function on every
level. Full multigrid provides the initial guess, followed by V(pre, post)
cycles until the relative residual reaches the
requested tolerance. The default smoother is alternating line Gauss-Seidel,
which stays effective when the pulled-back coefficients are strongly
anisotropic (torus, cyclide); point Gauss-Seidel is available as ``"point"``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .fd import CartesianGrid, SevenPointOperator, assemble, build_operator, interior_index


class ConvergenceError(RuntimeError):
    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats


class SingularOperatorError(ValueError):
    """Periodic operator without reaction term: constants are in the nullspace."""


@dataclass
class SolveStats:
    iterations: int
    final_residual: float
    wall_time: float
    history: list = field(default_factory=list, repr=False)


@dataclass
class MultigridHierarchy:
    levels: list  # SevenPointOperator, finest first
    pre_smooth: int = 2
    post_smooth: int = 2
    cycle: str = "V"
    smoother: str = "line"
    _coarse: tuple = field(default=None, repr=False)

    @property
    def grid(self) -> CartesianGrid:
        return self.levels[0].grid

    @property
    def operator(self) -> SevenPointOperator:
        return self.levels[0]


def level_grids(grid: CartesianGrid, n_coarse: int = 8) -> list:
    grids = [grid]
    while grids[-1].N > n_coarse and grids[-1].N % 2 == 0:
        grids.append(grids[-1].coarsen())
    return grids


def build_hierarchy(grid: CartesianGrid, coeff_fn, n_coarse: int = 8, pre_smooth=2, post_smooth=2,
                    cycle="V", smoother="line", fine_operator: SevenPointOperator | None = None,
                    operators: list | None = None) -> MultigridHierarchy:
    """Re-discretize on every level of ``level_grids(grid, n_coarse)``.

    ``operators`` supplies ready-made level operators (finest first) instead.
    """
    if operators is not None:
        levels = list(operators)
    else:
        grids = level_grids(grid, n_coarse)
        levels = [fine_operator if fine_operator is not None else build_operator(grid, coeff_fn)]
        levels += [build_operator(g, coeff_fn) for g in grids[1:]]
    if smoother not in ("line", "point"):
        raise ValueError(f"unknown smoother {smoother!r}")
    hier = MultigridHierarchy(levels, pre_smooth, post_smooth, cycle, smoother)
    _check_definite(levels[-1])
    A = assemble(levels[-1]).toarray()
    hier._coarse = (sla.lu_factor(A), interior_index(levels[-1].grid))
    return hier


def _check_definite(op: SevenPointOperator):
    g = op.grid
    if g.periodic_x and g.periodic_y:
        row_sum = op.c.sum(axis=(0, 1))
        if np.max(np.abs(row_sum)) <= 1e-12 * np.max(np.abs(op.c[1, 1])):
            raise SingularOperatorError(
                "periodic operator with zero reaction term is singular (constant nullspace)"
            )


def restrict(r: np.ndarray, grid: CartesianGrid) -> np.ndarray:
    """Full weighting onto the next coarser grid."""
    out = r
    for axis, periodic in ((0, grid.periodic_x), (1, grid.periodic_y)):
        left = np.roll(out, 1, axis=axis)
        right = np.roll(out, -1, axis=axis)
        sl = [slice(None)] * 2
        sl[axis] = slice(0, None, 2)
        sl = tuple(sl)
        out = 0.5 * out[sl] + 0.25 * (left[sl] + right[sl])
        if not periodic:
            idx = [slice(None)] * 2
            idx[axis] = [0, -1]
            out[tuple(idx)] = 0.0
    return out


def prolong(e: np.ndarray, fine: CartesianGrid) -> np.ndarray:
    """Bilinear interpolation from the coarse grid to ``fine``."""
    out = e
    for axis, periodic in ((0, fine.periodic_x), (1, fine.periodic_y)):
        n_f = fine.shape[axis]
        shape = list(out.shape)
        shape[axis] = n_f
        new = np.zeros(shape)
        even = [slice(None)] * 2
        odd = [slice(None)] * 2
        even[axis] = slice(0, None, 2)
        odd[axis] = slice(1, None, 2)
        new[tuple(even)] = out
        if periodic:
            new[tuple(odd)] = 0.5 * (out + np.roll(out, -1, axis=axis))
        else:
            a = [slice(None)] * 2
            b = [slice(None)] * 2
            a[axis] = slice(0, -1)
            b[axis] = slice(1, None)
            new[tuple(odd)] = 0.5 * (out[tuple(a)] + out[tuple(b)])
        out = new
    return out


class _Cycler:
    def __init__(self, hier: MultigridHierarchy):
        self.h = hier
        self.flags = [(op.grid.periodic_x, op.grid.periodic_y) for op in hier.levels]

    def smooth(self, level, u, f, sweeps, forward=True):
        px, py = self.flags[level]
        kernel = _kernels.line_gauss_seidel if self.h.smoother == "line" else _kernels.gauss_seidel
        kernel(u, f, self.h.levels[level].c, px, py, sweeps, forward)

    def residual(self, level, u, f):
        px, py = self.flags[level]
        return _kernels.residual(u, f, self.h.levels[level].c, px, py)

    def coarse_solve(self, f):
        lu, idx = self.h._coarse
        u = np.zeros_like(f)
        mask = idx >= 0
        u[mask] = sla.lu_solve(lu, f[mask])
        return u

    def cycle(self, level, u, f):
        last = len(self.h.levels) - 1
        if level == last:
            u[...] = self.coarse_solve(f)
            return
        self.smooth(level, u, f, self.h.pre_smooth, True)
        r = self.residual(level, u, f)
        grid = self.h.levels[level].grid
        rc = restrict(r, grid)
        ec = np.zeros_like(rc)
        n_visits = 2 if self.h.cycle == "W" and level + 1 < last else 1
        for _ in range(n_visits):
            self.cycle(level + 1, ec, rc)
        u += prolong(ec, grid)
        self.smooth(level, u, f, self.h.post_smooth, False)

    def fmg(self, f):
        rhs = [f]
        for lvl in range(len(self.h.levels) - 1):
            rhs.append(restrict(rhs[-1], self.h.levels[lvl].grid))
        u = self.coarse_solve(rhs[-1])
        for lvl in range(len(self.h.levels) - 2, -1, -1):
            u = prolong(u, self.h.levels[lvl].grid)
            self.cycle(lvl, u, rhs[lvl])
        return u


def multigrid_solve(hier: MultigridHierarchy, rhs: np.ndarray, tol: float = 1e-10,
                    max_cycles: int = 60, u0: np.ndarray | None = None):
    """Solve L_h u = rhs at interior nodes with homogeneous boundary values.

    Returns ``(u, SolveStats)``; ``final_residual`` is the relative 2-norm of
    the residual over interior nodes.
    """
    t0 = time.perf_counter()
    grid = hier.grid
    mask = grid.interior_mask()
    f = np.where(mask, np.asarray(rhs, dtype=float), 0.0)
    fnorm = np.linalg.norm(f)
    if fnorm == 0.0:
        return np.zeros(grid.shape), SolveStats(0, 0.0, time.perf_counter() - t0)
    cyc = _Cycler(hier)
    if u0 is None:
        u = cyc.fmg(f)
    else:
        u = np.where(mask, u0, 0.0)
    history = []
    rel = np.linalg.norm(cyc.residual(0, u, f)) / fnorm
    history.append(rel)
    it = 0
    while rel > tol:
        if it >= max_cycles:
            stats = SolveStats(it, rel, time.perf_counter() - t0, history)
            raise ConvergenceError(f"multigrid did not converge in {max_cycles} cycles (residual {rel:.2e})", stats)
        cyc.cycle(0, u, f)
        it += 1
        rel = np.linalg.norm(cyc.residual(0, u, f)) / fnorm
        history.append(rel)
    return u, SolveStats(it, rel, time.perf_counter() - t0, history)
