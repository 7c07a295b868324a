"""Kernel-free evaluation of volume and layer potentials.

Every potential of  Delta_S - lambda  is the solution of a planar interface
problem with jump data (F, Phi, Psi):

    V f :  F = f,  Phi = 0,  Psi = 0
    S psi: F = 0,  Phi = 0,  Psi = -psi
    D phi: F = 0,  Phi = phi, Psi = 0

which is solved on the Cartesian parameter grid by the corrected seven-point
scheme and multigrid. One-sided traces and conormal derivatives at the
interface points are recovered by corrected interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sps
from scipy.spatial import cKDTree

from . import correction as corr
from .fd import CartesianGrid, SevenPointOperator, apply, build_operator, with_reaction
from .geometry import ParametricSurface, coefficient_function, metric_at
from .interface import (
    MINUS,
    PLUS,
    InterfacePointSet,
    NodeClassification,
    ParametricCurve,
    SplineCurve,
    build_spline,
    classify_nodes,
    interface_points,
    sample_knots,
)
from .multigrid import SolveStats, build_hierarchy, level_grids, multigrid_solve

MG_TOL = 1e-10
MG_MAX_CYCLES = 60

Source = Union[None, np.ndarray, Sequence]


@dataclass
class InterfaceGeometry:
    """Everything about (surface, curve, grid) that does not depend on lambda."""

    surface: ParametricSurface
    grid: CartesianGrid
    spline: SplineCurve
    points: InterfacePointSet
    cls: NodeClassification
    radius: float
    interp: corr.InterpolationMaps
    stencil_map: sps.csr_matrix  # C_h(Z_h) -> D
    eval_map: sps.csr_matrix  # alpha -> C_h(Z_h)
    sqrt_g_nodes: np.ndarray
    sqrt_g_points: np.ndarray
    mg_options: dict = field(default_factory=dict)
    mg_tol: float = MG_TOL
    base_operator: Optional[SevenPointOperator] = field(default=None, repr=False)  # lambda = 0
    _base_levels: list = field(default=None, repr=False)
    _contexts: dict = field(default_factory=dict, repr=False)

    @property
    def M(self) -> int:
        return self.points.M

    @property
    def h(self) -> float:
        return self.grid.h

    def context(self, lam: float) -> "PotentialContext":
        key = float(lam)
        if key not in self._contexts:
            self._contexts[key] = PotentialContext(self, key)
        return self._contexts[key]

    def base_levels(self) -> list:
        """(lambda = 0 operator, sqrt g) on every multigrid level, finest first."""
        if self._base_levels is None:
            grids = level_grids(self.grid, self.mg_options.get("n_coarse", 8))
            zero = coefficient_function(self.surface, 0.0)
            out = []
            for k, g in enumerate(grids):
                op = self.base_operator if k == 0 and self.base_operator is not None else build_operator(g, zero)
                sg = self.sqrt_g_nodes if k == 0 else metric_at(self.surface, *g.coords()).sqrt_g
                out.append((op, sg))
            self._base_levels = out
        return self._base_levels

    def plus_mask(self) -> np.ndarray:
        return self.cls.side == PLUS


def build_geometry(surface: ParametricSurface, curve: Union[ParametricCurve, SplineCurve], N: int,
                   radius_factor: float = corr.PATCH_RADIUS, mg_tol: float = MG_TOL, **mg_options) -> InterfaceGeometry:
    grid = CartesianGrid.for_surface(surface, N)
    spline = curve if isinstance(curve, SplineCurve) else build_spline(sample_knots(curve, grid.h))
    pts = interface_points(spline, surface)
    # off-diagonal stencil entries do not depend on the reaction coefficient
    op0 = build_operator(grid, coefficient_function(surface, 0.0))
    cls = classify_nodes(spline, grid, op0.nonzero())
    r = radius_factor * grid.h
    stencil = corr.interpolation_stencil(pts, grid, cls.side)
    interp = corr.interpolation_maps(stencil, pts, grid, r)
    assignment = corr.assign_nearest(pts.points, grid, cls.z_nodes)
    E = corr.evaluation_map(grid, cls.z_nodes, assignment, pts.points, r)
    S = corr.correction_stencil_map(op0, cls)
    X, Y = grid.coords()
    return InterfaceGeometry(
        surface=surface,
        grid=grid,
        spline=spline,
        points=pts,
        cls=cls,
        radius=r,
        interp=interp,
        stencil_map=S,
        eval_map=E,
        sqrt_g_nodes=metric_at(surface, X, Y).sqrt_g,
        sqrt_g_points=metric_at(surface, pts.points[:, 0], pts.points[:, 1]).sqrt_g,
        mg_options=mg_options,
        mg_tol=mg_tol,
        base_operator=op0,
    )


@dataclass(frozen=True)
class PotentialRequest:
    lam: float
    source: Source = None  # (F+, F-) callables/arrays, or one grid array for both sides
    jump_phi: Optional[np.ndarray] = None
    jump_psi: Optional[np.ndarray] = None
    boundary: Optional[Union[Callable, np.ndarray]] = None  # outer Dirichlet data (open surfaces)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")


@dataclass
class PotentialResult:
    grid_values: np.ndarray
    trace_plus: np.ndarray
    trace_minus: np.ndarray
    dnu_plus: np.ndarray
    dnu_minus: np.ndarray
    stats: SolveStats = None
    alpha: np.ndarray = field(default=None, repr=False)

    def trace_average(self) -> np.ndarray:
        return 0.5 * (self.trace_plus + self.trace_minus)

    def dnu_average(self) -> np.ndarray:
        return 0.5 * (self.dnu_plus + self.dnu_minus)


class PotentialContext:
    """Operator, multigrid hierarchy and correction maps for one lambda."""

    def __init__(self, geom: InterfaceGeometry, lam: float):
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        self.geom = geom
        self.lam = lam
        self.coeff_fn = coefficient_function(geom.surface, lam)
        ops = [with_reaction(op, sg, lam) for op, sg in geom.base_levels()]
        self.hier = build_hierarchy(geom.grid, self.coeff_fn, operators=ops, **geom.mg_options)
        self.op = self.hier.operator
        self.cauchy = corr.build_cauchy_systems(geom.points, self.coeff_fn, geom.h, geom.radius)
        A = self.cauchy.alpha_map()
        self.alpha_map = A
        self.D_map = (geom.stencil_map @ geom.eval_map @ A).tocsr()  # (Phi, Psi, fbar) -> D
        it = geom.interp
        self.trace_alpha = (it.Ta @ A).tocsr()
        self.dnu_alpha = (it.Na @ A).tocsr()
        self.jump_trace = (it.jump_trace @ A).tocsr()
        self.jump_dnu = (it.jump_dnu @ A).tocsr()

    # -- sources -----------------------------------------------------------
    def _source_terms(self, source: Source):
        """Node rhs sqrt(g) F and the jump fbar at the interface points."""
        g = self.geom
        M = g.M
        if source is None:
            return np.zeros(g.grid.shape), np.zeros(M)
        plus = g.cls.side == PLUS
        if isinstance(source, np.ndarray) and source.shape == g.grid.shape:
            Fn = source
            fbar = self._jump_from_nodes(source)
        else:
            Fp, Fm = source
            X, Y = g.grid.coords()
            q = g.points.points
            Fn = np.where(plus, _sample(Fp, X, Y), _sample(Fm, X, Y))
            fp = self._side_values(Fp, q, PLUS)
            fm = self._side_values(Fm, q, MINUS)
            fbar = fp - fm
        return g.sqrt_g_nodes * Fn, g.sqrt_g_points * fbar

    def _side_values(self, F, q, side):
        if F is None:
            return np.zeros(len(q))
        if callable(F):
            return np.broadcast_to(np.asarray(F(q[:, 0], q[:, 1]), dtype=float), (len(q),)).copy()
        if np.isscalar(F):
            return np.full(len(q), float(F))
        return self._nearest_same_side(np.asarray(F), side)

    def _jump_from_nodes(self, Fn):
        return self._nearest_same_side(Fn, PLUS) - self._nearest_same_side(Fn, MINUS)

    def _nearest_same_side(self, Fn, side):
        # constant continuation from the nearest node of the requested side
        g = self.geom
        I, J = np.nonzero(g.cls.side == side)
        X = g.grid.x0 + g.h * I
        Y = g.grid.y0 + g.h * J
        _, k = cKDTree(np.column_stack([X, Y])).query(g.points.points)
        return Fn[I[k], J[k]]

    def _boundary_values(self, boundary):
        g = self.geom
        if boundary is None:
            return None
        X, Y = g.grid.coords()
        vals = np.asarray(boundary(X, Y), dtype=float) if callable(boundary) else np.asarray(boundary, dtype=float)
        vals = np.where(g.grid.interior_mask(), 0.0, np.broadcast_to(vals, g.grid.shape))
        return vals if np.any(vals) else None

    # -- solve -------------------------------------------------------------
    def solve(self, source: Source = None, phi=None, psi=None, boundary=None) -> PotentialResult:
        g = self.geom
        M = g.M
        phi = np.zeros(M) if phi is None else np.asarray(phi, dtype=float)
        psi = np.zeros(M) if psi is None else np.asarray(psi, dtype=float)
        if phi.shape != (M,) or psi.shape != (M,):
            raise ValueError(f"jump data must have length M={M}")
        rhs_nodes, fbar = self._source_terms(source)
        x = np.concatenate([phi, psi, fbar])
        rhs = rhs_nodes + (self.D_map @ x).reshape(g.grid.shape)
        gb = self._boundary_values(boundary)
        if gb is not None:
            rhs = rhs - apply(self.op, gb)
        if not np.any(rhs[g.grid.interior_mask()]):
            u = np.zeros(g.grid.shape)
            stats = SolveStats(0, 0.0, 0.0)
        else:
            u, stats = multigrid_solve(self.hier, rhs, tol=g.mg_tol, max_cycles=MG_MAX_CYCLES)
        if gb is not None:
            u = u + gb
        uf = u.ravel()
        it = g.interp
        tp = it.Tu @ uf + self.trace_alpha @ x
        dp = it.Nu @ uf + self.dnu_alpha @ x
        tm = tp - self.jump_trace @ x
        dm = dp - self.jump_dnu @ x
        return PotentialResult(u, tp, tm, dp, dm, stats, self.alpha_map @ x)


def _sample(F, X, Y):
    if F is None:
        return np.zeros(X.shape)
    if callable(F):
        return np.broadcast_to(np.asarray(F(X, Y), dtype=float), X.shape)
    return np.broadcast_to(np.asarray(F, dtype=float), X.shape)


# ---------------------------------------------------------------------------
# public potential operations
# ---------------------------------------------------------------------------

def solve_equivalent_interface(geom: InterfaceGeometry, request: PotentialRequest) -> PotentialResult:
    ctx = geom.context(request.lam)
    return ctx.solve(request.source, request.jump_phi, request.jump_psi, request.boundary)


def volume_potential(geom: InterfaceGeometry, f, lam: float) -> PotentialResult:
    """V f; ``f`` is one callable/array (zero-extended outside) or a (f+, f-) pair."""
    if callable(f):
        f = (f, None)
    return geom.context(lam).solve(source=f)


def single_layer(geom: InterfaceGeometry, psi, lam: float) -> PotentialResult:
    return geom.context(lam).solve(psi=-np.asarray(psi, dtype=float))


def double_layer(geom: InterfaceGeometry, phi, lam: float) -> PotentialResult:
    return geom.context(lam).solve(phi=np.asarray(phi, dtype=float))


def principal_value_K(res: PotentialResult) -> np.ndarray:
    """K phi from a double-layer solve."""
    return res.trace_average()


def adjoint_Kprime(res: PotentialResult) -> np.ndarray:
    """K' psi from a single-layer solve."""
    return res.dnu_average()


def hypersingular_H(res: PotentialResult) -> np.ndarray:
    """H phi from a double-layer solve."""
    return res.dnu_average()
