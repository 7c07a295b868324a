"""Second-kind boundary integral equations and their kernel-free solution.

Every operator application is one (or, for the generic interface system, two)
equivalent interface solves; GMRES drives the density to 1e-8.

Conventions: S+ is the region enclosed by the counter-clockwise interface
curve and the conormal nu points from S+ into S-. Jumps are [w] = w+ - w-.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .linalg import gmres
from .multigrid import SolveStats
from .potentials import InterfaceGeometry

GMRES_TOL = 1e-8
GMRES_MAX_ITER = 100
RATIO_RTOL = 1e-12

KINDS = ("dirichlet_bvp", "neumann_bvp", "interface_equal_ratio", "interface_generic")


class InvalidProblem(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    """Problem data at the interface points of one geometry.

    ``f_plus``/``f_minus`` are callables on the parameter plane. For BVPs only
    the + side is used, ``kappa_plus`` is kappa and ``g`` is g_D or g_N. For
    interface problems ``g`` is ignored in favour of (``g1``, ``g2``);
    ``g0`` optionally gives Dirichlet data on the outer boundary of an open
    surface.
    """

    kind: str
    kappa_plus: float = 0.0
    kappa_minus: float = 0.0
    beta_plus: float = 1.0
    beta_minus: float = 1.0
    f_plus: Optional[Callable] = None
    f_minus: Optional[Callable] = None
    g: Optional[np.ndarray] = None
    g1: Optional[np.ndarray] = None
    g2: Optional[np.ndarray] = None
    g0: Optional[Callable] = field(default=None)
    closed_surface: bool = False
    gmres_tol: float = GMRES_TOL

    @property
    def lam_plus(self) -> float:
        return self.kappa_plus / self.beta_plus

    @property
    def lam_minus(self) -> float:
        return self.kappa_minus / self.beta_minus

    @property
    def atwood(self) -> float:
        return (self.beta_plus - self.beta_minus) / (self.beta_plus + self.beta_minus)

    def equal_ratio(self) -> bool:
        lp, lm = self.lam_plus, self.lam_minus
        return abs(lp - lm) <= RATIO_RTOL * max(abs(lp), abs(lm), 1e-300) or lp == lm

    def validate(self):
        if self.kind not in KINDS:
            raise InvalidProblem(f"unknown problem kind {self.kind!r}")
        if self.kind == "dirichlet_bvp":
            if self.kappa_plus < 0:
                raise InvalidProblem("kappa must be non-negative")
            if self.g is None:
                raise InvalidProblem("Dirichlet data missing")
        elif self.kind == "neumann_bvp":
            if self.kappa_plus <= 0:
                raise InvalidProblem("Neumann problem requires kappa > 0")
            if self.g is None:
                raise InvalidProblem("Neumann data missing")
        else:
            if self.beta_plus <= 0 or self.beta_minus <= 0:
                raise InvalidProblem("beta must be positive on both sides")
            if self.kappa_plus < 0 or self.kappa_minus < 0:
                raise InvalidProblem("kappa must be non-negative")
            if self.closed_surface and self.kappa_plus == 0 and self.kappa_minus == 0:
                raise InvalidProblem("closed surface with kappa = 0 on both sides has a nullspace")
            if self.g1 is None or self.g2 is None:
                raise InvalidProblem("interface data g1, g2 missing")
            if self.kind == "interface_equal_ratio" and not self.equal_ratio():
                raise InvalidProblem("kappa/beta differs across the interface; use interface_generic")
        return self


@dataclass
class BIESolution:
    u: np.ndarray  # grid values (BVP: meaningful on + nodes; interface: all nodes)
    density: np.ndarray
    stats: SolveStats
    u_minus: Optional[np.ndarray] = None  # generic system: exterior solution u_e
    reconstruction: object = field(default=None, repr=False)


# ---------------------------------------------------------------------------
# Dirichlet and Neumann boundary value problems
# ---------------------------------------------------------------------------

def dirichlet_operator(geom: InterfaceGeometry, kappa: float) -> Callable:
    """phi -> (1/2 I + K) phi, evaluated as the + trace of D phi."""
    ctx = geom.context(kappa)
    return lambda phi: ctx.solve(phi=phi).trace_plus


def solve_dirichlet(geom: InterfaceGeometry, spec: ProblemSpec) -> BIESolution:
    spec.validate()
    ctx = geom.context(spec.kappa_plus)
    src = (spec.f_plus, None)
    vf = ctx.solve(source=src)
    rhs = np.asarray(spec.g, dtype=float) - vf.trace_plus
    phi, stats = gmres(dirichlet_operator(geom, spec.kappa_plus), rhs, spec.gmres_tol, GMRES_MAX_ITER)
    rec = ctx.solve(source=src, phi=phi)
    return BIESolution(rec.grid_values, phi, stats, reconstruction=rec)


def neumann_operator(geom: InterfaceGeometry, kappa: float) -> Callable:
    """psi -> (1/2 I - K') psi = -(d_nu S psi)^+."""
    ctx = geom.context(kappa)
    return lambda psi: -ctx.solve(psi=-np.asarray(psi)).dnu_plus


def solve_neumann(geom: InterfaceGeometry, spec: ProblemSpec) -> BIESolution:
    spec.validate()
    ctx = geom.context(spec.kappa_plus)
    src = (spec.f_plus, None)
    vf = ctx.solve(source=src)
    rhs = np.asarray(spec.g, dtype=float) - vf.dnu_plus
    psi, stats = gmres(neumann_operator(geom, spec.kappa_plus), rhs, spec.gmres_tol, GMRES_MAX_ITER)
    # u = V f - S psi, i.e. flux jump +psi
    rec = ctx.solve(source=src, psi=psi)
    return BIESolution(rec.grid_values, psi, stats, reconstruction=rec)


# ---------------------------------------------------------------------------
# interface problem, equal ratio kappa/beta
# ---------------------------------------------------------------------------

def interface_equal_ratio_operator(geom: InterfaceGeometry, lam: float, atwood: float) -> Callable:
    """psi -> psi - 2 A K' psi."""
    ctx = geom.context(lam)

    def op(psi):
        psi = np.asarray(psi, dtype=float)
        if atwood == 0.0:
            return psi.copy()
        return psi - 2.0 * atwood * ctx.solve(psi=-psi).dnu_average()

    return op


def _scaled_sources(spec: ProblemSpec):
    fp, fm = spec.f_plus, spec.f_minus
    bp, bm = spec.beta_plus, spec.beta_minus
    sp_ = None if fp is None else (lambda x, y: fp(x, y) / bp)
    sm_ = None if fm is None else (lambda x, y: fm(x, y) / bm)
    return sp_, sm_


def solve_interface_equal_ratio(geom: InterfaceGeometry, spec: ProblemSpec) -> BIESolution:
    """u = D g1 - S psi + V f_hat with f_hat = f / beta per side.

    The flux condition [beta d_nu u] = g2 becomes
    psi - 2 A K' psi = 2 g2 / (beta+ + beta-) - 2 A (H g1 + d_nu V f_hat)_avg.
    """
    spec.validate()
    if spec.kind != "interface_equal_ratio":
        spec = _with_kind(spec, "interface_equal_ratio").validate()
    lam = spec.lam_plus
    ctx = geom.context(lam)
    A = spec.atwood
    src = _scaled_sources(spec)
    g1 = np.asarray(spec.g1, dtype=float)
    g2 = np.asarray(spec.g2, dtype=float)
    w = ctx.solve(source=src, phi=g1, boundary=spec.g0).dnu_average()
    rhs = 2.0 * g2 / (spec.beta_plus + spec.beta_minus) - 2.0 * A * w
    psi, stats = gmres(interface_equal_ratio_operator(geom, lam, A), rhs, spec.gmres_tol, GMRES_MAX_ITER)
    rec = ctx.solve(source=src, phi=g1, psi=psi, boundary=spec.g0)
    return BIESolution(rec.grid_values, psi, stats, reconstruction=rec)


def _with_kind(spec: ProblemSpec, kind: str) -> ProblemSpec:
    return replace(spec, kind=kind)


# ---------------------------------------------------------------------------
# interface problem, generic ratios: two-density system
# ---------------------------------------------------------------------------
#
# Unknowns phi = u_i on the curve and psi = d_nu u_e; with rho = beta-/beta+
# the interior flux is d_nu u_i = g2/beta+ + rho psi.  Zero-extending u_i
# outward and u_e inward gives two interface problems:
#
#   u_i ~ P0 + P,   P0 = solve+(F = (f+/beta+, 0), Psi = g2/beta+),
#                   P  = solve+(Phi = phi, Psi = rho psi)
#   u_e ~ M0 - M,   M0 = solve-(F = (0, f-/beta-), Phi = g1, boundary g0),
#                   M  = solve-(Phi = phi, Psi = psi)
#
# Averaging traces and fluxes of both across the curve (T = trace average,
# Q = flux average) yields
#
#   phi - T(P) + T(M)                      = T(P0) + T(M0) + g1/2
#   -Q(P) + Q(M) + (1 + rho)/2 psi         = Q(P0) + Q(M0) - g2/(2 beta+)
#
# The second row is divided by (1 + rho)/2 so both diagonals are the identity.
# The hypersingular parts enter only as the difference H- - H+, which is
# compact.


def _generic_parts(geom: InterfaceGeometry, spec: ProblemSpec):
    ctx_p = geom.context(spec.lam_plus)
    ctx_m = geom.context(spec.lam_minus)
    rho = spec.beta_minus / spec.beta_plus
    return ctx_p, ctx_m, rho


def interface_generic_operator(geom: InterfaceGeometry, spec: ProblemSpec) -> Callable:
    ctx_p, ctx_m, rho = _generic_parts(geom, spec)
    M = geom.M
    s = 2.0 / (1.0 + rho)

    def op(x):
        x = np.asarray(x, dtype=float)
        phi, psi = x[:M], x[M:]
        P = ctx_p.solve(phi=phi, psi=rho * psi)
        Q = ctx_m.solve(phi=phi, psi=psi)
        row1 = phi - P.trace_average() + Q.trace_average()
        row2 = s * (-P.dnu_average() + Q.dnu_average()) + psi
        return np.concatenate([row1, row2])

    return op


def generic_rhs(geom: InterfaceGeometry, spec: ProblemSpec):
    ctx_p, ctx_m, rho = _generic_parts(geom, spec)
    fp, fm = _scaled_sources(spec)
    g1 = np.asarray(spec.g1, dtype=float)
    g2 = np.asarray(spec.g2, dtype=float)
    P0 = ctx_p.solve(source=(fp, None), psi=g2 / spec.beta_plus)
    M0 = ctx_m.solve(source=(None, fm), phi=g1, boundary=spec.g0)
    r = P0.trace_average() + M0.trace_average() + 0.5 * g1
    s = (P0.dnu_average() + M0.dnu_average() - 0.5 * g2 / spec.beta_plus) * 2.0 / (1.0 + rho)
    return np.concatenate([r, s])


def solve_interface_generic(geom: InterfaceGeometry, spec: ProblemSpec) -> BIESolution:
    """Returns the combined field (u_i on + nodes, u_e on - nodes) in ``u``."""
    if spec.kind != "interface_generic":
        spec = _with_kind(spec, "interface_generic")
    spec.validate()
    ctx_p, ctx_m, rho = _generic_parts(geom, spec)
    M = geom.M
    rhs = generic_rhs(geom, spec)
    x, stats = gmres(interface_generic_operator(geom, spec), rhs, spec.gmres_tol, GMRES_MAX_ITER)
    phi, psi = x[:M], x[M:]
    fp, fm = _scaled_sources(spec)
    g1 = np.asarray(spec.g1, dtype=float)
    g2 = np.asarray(spec.g2, dtype=float)
    ui = ctx_p.solve(source=(fp, None), phi=phi, psi=g2 / spec.beta_plus + rho * psi)
    ue = ctx_m.solve(source=(None, fm), phi=g1 - phi, psi=-psi, boundary=spec.g0)
    plus = geom.plus_mask()
    u = np.where(plus, ui.grid_values, ue.grid_values)
    return BIESolution(u, x, stats, u_minus=ue.grid_values, reconstruction=(ui, ue))


def solve(geom: InterfaceGeometry, spec: ProblemSpec) -> BIESolution:
    """Dispatch on ``spec.kind``."""
    kind = spec.kind
    if kind == "dirichlet_bvp":
        return solve_dirichlet(geom, spec)
    if kind == "neumann_bvp":
        return solve_neumann(geom, spec)
    if kind == "interface_equal_ratio":
        return solve_interface_equal_ratio(geom, spec)
    if kind == "interface_generic":
        return solve_interface_generic(geom, spec)
    raise InvalidProblem(f"unknown problem kind {kind!r}")
