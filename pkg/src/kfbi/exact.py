"""Manufactured solutions and the data they induce.

Exact solutions are sympy expressions either in embedded coordinates
(x, y, z) or directly in parameter coordinates (u, v). The Laplace-Beltrami
operator is applied symbolically in divergence form,

    Delta_S w = (1/sqrt g) d_i(sqrt(g) g^ij d_j w),

and a finite-difference path is kept as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import sympy as sp

from .geometry import ParametricSurface, coefficient_function, metric_at

X3, Y3, Z3 = sp.symbols("x y z", real=True)
U2, V2 = sp.symbols("u v", real=True)
_NAMES = {"x": X3, "y": Y3, "z": Z3, "u": U2, "v": V2}
FD_STEP = 1e-3


def _lambdify(args, expr):
    fn = sp.lambdify(args, expr, modules="numpy", cse=True)

    def wrapped(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return np.broadcast_to(np.asarray(fn(u, v), dtype=float), np.broadcast(u, v).shape).copy()

    return wrapped


def pullback(surface: ParametricSurface, expr, coords: str = "embedded"):
    """Express ``expr`` in the surface parameters (u, v)."""
    if surface.symbolic is None:
        raise ValueError(f"surface {surface.name!r} has no symbolic embedding")
    X, (U, V) = surface.symbolic
    expr = sp.sympify(expr, locals=_NAMES) if isinstance(expr, str) else sp.sympify(expr)
    if coords == "embedded":
        return expr.subs({X3: X[0], Y3: X[1], Z3: X[2]}, simultaneous=True)
    if coords == "param":
        return expr.subs({U2: U, V2: V}, simultaneous=True)
    raise ValueError("coords must be 'embedded' or 'param'")


def laplace_beltrami_expr(surface: ParametricSurface, w):
    X, (U, V) = surface.symbolic
    X = sp.Matrix(X)
    Xu, Xv = X.diff(U), X.diff(V)
    g11, g12, g22 = Xu.dot(Xu), Xu.dot(Xv), Xv.dot(Xv)
    det = g11 * g22 - g12**2
    sg = sp.sqrt(det)
    a11, a12, a22 = sg * g22 / det, -sg * g12 / det, sg * g11 / det
    wu, wv = sp.diff(w, U), sp.diff(w, V)
    return (sp.diff(a11 * wu + a12 * wv, U) + sp.diff(a12 * wu + a22 * wv, V)) / sg


@dataclass(frozen=True)
class SmoothField:
    """A smooth function on the parameter domain with its gradient and Laplace-Beltrami."""

    value: Callable
    du: Callable
    dv: Callable
    lb: Callable

    def flux(self, u, v, b1, b2):
        """Conormal derivative nu . grad_S w = b1 w_u + b2 w_v."""
        return b1 * self.du(u, v) + b2 * self.dv(u, v)


def smooth_field(surface: ParametricSurface, expr, coords: str = "embedded") -> SmoothField:
    _, (U, V) = surface.symbolic
    w = pullback(surface, expr, coords)
    return SmoothField(
        value=_lambdify((U, V), w),
        du=_lambdify((U, V), sp.diff(w, U)),
        dv=_lambdify((U, V), sp.diff(w, V)),
        lb=_lambdify((U, V), laplace_beltrami_expr(surface, w)),
    )


def fd_laplace_beltrami(surface: ParametricSurface, w: Callable, u, v, step: float = FD_STEP):
    """Delta_S w by 4th-order central differences of ``w`` and of the coefficients."""
    coeffs = coefficient_function(surface, 0.0)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    s = step

    def d1(fn, du, dv):
        return (-fn(u + 2 * du, v + 2 * dv) + 8 * fn(u + du, v + dv)
                - 8 * fn(u - du, v - dv) + fn(u - 2 * du, v - 2 * dv)) / (12 * s)

    def d2(fn, du, dv):
        return (-fn(u + 2 * du, v + 2 * dv) + 16 * fn(u + du, v + dv) - 30 * fn(u, v)
                + 16 * fn(u - du, v - dv) - fn(u - 2 * du, v - 2 * dv)) / (12 * s * s)

    wu, wv = d1(w, s, 0), d1(w, 0, s)
    wuu, wvv = d2(w, s, 0), d2(w, 0, s)
    # fourth-order mixed derivative: the 1D stencil applied in u to the 1D stencil in v
    k = ((-2, -1.0), (-1, 8.0), (1, -8.0), (2, 1.0))
    wuv = sum(ca * cb * w(u - a * s, v - b * s) for a, ca in k for b, cb in k) / (144 * s * s)
    a11, a12, a22, _ = coeffs(u, v)
    d1a11 = d1(lambda p, q: coeffs(p, q)[0], s, 0)
    d1a12 = d1(lambda p, q: coeffs(p, q)[1], s, 0)
    d2a12 = d1(lambda p, q: coeffs(p, q)[1], 0, s)
    d2a22 = d1(lambda p, q: coeffs(p, q)[2], 0, s)
    div = (a11 * wuu + 2 * a12 * wuv + a22 * wvv + (d1a11 + d2a12) * wu + (d1a12 + d2a22) * wv)
    return div / metric_at(surface, u, v).sqrt_g


@dataclass(frozen=True)
class Manufactured:
    """Piecewise exact solution: ``plus`` inside the curve, ``minus`` outside."""

    plus: SmoothField
    minus: Optional[SmoothField] = None

    def source(self, beta_p=1.0, kappa_p=0.0, beta_m=1.0, kappa_m=0.0):
        """f = beta Delta_S u - kappa u per side, as callables."""
        p, m = self.plus, self.minus
        fp = lambda x, y: beta_p * p.lb(x, y) - kappa_p * p.value(x, y)
        if m is None:
            return fp, None
        fm = lambda x, y: beta_m * m.lb(x, y) - kappa_m * m.value(x, y)
        return fp, fm

    def exact_on_grid(self, X, Y, side):
        if self.minus is None:
            return self.plus.value(X, Y)
        return np.where(side > 0, self.plus.value(X, Y), self.minus.value(X, Y))


def manufactured(surface: ParametricSurface, plus, minus=None, coords: str = "embedded") -> Manufactured:
    return Manufactured(
        smooth_field(surface, plus, coords),
        None if minus is None else smooth_field(surface, minus, coords),
    )
