"""Built-in parametric surfaces.

Each surface is written once as a sympy expression; embedding and first
derivatives are lambdified from it, so the stencil coefficients never carry
finite-difference noise.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy as sp

from .geometry import ParametricSurface

U, V = sp.symbols("u v", real=True)


def _vectorize3(fn):
    def wrapped(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        u, v = np.broadcast_arrays(u, v)
        out = fn(u, v)
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), u.shape) for c in out], axis=-1)

    return wrapped


def from_sympy(name, expr, domain, periodic_u=False, periodic_v=False) -> ParametricSurface:
    """Build a surface from a 3-tuple of sympy expressions in ``U``, ``V``."""
    expr = tuple(sp.sympify(e) for e in expr)
    embed = _vectorize3(sp.lambdify((U, V), expr, "numpy"))
    xu = _vectorize3(sp.lambdify((U, V), tuple(sp.diff(e, U) for e in expr), "numpy"))
    xv = _vectorize3(sp.lambdify((U, V), tuple(sp.diff(e, V) for e in expr), "numpy"))
    return ParametricSurface(
        name=name,
        domain=tuple(float(d) for d in domain),
        embed=embed,
        embed_derivs=lambda u, v: (xu(u, v), xv(u, v)),
        periodic_u=periodic_u,
        periodic_v=periodic_v,
        symbolic=(expr, (U, V)),
    )


def plane(extent: float = 1.0):
    return from_sympy("plane", (U, V, 0), (-extent, extent, -extent, extent))


def helicoid():
    return from_sympy("helicoid", (U * sp.sin(V), U * sp.cos(V), V), (-1, 1, -1, 1))


def cubic_sheet():
    return from_sympy("cubic_sheet", (3 * U + V, U - 2 * V, U**3 + V**3), (-1, 1, -1, 1))


def saddle():
    return from_sympy("saddle", (U, V, U**2 - V**2), (-1, 1, -1, 1))


def paraboloid(extent: float = 1.4):
    return from_sympy("paraboloid", (U, V, U**2 + V**2), (-extent, extent, -extent, extent))


def torus(R: float = 2.0, r: float = 0.8):
    R, r = sp.Float(R), sp.Float(r)
    expr = ((R + r * sp.sin(U)) * sp.cos(V), (R + r * sp.sin(U)) * sp.sin(V), r * sp.cos(U))
    return from_sympy("torus", expr, (-np.pi, np.pi, -np.pi, np.pi), True, True)


def dupin_cyclide(a: float = 1.0, b: float = 1.0, c: float = -0.3, d: float = 0.5):
    a, b, c, d = (sp.Float(t) for t in (a, b, c, d))
    den = a - c * sp.cos(U) * sp.cos(V)
    expr = (
        (d * (c - a * sp.cos(U) * sp.cos(V)) + b**2 * sp.cos(U)) / den,
        b * sp.sin(U) * (a - d * sp.cos(V)) / den,
        b * sp.sin(V) * (c * sp.cos(U) - d) / den,
    )
    return from_sympy("dupin", expr, (-np.pi, np.pi, -np.pi, np.pi), True, True)


_FACTORIES = {
    "plane": plane,
    "helicoid": helicoid,
    "cubic_sheet": cubic_sheet,
    "saddle": saddle,
    "paraboloid": paraboloid,
    "torus": torus,
    "dupin": dupin_cyclide,
}


@lru_cache(maxsize=None)
def _cached(name, params):
    return _FACTORIES[name](**dict(params))


def get_surface(name: str, **params) -> ParametricSurface:
    if name not in _FACTORIES:
        raise KeyError(f"unknown surface {name!r}; known: {sorted(_FACTORIES)}")
    return _cached(name, tuple(sorted(params.items())))


def surface_names():
    return sorted(_FACTORIES)
