"""Surface embeddings, induced metric and the planar pullback coefficients.

All routines are vectorized: parameter coordinates may be scalars or arrays of
any (broadcast-compatible) shape, and the returned fields share that shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

DEGENERACY_TOL = 1e-14


class DegenerateParameterization(ValueError):
    """Raised where |X_u x X_v| vanishes."""


@dataclass(frozen=True)
class ParametricSurface:
    """Embedding X(u, v) of a surface over a rectangular parameter domain.

    ``embed(u, v)`` returns an array of shape ``u.shape + (3,)``;
    ``embed_derivs(u, v)`` returns the pair ``(X_u, X_v)`` with the same shape.
    When no analytic derivatives are given, 4th-order central differences of
    ``embed`` are used.
    """

    name: str
    domain: tuple[float, float, float, float]
    embed: Callable[[np.ndarray, np.ndarray], np.ndarray]
    embed_derivs: Optional[Callable] = None
    periodic_u: bool = False
    periodic_v: bool = False
    # sympy expression (X, (u, v)) for manufactured-data generation, optional
    symbolic: Optional[tuple] = field(default=None, compare=False, repr=False)

    @property
    def periods(self) -> tuple[float, float]:
        u0, u1, v0, v1 = self.domain
        return u1 - u0, v1 - v0

    def derivs(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.embed_derivs is not None:
            xu, xv = self.embed_derivs(u, v)
            return np.asarray(xu, dtype=float), np.asarray(xv, dtype=float)
        return fd_derivs(self.embed, u, v, self.fd_step)

    @property
    def fd_step(self) -> float:
        lu, lv = self.periods
        return 1e-5 * max(lu, lv)


def fd_derivs(embed, u, v, step):
    """4th-order central differences of ``embed`` in u and v."""
    def d(shift_u, shift_v):
        return (
            -embed(u + 2 * shift_u, v + 2 * shift_v)
            + 8 * embed(u + shift_u, v + shift_v)
            - 8 * embed(u - shift_u, v - shift_v)
            + embed(u - 2 * shift_u, v - 2 * shift_v)
        ) / (12 * step)

    return d(step, 0.0), d(0.0, step)


@dataclass(frozen=True)
class MetricData:
    g11: np.ndarray
    g12: np.ndarray
    g22: np.ndarray
    det_g: np.ndarray
    inv_g11: np.ndarray
    inv_g12: np.ndarray
    inv_g22: np.ndarray
    normal: np.ndarray

    @property
    def sqrt_g(self):
        return np.sqrt(self.det_g)


@dataclass(frozen=True)
class PullbackCoefficients:
    """Coefficients of sum_ij d_i(a_ij d_j u) - a u = source_scale * F."""

    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    a: np.ndarray
    source_scale: np.ndarray


def _metric_from_derivs(xu, xv) -> MetricData:
    g11 = np.einsum("...k,...k->...", xu, xu)
    g12 = np.einsum("...k,...k->...", xu, xv)
    g22 = np.einsum("...k,...k->...", xv, xv)
    cross = np.cross(xu, xv)
    area = np.linalg.norm(cross, axis=-1)
    if np.any(area <= DEGENERACY_TOL):
        raise DegenerateParameterization(
            f"|X_u x X_v| = {np.min(area):.3e} at some sampled point"
        )
    det = g11 * g22 - g12 * g12
    return MetricData(
        g11=g11,
        g12=g12,
        g22=g22,
        det_g=det,
        inv_g11=g22 / det,
        inv_g12=-g12 / det,
        inv_g22=g11 / det,
        normal=cross / area[..., None],
    )


def metric_at(surface: ParametricSurface, u, v) -> MetricData:
    """Induced metric g_ij = X_i . X_j, its inverse and the unit normal."""
    xu, xv = surface.derivs(u, v)
    return _metric_from_derivs(xu, xv)


def pullback_coefficients(surface: ParametricSurface, u, v, kappa: float = 0.0):
    """Planar coefficients a_ij = sqrt(g) g^ij, a = kappa sqrt(g)."""
    if kappa < 0:
        raise ValueError("kappa must be non-negative")
    m = metric_at(surface, u, v)
    sg = m.sqrt_g
    return PullbackCoefficients(
        a11=sg * m.inv_g11,
        a12=sg * m.inv_g12,
        a22=sg * m.inv_g22,
        a=kappa * sg,
        source_scale=sg,
    )


def coefficient_function(surface: ParametricSurface, kappa: float):
    """Return ``f(x, y) -> (a11, a12, a22, a)`` for grid assembly."""

    def coeffs(x, y):
        c = pullback_coefficients(surface, x, y, kappa)
        return c.a11, c.a12, c.a22, c.a

    return coeffs


def conormal_at(surface: ParametricSurface, u, v, tangent):
    """Outer conormal of a parameter-plane curve through (u, v).

    ``tangent`` holds the parameter-plane tangent (last axis of length 2); for a
    counter-clockwise curve the result points away from the enclosed region.

    Returns
    -------
    nu : ndarray (..., 3)
        Unit conormal ``e x n`` in R^3.
    b1, b2 : ndarray
        Flux coefficients, so that ``nu . grad_S w = b1 w_u + b2 w_v`` for any
        pulled-back function ``w``.
    """
    tangent = np.asarray(tangent, dtype=float)
    if np.any(np.linalg.norm(tangent, axis=-1) == 0):
        raise ValueError("zero tangent")
    xu, xv = surface.derivs(u, v)
    m = _metric_from_derivs(xu, xv)
    e = tangent[..., 0, None] * xu + tangent[..., 1, None] * xv
    e = e / np.linalg.norm(e, axis=-1)[..., None]
    nu = np.cross(e, m.normal)
    # nu is tangent to the surface, so nu = b1 X_u + b2 X_v with b = g^{-1} (nu . X_j)
    p1 = np.einsum("...k,...k->...", nu, xu)
    p2 = np.einsum("...k,...k->...", nu, xv)
    b1 = m.inv_g11 * p1 + m.inv_g12 * p2
    b2 = m.inv_g12 * p1 + m.inv_g22 * p2
    return nu, b1, b2
