"""Interface curves in the parameter plane and grid-node classification.

A closed analytic curve is resampled at M knots spaced uniformly in arc
length (about 1.5h apart) and interpolated by a periodic cubic spline in the
uniform parameter theta_k = 2 pi k / M. The knots are the interface points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from . import _kernels
from .fd import CartesianGrid, OFFSETS
from .geometry import conormal_at

KNOT_SPACING = 1.5  # in units of h
MIN_KNOTS = 8
# nodes closer than this (relative to the grid extent) count as on the curve
ON_CURVE_RTOL = 1e-12
TWO_PI = 2.0 * np.pi


class CurveTooSmall(ValueError):
    pass


class DegenerateCurve(ValueError):
    """Spline input that is not a simple closed curve."""


class InterfaceTooCloseToBoundary(ValueError):
    pass


class ClosestPointNotConverged(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# analytic curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParametricCurve:
    kind: str
    params: dict
    eval: Callable = field(repr=False, compare=False)
    eval_deriv: Callable = field(repr=False, compare=False)

    def perimeter(self) -> float:
        return arc_length(self, 0.0, TWO_PI)


def rotated_ellipse(r_a: float, r_b: float, alpha: float = 0.0, center=(0.0, 0.0)) -> ParametricCurve:
    ca, sa = np.cos(alpha), np.sin(alpha)
    cx, cy = center

    def ev(t):
        t = np.asarray(t, dtype=float)
        return np.stack([cx + r_a * np.cos(t) * ca - r_b * np.sin(t) * sa,
                         cy + r_a * np.cos(t) * sa + r_b * np.sin(t) * ca], axis=-1)

    def dv(t):
        t = np.asarray(t, dtype=float)
        return np.stack([-r_a * np.sin(t) * ca - r_b * np.cos(t) * sa,
                         -r_a * np.sin(t) * sa + r_b * np.cos(t) * ca], axis=-1)

    return ParametricCurve("rotated_ellipse", dict(r_a=r_a, r_b=r_b, alpha=alpha, center=center), ev, dv)


def circle(radius: float, center=(0.0, 0.0)) -> ParametricCurve:
    c = rotated_ellipse(radius, radius, 0.0, center)
    return ParametricCurve("circle", dict(radius=radius, center=center), c.eval, c.eval_deriv)


def star(r_a: float, r_b: float, alpha: float, eps: float, m: int, center=(0.0, 0.0)) -> ParametricCurve:
    cx, cy = center

    def ev(t):
        t = np.asarray(t, dtype=float)
        w = eps * np.cos(m * t)
        return np.stack([cx + (r_a + w) * np.cos(t + alpha), cy + (r_b + w) * np.sin(t + alpha)], axis=-1)

    def dv(t):
        t = np.asarray(t, dtype=float)
        w = eps * np.cos(m * t)
        dw = -eps * m * np.sin(m * t)
        return np.stack([dw * np.cos(t + alpha) - (r_a + w) * np.sin(t + alpha),
                         dw * np.sin(t + alpha) + (r_b + w) * np.cos(t + alpha)], axis=-1)

    return ParametricCurve("star", dict(r_a=r_a, r_b=r_b, alpha=alpha, eps=eps, m=m, center=center), ev, dv)


_CURVES = {"rotated_ellipse": rotated_ellipse, "circle": circle, "star": star}


def get_curve(kind: str, **params) -> ParametricCurve:
    if kind not in _CURVES:
        raise KeyError(f"unknown curve {kind!r}; known: {sorted(_CURVES)}")
    return _CURVES[kind](**params)


def _speed(curve, t):
    d = curve.eval_deriv(t)
    return np.hypot(d[..., 0], d[..., 1])


def arc_length(curve: ParametricCurve, t0: float, t1: float, tol: float = 1e-10) -> float:
    """Adaptive Gauss-Kronrod quadrature of the speed."""
    val, _ = quad(lambda t: float(_speed(curve, t)), t0, t1, epsabs=tol, epsrel=tol, limit=500)
    return val


def sample_knots(curve: ParametricCurve, h: float) -> np.ndarray:
    """M = round(P / 1.5h) points equally spaced in arc length, starting at theta = 0."""
    if h <= 0:
        raise ValueError("h must be positive")
    # composite Gauss-Legendre table of s(theta); refined by Newton on s(theta) = s_k
    n_panels = 512
    xg, wg = np.polynomial.legendre.leggauss(10)
    edges = np.linspace(0.0, TWO_PI, n_panels + 1)
    half = 0.5 * (edges[1] - edges[0])
    mid = 0.5 * (edges[1:] + edges[:-1])
    tq = mid[:, None] + half * xg[None, :]
    panel = (_speed(curve, tq) * wg).sum(axis=1) * half
    s_edges = np.concatenate([[0.0], np.cumsum(panel)])
    perimeter = arc_length(curve, 0.0, TWO_PI)
    M = int(round(perimeter / (KNOT_SPACING * h)))
    if M < MIN_KNOTS:
        raise CurveTooSmall(f"only {M} interface points for perimeter {perimeter:.3g} and h={h:.3g}")
    targets = perimeter * np.arange(M) / M
    s_edges *= perimeter / s_edges[-1]
    theta = np.interp(targets, s_edges, edges)

    def s_of(t):
        k = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, n_panels - 1)
        a = edges[k]
        hh = 0.5 * (t - a)
        pts = (a + hh)[:, None] + hh[:, None] * xg[None, :]
        return s_edges[k] + (_speed(curve, pts) * wg).sum(axis=1) * hh

    for _ in range(20):
        step = (s_of(theta) - targets) / _speed(curve, theta)
        theta -= step
        if np.max(np.abs(step)) < 1e-14:
            break
    return curve.eval(theta)


# ---------------------------------------------------------------------------
# periodic spline
# ---------------------------------------------------------------------------

def _segments_intersect(p):
    """True if any two non-adjacent segments of the closed polyline p intersect."""
    n = len(p)
    a = p
    b = np.roll(p, -1, axis=0)
    for i in range(n):
        c, d = a[i + 2:], b[i + 2:]
        if i == 0:
            c, d = c[:-1], d[:-1]
        if len(c) == 0:
            continue
        o1 = _orient(a[i], b[i], c)
        o2 = _orient(a[i], b[i], d)
        o3 = _orient_pts(c, d, a[i])
        o4 = _orient_pts(c, d, b[i])
        if np.any((o1 * o2 < 0) & (o3 * o4 < 0)):
            return True
    return False


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[:, 1] - a[1]) - (b[1] - a[1]) * (c[:, 0] - a[0])


def _orient_pts(c, d, p):
    return (d[:, 0] - c[:, 0]) * (p[1] - c[:, 1]) - (d[:, 1] - c[:, 1]) * (p[0] - c[:, 0])


@dataclass(frozen=True)
class SplineCurve:
    knots: np.ndarray  # (M, 2), counter-clockwise
    spline: CubicSpline = field(repr=False)

    @property
    def M(self) -> int:
        return len(self.knots)

    @property
    def theta(self) -> np.ndarray:
        return TWO_PI * np.arange(self.M) / self.M

    def __call__(self, t, nu: int = 0) -> np.ndarray:
        return self.spline(np.mod(t, TWO_PI), nu)

    def polyline(self, per_segment: int = 16) -> np.ndarray:
        t = np.linspace(0.0, TWO_PI, self.M * per_segment, endpoint=False)
        return self(t)

    def signed_area(self) -> float:
        p = self.polyline()
        return 0.5 * float(np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1]))


def build_spline(knots) -> SplineCurve:
    """Periodic cubic spline through ``knots`` at theta_k = 2 pi k / M.

    Knots are reordered counter-clockwise if necessary.
    """
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 2 or knots.shape[1] != 2 or len(knots) < MIN_KNOTS:
        raise DegenerateCurve("need at least 8 knots of shape (M, 2)")
    seg = np.linalg.norm(np.roll(knots, -1, axis=0) - knots, axis=1)
    if np.any(seg <= 1e-14 * max(1.0, np.max(np.abs(knots)))):
        raise DegenerateCurve("repeated consecutive knots")
    area = 0.5 * np.sum(knots[:, 0] * np.roll(knots[:, 1], -1) - np.roll(knots[:, 0], -1) * knots[:, 1])
    if abs(area) <= 1e-12 * np.sum(seg) ** 2:
        raise DegenerateCurve("knots enclose no area")
    if _segments_intersect(knots):
        raise DegenerateCurve("knot polygon self-intersects")
    if area < 0:
        knots = np.concatenate([knots[:1], knots[:0:-1]])
    M = len(knots)
    t = TWO_PI * np.arange(M + 1) / M
    sp = CubicSpline(t, np.vstack([knots, knots[:1]]), bc_type="periodic")
    return SplineCurve(knots, sp)


# ---------------------------------------------------------------------------
# interface points with conormal data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterfacePointSet:
    theta: np.ndarray  # (M,)
    points: np.ndarray  # (M, 2)
    tangent: np.ndarray  # (M, 2) unit, counter-clockwise
    nu: np.ndarray  # (M, 3) conormal in R^3
    b1: np.ndarray  # flux coefficients: nu . grad_S w = b1 w_u + b2 w_v
    b2: np.ndarray
    spacing: np.ndarray  # (M,) parameter-plane arc length from point l to l+1

    @property
    def M(self) -> int:
        return len(self.theta)


def interface_points(spline: SplineCurve, surface) -> InterfacePointSet:
    th = spline.theta
    pts = spline(th)
    d = spline(th, 1)
    tan = d / np.linalg.norm(d, axis=1)[:, None]
    nu, b1, b2 = conormal_at(surface, pts[:, 0], pts[:, 1], tan)
    xg, wg = np.polynomial.legendre.leggauss(8)
    dt = TWO_PI / spline.M
    tq = th[:, None] + 0.5 * dt * (xg[None, :] + 1)
    sp = np.linalg.norm(spline(tq, 1), axis=-1)
    spacing = 0.5 * dt * (sp * wg).sum(axis=1)
    return InterfacePointSet(th, pts, tan, nu, b1, b2, spacing)


# ---------------------------------------------------------------------------
# node classification
# ---------------------------------------------------------------------------

PLUS, MINUS = 1, -1


@dataclass(frozen=True)
class NodeClassification:
    side: np.ndarray  # int8 (nx, ny): +1 inside the curve, -1 outside
    irregular: np.ndarray  # bool (nx, ny)
    z_nodes: np.ndarray  # (nz, 2) int node indices of Z_h
    stencil_cut: dict = field(repr=False)  # (i, j) -> list of opposite-side (i', j')

    @property
    def regular(self) -> np.ndarray:
        return ~self.irregular

    def interior_split(self, interior_mask):
        return interior_mask & ~self.irregular, interior_mask & self.irregular


def _polyline_side(poly, grid: CartesianGrid):
    px = np.ascontiguousarray(poly[:, 0])
    py = np.ascontiguousarray(poly[:, 1])
    w = _kernels.winding_numbers(px, py, grid.x0, grid.y0, grid.h, grid.nx, grid.ny)
    return w != 0


def check_boundary_distance(spline: SplineCurve, grid: CartesianGrid, factor: float = 2.0):
    p = spline.polyline()
    lim = factor * grid.h
    if not grid.periodic_x and (p[:, 0].min() - grid.x0 <= lim or grid.x1 - p[:, 0].max() <= lim):
        raise InterfaceTooCloseToBoundary("interface within 2h of the x-boundary")
    if not grid.periodic_y and (p[:, 1].min() - grid.y0 <= lim or grid.y1 - p[:, 1].max() <= lim):
        raise InterfaceTooCloseToBoundary("interface within 2h of the y-boundary")
    if grid.periodic_x and (p[:, 0].max() - p[:, 0].min() >= grid.x1 - grid.x0 - lim):
        raise InterfaceTooCloseToBoundary("interface wraps around the periodic x-direction")
    if grid.periodic_y and (p[:, 1].max() - p[:, 1].min() >= grid.y1 - grid.y0 - lim):
        raise InterfaceTooCloseToBoundary("interface wraps around the periodic y-direction")


def node_sides(spline: SplineCurve, grid: CartesianGrid) -> np.ndarray:
    """+1 for nodes enclosed by the spline, -1 otherwise (on-curve nodes get -1)."""
    poly = spline.polyline(per_segment=16)
    inside = _polyline_side(poly, grid)
    side = np.where(inside, PLUS, MINUS).astype(np.int8)
    # nodes close to the curve: settle the side against the spline itself
    X, Y = grid.coords()
    tree = cKDTree(poly)
    seg = np.max(np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1))
    d, _ = tree.query(np.column_stack([X.ravel(), Y.ravel()]), distance_upper_bound=2.0 * seg)
    near = np.flatnonzero(np.isfinite(d))
    if len(near):
        pts = np.column_stack([X.ravel()[near], Y.ravel()[near]])
        _, dist, sgn = closest_point(spline, pts)
        flat = side.ravel()
        tol = ON_CURVE_RTOL * max(grid.x1 - grid.x0, grid.y1 - grid.y0)
        flat[near] = np.where(dist <= tol, MINUS, np.where(sgn > 0, PLUS, MINUS))
        side = flat.reshape(side.shape)
    return side


def classify_nodes(spline: SplineCurve, grid: CartesianGrid, pattern: np.ndarray) -> NodeClassification:
    """Sides, irregular nodes and the correction set Z_h.

    ``pattern`` is the boolean stencil occupancy ``(3, 3, nx, ny)`` of the
    operator (``SevenPointOperator.nonzero()``).
    """
    check_boundary_distance(spline, grid)
    side = node_sides(spline, grid)
    I, J = np.indices(grid.shape)
    irregular = np.zeros(grid.shape, dtype=bool)
    cut_pairs = []
    for dx, dy in OFFSETS:
        if (dx, dy) == (0, 0):
            continue
        mask = pattern[dx + 1, dy + 1]
        ni, nj = grid.wrap(I + dx, J + dy)
        valid = mask & (ni >= 0) & (ni < grid.nx) & (nj >= 0) & (nj < grid.ny)
        opp = np.zeros(grid.shape, dtype=bool)
        opp[valid] = side[ni[valid], nj[valid]] != side[valid]
        irregular |= opp
        ii, jj = np.nonzero(opp)
        cut_pairs.append(np.column_stack([ii, jj, ni[ii, jj], nj[ii, jj]]))
    cut_pairs = np.concatenate(cut_pairs) if cut_pairs else np.zeros((0, 4), dtype=int)
    stencil_cut = {}
    for i, j, a, b in cut_pairs:
        stencil_cut.setdefault((int(i), int(j)), []).append((int(a), int(b)))
    z = np.unique(cut_pairs[:, 2:4], axis=0) if len(cut_pairs) else np.zeros((0, 2), dtype=int)
    return NodeClassification(side, irregular, z, stencil_cut)


# ---------------------------------------------------------------------------
# closest point
# ---------------------------------------------------------------------------

def closest_point(spline: SplineCurve, x, max_newton: int = 50, strict: bool = False):
    """Foot point on the spline for each query point.

    Returns ``(theta, distance, side)`` where ``side`` is +1 if the point lies
    to the left of the counter-clockwise tangent (inside), -1 otherwise.
    Newton's method on d/dtheta |s(theta) - x|^2 is seeded from the nearest of
    4M samples; points that fail to converge fall back to the sampled minimum
    (or raise when ``strict``).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n_s = 4 * spline.M
    ts = TWO_PI * np.arange(n_s) / n_s
    samples = spline(ts)
    _, k = cKDTree(samples).query(x)
    t = ts[k].copy()
    lo = t - TWO_PI / n_s
    hi = t + TWO_PI / n_s
    converged = np.zeros(len(x), dtype=bool)
    for _ in range(max_newton):
        r = spline(t) - x
        d1 = spline(t, 1)
        d2 = spline(t, 2)
        g = np.sum(r * d1, axis=1)
        H = np.sum(d1 * d1, axis=1) + np.sum(r * d2, axis=1)
        scale = np.sum(d1 * d1, axis=1)
        converged = np.abs(g) <= 1e-12 * np.sqrt(scale)
        if np.all(converged):
            break
        step = np.where(H > 0, g / np.where(H > 0, H, 1.0), 0.0)
        t_new = np.clip(t - step, lo, hi)
        converged |= np.abs(t_new - t) <= 1e-15
        t = np.where(converged, t, t_new)
    if not np.all(converged):
        if strict:
            raise ClosestPointNotConverged(f"{np.sum(~converged)} points did not converge")
        t = np.where(converged, t, ts[k])
    r = x - spline(t)
    dist = np.linalg.norm(r, axis=1)
    d1 = spline(t, 1)
    cross = d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]
    side = np.where(cross > 0, PLUS, MINUS)
    return np.mod(t, TWO_PI), dist, side
