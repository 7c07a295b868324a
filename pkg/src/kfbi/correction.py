"""Correction functions from local Cauchy problems, right-hand-side
corrections and corrected interpolation at interface points.

Near the interface the jump C = u+ - u- of the two smooth extensions
satisfies  L C = [f],  C = Phi,  b . grad C = Psi  on the curve. Around every
interface point q_l it is approximated by a quadratic polynomial

    C_l(p) = sum_k alpha_{l,k} phi_k((p - q_l) / r),
    phi = (1, x, y, x^2, y^2, xy),

fixed by six collocation conditions: Dirichlet at q_{l-1}, q_l, q_{l+1}, the
flux condition at q_l together with the centered difference of the flux
conditions at q_{l-1} and q_{l+1}, and the PDE at q_l. Imposing the flux at
q_l itself keeps the flux jump seen by the grid equal to Psi_l for every
mode the interface points resolve. Because these 6x6 systems
depend only on geometry and the reaction coefficient, every step from the
jump data to the corrections is a fixed sparse linear map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.spatial import cKDTree

from .fd import CartesianGrid, SevenPointOperator
from .interface import InterfacePointSet, NodeClassification, MINUS, PLUS
from .linalg import qr_inverse_small, qr_solve_small

PATCH_RADIUS = 3.0  # in units of h
N_BASIS = 6


class RankDeficientPatch(np.linalg.LinAlgError):
    pass


class MissingAssignment(KeyError):
    pass


@dataclass(frozen=True)
class JumpData:
    phi: np.ndarray  # [u] at the interface points
    psi: np.ndarray  # [nu . grad_S u]
    fbar: np.ndarray  # [sqrt(g) F]

    def __post_init__(self):
        if not (len(self.phi) == len(self.psi) == len(self.fbar)):
            raise ValueError("jump data lengths differ")

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.phi, self.psi, self.fbar])


@dataclass(frozen=True)
class CauchyPatch:
    center: np.ndarray
    radius: float
    alpha: np.ndarray
    cond: float = np.nan

    def __call__(self, x, y):
        return basis((np.asarray(x) - self.center[0]) / self.radius,
                     (np.asarray(y) - self.center[1]) / self.radius) @ self.alpha


def basis(x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.stack([np.ones_like(x), x, y, x * x, y * y, x * y], axis=-1)


def basis_dx(x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.zeros_like(x)
    return np.stack([z, np.ones_like(x), z, 2 * x, z, y], axis=-1)


def basis_dy(x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.zeros_like(x)
    return np.stack([z, z, np.ones_like(x), z, 2 * y, x], axis=-1)


# ---------------------------------------------------------------------------
# local Cauchy problems
# ---------------------------------------------------------------------------

def pde_row(coeff_fn, q, r: float, h: float) -> np.ndarray:
    """Scaled PDE collocation row(s) at points ``q`` (shape (..., 2)).

    Coefficient derivatives are central differences of step ``h``; the row is
    multiplied by r^2.
    """
    q = np.asarray(q, dtype=float)
    x, y = q[..., 0], q[..., 1]
    a11, a12, a22, a = (np.broadcast_to(t, x.shape) for t in coeff_fn(x, y))
    e = coeff_fn(x + h, y)
    w = coeff_fn(x - h, y)
    n = coeff_fn(x, y + h)
    s = coeff_fn(x, y - h)
    d1a11 = (e[0] - w[0]) / (2 * h)
    d1a12 = (e[1] - w[1]) / (2 * h)
    d2a12 = (n[1] - s[1]) / (2 * h)
    d2a22 = (n[2] - s[2]) / (2 * h)
    return np.stack([-r * r * a, r * (d1a11 + d2a12), r * (d1a12 + d2a22),
                     2 * a11, 2 * a22, 2 * a12], axis=-1)


def _flux_row(b, z):
    return b[0][..., None] * basis_dx(z[..., 0], z[..., 1]) + b[1][..., None] * basis_dy(z[..., 0], z[..., 1])


def cauchy_matrix(q0, q_prev, q_next, b0, b_prev, b_next, prow, r: float) -> np.ndarray:
    """Collocation matrix with rows
    (D(q0), D(q-), D(q+), N(q0), [N(q+) - N(q-)] / 2, PDE(q0)).

    Right-hand side ordering:
    (Phi_0, Phi_-, Phi_+, r Psi_0, r (Psi_+ - Psi_-) / 2, r^2 fbar_0).
    Arguments may carry a leading batch dimension.
    """
    q0 = np.asarray(q0, dtype=float)
    zp = (np.asarray(q_prev) - q0) / r
    zn = (np.asarray(q_next) - q0) / r
    zero = np.zeros(q0.shape[:-1])
    z0 = np.stack([zero, zero], axis=-1)
    rows = [
        basis(zero, zero),
        basis(zp[..., 0], zp[..., 1]),
        basis(zn[..., 0], zn[..., 1]),
        _flux_row(b0, z0),
        0.5 * (_flux_row(b_next, zn) - _flux_row(b_prev, zp)),
        np.asarray(prow, dtype=float),
    ]
    return np.stack(rows, axis=-2)


def cauchy_rhs(phi, psi, fbar0, r: float) -> np.ndarray:
    """``phi`` and ``psi`` are (prev, center, next) triples."""
    return np.stack([phi[1], phi[0], phi[2], r * np.asarray(psi[1]),
                     0.5 * r * (np.asarray(psi[2]) - np.asarray(psi[0])),
                     r * r * np.asarray(fbar0)], axis=-1)


def solve_local_cauchy(q0, q_prev, q_next, b0, b_prev, b_next, coeff_fn, h: float,
                       phi, psi, fbar, r: float | None = None) -> CauchyPatch:
    """Quadratic correction polynomial on one patch.

    ``phi`` and ``psi`` hold the jump data at (q_prev, q0, q_next), ``fbar``
    is [f] at q0 and ``b*`` are the flux coefficient pairs (b1, b2) at the
    three points. Raises :class:`RankDeficientPatch` when the collocation
    matrix is numerically singular.
    """
    r = PATCH_RADIUS * h if r is None else r
    q0 = np.asarray(q0, dtype=float)
    b0, b_prev, b_next = (tuple(np.asarray(t, dtype=float) for t in b) for b in (b0, b_prev, b_next))
    A = cauchy_matrix(q0, q_prev, q_next, b0, b_prev, b_next, pde_row(coeff_fn, q0, r, h), r)
    b = cauchy_rhs(phi, psi, fbar, r)
    sol = qr_solve_small(A, b)
    if not sol.full_rank:
        raise RankDeficientPatch(f"collocation matrix rank-deficient (cond {sol.cond:.2e})")
    return CauchyPatch(q0, r, sol.x, sol.cond)


@dataclass(frozen=True)
class CauchySystems:
    """Inverted collocation matrices for all M patches."""

    radius: float
    inverse: np.ndarray  # (M, 6, 6)
    cond: np.ndarray  # (M,)

    def alpha_map(self) -> sps.csr_matrix:
        """Sparse map (Phi, Psi, fbar) -> alpha (flattened l-major, 6M)."""
        M = len(self.cond)
        r = self.radius
        l = np.arange(M)
        # each rhs slot is a combination of data entries: (slot, column, weight)
        terms = [
            (0, l, 1.0), (1, (l - 1) % M, 1.0), (2, (l + 1) % M, 1.0),
            (3, M + l, r), (4, M + (l + 1) % M, 0.5 * r), (4, M + (l - 1) % M, -0.5 * r),
            (5, 2 * M + l, r * r),
        ]
        R, C, V = [], [], []
        k = np.arange(N_BASIS)
        for slot, col, w in terms:
            R.append((N_BASIS * l[:, None] + k[None, :]).ravel())
            C.append(np.repeat(col, N_BASIS))
            V.append((w * self.inverse[:, :, slot]).ravel())
        return sps.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))),
                              shape=(N_BASIS * M, 3 * M))


def build_cauchy_systems(pts: InterfacePointSet, coeff_fn, h: float, r: float | None = None) -> CauchySystems:
    r = PATCH_RADIUS * h if r is None else r
    q = pts.points
    prev = np.roll(q, 1, axis=0)
    nxt = np.roll(q, -1, axis=0)
    b = (pts.b1, pts.b2)
    b_prev = tuple(np.roll(t, 1) for t in b)
    b_next = tuple(np.roll(t, -1) for t in b)
    A = cauchy_matrix(q, prev, nxt, b, b_prev, b_next, pde_row(coeff_fn, q, r, h), r)
    inv, cond, full = qr_inverse_small(A)
    if not np.all(full):
        bad = np.flatnonzero(~full)
        raise RankDeficientPatch(f"collocation matrices rank-deficient at patches {bad[:10].tolist()}")
    return CauchySystems(r, inv, cond)


# ---------------------------------------------------------------------------
# correction field on the grid
# ---------------------------------------------------------------------------

def _min_image(d, period, periodic):
    if periodic:
        return d - period * np.rint(d / period)
    return d


def node_offsets(grid: CartesianGrid, nodes: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(x_node - center) with minimal-image wrap on periodic axes."""
    X = grid.x0 + grid.h * nodes[:, 0]
    Y = grid.y0 + grid.h * nodes[:, 1]
    dx = _min_image(X - centers[:, 0], grid.x1 - grid.x0, grid.periodic_x)
    dy = _min_image(Y - centers[:, 1], grid.y1 - grid.y0, grid.periodic_y)
    return np.column_stack([dx, dy])


def assign_nearest(points: np.ndarray, grid: CartesianGrid, nodes: np.ndarray) -> np.ndarray:
    """Index of the nearest interface point for each node; ties go to the lower index."""
    if len(nodes) == 0:
        return np.zeros(0, dtype=int)
    X = grid.x0 + grid.h * nodes[:, 0]
    Y = grid.y0 + grid.h * nodes[:, 1]
    k = min(2, len(points))
    d, idx = cKDTree(points).query(np.column_stack([X, Y]), k=k)
    if k == 1:
        return np.asarray(idx)
    tie = np.abs(d[:, 0] - d[:, 1]) <= 1e-12 * np.maximum(d[:, 0], 1e-300)
    return np.where(tie, np.minimum(idx[:, 0], idx[:, 1]), idx[:, 0])


@dataclass(frozen=True)
class CorrectionField:
    """Piecewise quadratic C_h with nearest-center partition of unity."""

    centers: np.ndarray  # (M, 2)
    radius: float
    alpha: np.ndarray  # (M, 6)
    grid: CartesianGrid
    nodes: np.ndarray  # (nz, 2) node indices covered (Z_h)
    assignment: np.ndarray  # (nz,) patch index per node
    _lookup: dict = field(default=None, repr=False, compare=False)

    def patch(self, l: int) -> CauchyPatch:
        return CauchyPatch(self.centers[l], self.radius, self.alpha[l])

    def values(self) -> np.ndarray:
        """C_h at the covered nodes."""
        off = node_offsets(self.grid, self.nodes, self.centers[self.assignment]) / self.radius
        return np.einsum("nk,nk->n", basis(off[:, 0], off[:, 1]), self.alpha[self.assignment])

    def at_node(self, i: int, j: int) -> float:
        lookup = self._lookup
        if lookup is None:
            lookup = {(int(a), int(b)): n for n, (a, b) in enumerate(self.nodes)}
            object.__setattr__(self, "_lookup", lookup)
        key = (int(i), int(j))
        if key not in lookup:
            raise MissingAssignment(f"node {key} has no correction patch")
        return float(self.values()[lookup[key]])


def correction_field(pts: InterfacePointSet, grid: CartesianGrid, cls: NodeClassification,
                     alpha: np.ndarray, radius: float) -> CorrectionField:
    assignment = assign_nearest(pts.points, grid, cls.z_nodes)
    return CorrectionField(pts.points, radius, np.asarray(alpha).reshape(-1, N_BASIS), grid,
                           cls.z_nodes, assignment)


def evaluation_map(grid: CartesianGrid, nodes: np.ndarray, assignment: np.ndarray,
                   centers: np.ndarray, radius: float) -> sps.csr_matrix:
    """Sparse map alpha (6M) -> C_h at ``nodes``."""
    M = len(centers)
    off = node_offsets(grid, nodes, centers[assignment]) / radius
    B = basis(off[:, 0], off[:, 1])
    rows = np.repeat(np.arange(len(nodes)), N_BASIS)
    cols = (N_BASIS * assignment[:, None] + np.arange(N_BASIS)).ravel()
    return sps.csr_matrix((B.ravel(), (rows, cols)), shape=(len(nodes), N_BASIS * M))


def correction_stencil_map(op: SevenPointOperator, cls: NodeClassification) -> sps.csr_matrix:
    """Sparse map C_h(Z_h) -> D on the flattened grid.

    D = -sum c C at irregular + nodes and +sum c C at irregular - nodes, the
    sums running over the opposite-side stencil members.
    """
    grid = op.grid
    zindex = {(int(a), int(b)): n for n, (a, b) in enumerate(cls.z_nodes)}
    rows, cols, vals = [], [], []
    for (i, j), members in cls.stencil_cut.items():
        sgn = -1.0 if cls.side[i, j] == PLUS else 1.0
        for a, b in members:
            dx = _wrap_offset(a - i, grid.nx, grid.periodic_x)
            dy = _wrap_offset(b - j, grid.ny, grid.periodic_y)
            rows.append(i * grid.ny + j)
            cols.append(zindex[(a, b)])
            vals.append(sgn * op.c[dx + 1, dy + 1, i, j])
    n = grid.nx * grid.ny
    return sps.csr_matrix((vals, (rows, cols)), shape=(n, len(cls.z_nodes)))


def _wrap_offset(d, n, periodic):
    if periodic and abs(d) > 1:
        return int(d - n * np.sign(d))
    return int(d)


def rhs_correction(op: SevenPointOperator, cls: NodeClassification, C: CorrectionField) -> np.ndarray:
    """Right-hand-side correction D(x_i, y_j; C_h) as a grid function."""
    if len(cls.z_nodes) and not np.array_equal(C.nodes, cls.z_nodes):
        raise MissingAssignment("correction field does not cover Z_h")
    S = correction_stencil_map(op, cls)
    vals = C.values() if len(C.nodes) else np.zeros(0)
    return (S @ vals).reshape(op.grid.shape)


# ---------------------------------------------------------------------------
# corrected interpolation
# ---------------------------------------------------------------------------

INTERP_BLOCK = 4
INTERP_DEGREE = 3


def _monomials(x, y, degree: int) -> np.ndarray:
    """Monomials x^a y^b with a + b <= degree; the first three are 1, x, y."""
    cols = [np.ones_like(x), x, y]
    for d in range(2, degree + 1):
        cols += [x ** (d - b) * y ** b for b in range(d + 1)]
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class InterpolationStencil:
    """Least-squares polynomial fits on a node block around every interface point."""

    nodes: np.ndarray  # (M, K, 2) wrapped node indices
    offsets: np.ndarray  # (M, K, 2) node - q_l (unwrapped)
    weights: np.ndarray  # (M, 3, K): value, d/dx, d/dy
    minus: np.ndarray  # (M, K) bool: node on the - side


def interpolation_stencil(pts: InterfacePointSet, grid: CartesianGrid, side: np.ndarray,
                          block: int = INTERP_BLOCK, degree: int = INTERP_DEGREE) -> InterpolationStencil:
    """``block`` x ``block`` nodes centred on the point; 3 x 3 uses the nearest node as centre."""
    if (degree + 1) * (degree + 2) // 2 > block * block:
        raise ValueError("block too small for the polynomial degree")
    q = pts.points
    h = grid.h
    if block % 2:
        i0, j0 = grid.nearest_node(q[:, 0], q[:, 1])
        steps = np.arange(block) - block // 2
    else:
        i0 = np.floor((q[:, 0] - grid.x0) / h).astype(int)
        j0 = np.floor((q[:, 1] - grid.y0) / h).astype(int)
        steps = np.arange(block) - (block // 2 - 1)
    di, dj = np.meshgrid(steps, steps, indexing="ij")
    I = i0[:, None] + di.ravel()[None, :]
    J = j0[:, None] + dj.ravel()[None, :]
    off = np.stack([grid.x0 + h * I - q[:, 0, None], grid.y0 + h * J - q[:, 1, None]], axis=-1)
    Iw, Jw = grid.wrap(I, J)
    if np.any((Iw < 0) | (Iw >= grid.nx) | (Jw < 0) | (Jw >= grid.ny)):
        raise ValueError("interpolation block leaves the grid")
    V = _monomials(off[..., 0] / h, off[..., 1] / h, degree)  # (M, K, n_poly)
    P = np.linalg.pinv(V)  # (M, n_poly, K)
    weights = np.stack([P[:, 0], P[:, 1] / h, P[:, 2] / h], axis=1)
    minus = side[Iw, Jw] == MINUS
    return InterpolationStencil(np.stack([Iw, Jw], axis=-1), off, weights, minus)


@dataclass(frozen=True)
class InterpolationMaps:
    """trace+ = Tu u + Ta alpha,  dnu+ = Nu u + Na alpha; minus side from alpha_{l,0..2}."""

    Tu: sps.csr_matrix
    Ta: sps.csr_matrix
    Nu: sps.csr_matrix
    Na: sps.csr_matrix
    jump_trace: sps.csr_matrix  # alpha -> C_l(q_l)
    jump_dnu: sps.csr_matrix  # alpha -> b . grad C_l(q_l)


def interpolation_maps(stencil: InterpolationStencil, pts: InterfacePointSet, grid: CartesianGrid,
                       radius: float) -> InterpolationMaps:
    M = pts.M
    flat = stencil.nodes[..., 0] * grid.ny + stencil.nodes[..., 1]  # (M, K)
    n = grid.nx * grid.ny
    K = flat.shape[1]
    wv = stencil.weights[:, 0]
    wn = pts.b1[:, None] * stencil.weights[:, 1] + pts.b2[:, None] * stencil.weights[:, 2]
    rows = np.repeat(np.arange(M), K)
    Tu = sps.csr_matrix((wv.ravel(), (rows, flat.ravel())), shape=(M, n))
    Nu = sps.csr_matrix((wn.ravel(), (rows, flat.ravel())), shape=(M, n))
    # C_l at the - side block nodes, expressed through alpha_l
    z = stencil.offsets / radius
    B = basis(z[..., 0], z[..., 1]) * stencil.minus[..., None]  # (M, K, 6)
    Av = np.einsum("mi,mik->mk", wv, B)
    An = np.einsum("mi,mik->mk", wn, B)
    arow = np.repeat(np.arange(M), N_BASIS)
    acol = (N_BASIS * np.arange(M)[:, None] + np.arange(N_BASIS)).ravel()
    Ta = sps.csr_matrix((Av.ravel(), (arow, acol)), shape=(M, N_BASIS * M))
    Na = sps.csr_matrix((An.ravel(), (arow, acol)), shape=(M, N_BASIS * M))
    l = np.arange(M)
    jt = sps.csr_matrix((np.ones(M), (l, N_BASIS * l)), shape=(M, N_BASIS * M))
    jd = sps.csr_matrix(
        (np.concatenate([pts.b1, pts.b2]) / radius,
         (np.concatenate([l, l]), np.concatenate([N_BASIS * l + 1, N_BASIS * l + 2]))),
        shape=(M, N_BASIS * M),
    )
    return InterpolationMaps(Tu, Ta, Nu, Na, jt, jd)


def corrected_interpolate(u: np.ndarray, C: CorrectionField, pts: InterfacePointSet,
                          cls: NodeClassification, side: int, index=None):
    """One-sided trace and conormal derivative at interface points.

    Values at nodes on the far side are shifted by the patch polynomial so the
    node block samples one smooth extension; a least-squares polynomial is then
    evaluated at the point. ``side`` is +1 or -1. Returns ``(trace, dnu)``.
    """
    stencil = interpolation_stencil(pts, C.grid, cls.side)
    maps = interpolation_maps(stencil, pts, C.grid, C.radius)
    alpha = C.alpha.ravel()
    uf = np.asarray(u, dtype=float).ravel()
    trace = maps.Tu @ uf + maps.Ta @ alpha
    dnu = maps.Nu @ uf + maps.Na @ alpha
    if side == MINUS:
        trace = trace - maps.jump_trace @ alpha
        dnu = dnu - maps.jump_dnu @ alpha
    elif side != PLUS:
        raise ValueError("side must be +1 or -1")
    if index is not None:
        return trace[index], dnu[index]
    return trace, dnu
