"""Uniform Cartesian grids and the seven-point variable-coefficient operator.

The operator discretizes  sum_ij d_i(a_ij d_j u) - a u  with the standard
five-point scheme for the diagonal part and a seven-point mixed-derivative
stencil whose orientation follows the sign of a_12 at each node. Stencil
coefficients are stored as ``c[dx + 1, dy + 1, i, j]`` (already divided by h^2).
Node ``(i, j)`` sits at ``(x0 + i h, y0 + j h)``; arrays use ij indexing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sps

A12_ZERO_TOL = 1e-14

OFFSETS = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)]

# half-offset evaluation points of a_12 for the two mixed stencils (units of h)
_NEG = dict(A=(-0.5, 1), B=(-1, 0.5), C=(0, 0.5), D=(-0.5, 0), E=(0, -0.5), F=(0.5, 0), G=(0.5, -1), H=(1, -0.5))
_POS = dict(A=(0.5, 1), B=(-1, -0.5), C=(0, 0.5), D=(-0.5, 0), E=(0, -0.5), F=(0.5, 0), G=(-0.5, -1), H=(1, 0.5))


class IndefiniteCoefficients(ValueError):
    """a11 a22 - a12^2 <= 0 somewhere on the grid."""


@dataclass(frozen=True)
class CartesianGrid:
    x0: float
    x1: float
    y0: float
    y1: float
    N: int
    periodic_x: bool = False
    periodic_y: bool = False

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be at least 2")
        hx = (self.x1 - self.x0) / self.N
        hy = (self.y1 - self.y0) / self.N
        if hx <= 0 or abs(hx - hy) > 1e-12 * max(1.0, abs(hx)):
            raise ValueError("grid cells must be square with positive size")

    @classmethod
    def for_surface(cls, surface, N: int) -> "CartesianGrid":
        u0, u1, v0, v1 = surface.domain
        return cls(u0, u1, v0, v1, N, surface.periodic_u, surface.periodic_v)

    @property
    def h(self) -> float:
        return (self.x1 - self.x0) / self.N

    @property
    def periodic(self) -> tuple[bool, bool]:
        return self.periodic_x, self.periodic_y

    @property
    def nx(self) -> int:
        return self.N if self.periodic_x else self.N + 1

    @property
    def ny(self) -> int:
        return self.N if self.periodic_y else self.N + 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.nx, self.ny

    @property
    def rect(self):
        return self.x0, self.x1, self.y0, self.y1

    def coords(self):
        x = self.x0 + self.h * np.arange(self.nx)
        y = self.y0 + self.h * np.arange(self.ny)
        return np.meshgrid(x, y, indexing="ij")

    def interior_mask(self) -> np.ndarray:
        m = np.ones(self.shape, dtype=bool)
        if not self.periodic_x:
            m[0, :] = m[-1, :] = False
        if not self.periodic_y:
            m[:, 0] = m[:, -1] = False
        return m

    def coarsen(self) -> "CartesianGrid":
        if self.N % 2:
            raise ValueError("cannot coarsen a grid with odd N")
        return CartesianGrid(self.x0, self.x1, self.y0, self.y1, self.N // 2, self.periodic_x, self.periodic_y)

    def nearest_node(self, x, y):
        i = np.rint((np.asarray(x) - self.x0) / self.h).astype(int)
        j = np.rint((np.asarray(y) - self.y0) / self.h).astype(int)
        return i, j

    def wrap(self, i, j):
        if self.periodic_x:
            i = np.mod(i, self.nx)
        if self.periodic_y:
            j = np.mod(j, self.ny)
        return i, j


@dataclass(frozen=True)
class SevenPointOperator:
    grid: CartesianGrid
    c: np.ndarray  # (3, 3, nx, ny)
    branch: np.ndarray  # int8: sign of a12 at the node; 0 uses the a12 > 0 stencil

    def coeff(self, dx: int, dy: int) -> np.ndarray:
        return self.c[dx + 1, dy + 1]

    def nonzero(self) -> np.ndarray:
        return self.c != 0.0


def build_operator(grid: CartesianGrid, coeff_fn: Callable) -> SevenPointOperator:
    """Assemble the seven-point stencil from ``coeff_fn(x, y) -> (a11, a12, a22, a)``.

    Coefficients are sampled analytically at the half-offset points each
    stencil entry requires.
    """
    X, Y = grid.coords()
    h = grid.h
    cache = {}

    def at(dx, dy):
        key = (dx, dy)
        if key not in cache:
            cache[key] = coeff_fn(X + dx * h, Y + dy * h)
        return cache[key]

    a11c, a12c, a22c, ac = at(0, 0)
    a11c, a12c, a22c = (np.broadcast_to(t, X.shape) for t in (a11c, a12c, a22c))
    ac = np.broadcast_to(ac, X.shape)
    interior = grid.interior_mask()
    if np.any((a11c * a22c - a12c**2)[interior] <= 0) or np.any(a11c[interior] <= 0):
        raise IndefiniteCoefficients("coefficient tensor is not positive definite on the grid")

    c = np.zeros((3, 3) + X.shape)
    inv = 1.0 / h**2
    a11m, a11p = at(-0.5, 0)[0], at(0.5, 0)[0]
    a22m, a22p = at(0, -0.5)[2], at(0, 0.5)[2]
    c[0, 1] = a11m * inv
    c[2, 1] = a11p * inv
    c[1, 0] = a22m * inv
    c[1, 2] = a22p * inv
    c[1, 1] = -(a11m + a11p + a22m + a22p) * inv - ac

    # Where a12 vanishes at the node but not nearby, dropping the mixed stencil
    # would lose the d(a12) terms; either branch stays consistent, so use the
    # a12 > 0 one. If a12 is identically zero around the node its entries vanish.
    branch = np.where(a12c < -A12_ZERO_TOL, -1, np.where(a12c > A12_ZERO_TOL, 1, 0)).astype(np.int8)
    half = 0.5 * inv
    if np.any(branch < 0):
        A, B, Cc, D, E, F, G, H = (at(*_NEG[k])[1] for k in "ABCDEFGH")
        neg = np.zeros_like(c)
        neg[0, 2] = -A - B
        neg[1, 2] = A + Cc
        neg[0, 1] = B + D
        neg[1, 1] = -Cc - D - E - F
        neg[2, 1] = H + F
        neg[1, 0] = E + G
        neg[2, 0] = -H - G
        c += np.where(branch < 0, neg * half, 0.0)
    if np.any(branch >= 0):
        A, B, Cc, D, E, F, G, H = (at(*_POS[k])[1] for k in "ABCDEFGH")
        pos = np.zeros_like(c)
        pos[1, 2] = -A - Cc
        pos[2, 2] = A + H
        pos[0, 1] = -B - D
        pos[1, 1] = Cc + D + E + F
        pos[2, 1] = -H - F
        pos[0, 0] = B + G
        pos[1, 0] = -E - G
        c += np.where(branch >= 0, pos * half, 0.0)

    c *= interior
    branch = np.where(interior, branch, 0).astype(np.int8)
    return SevenPointOperator(grid, c, branch)


def with_reaction(op: SevenPointOperator, sqrt_g: np.ndarray, lam: float) -> SevenPointOperator:
    """``op`` with the extra term -lam sqrt(g) u; the metric part is reused as is."""
    if lam == 0.0:
        return op
    c = op.c.copy()
    c[1, 1] -= lam * np.where(op.grid.interior_mask(), sqrt_g, 0.0)
    return SevenPointOperator(op.grid, c, op.branch)


def shift(u: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """``out[i, j] = u[i + dx, j + dy]`` with wrap-around."""
    return np.roll(u, (-dx, -dy), axis=(0, 1))


def apply(op: SevenPointOperator, u: np.ndarray) -> np.ndarray:
    """(L_h u) at interior nodes; boundary entries of ``u`` act as ghost values."""
    u = np.asarray(u, dtype=float)
    if u.shape != op.grid.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {op.grid.shape}")
    out = np.zeros_like(u)
    for dx, dy in OFFSETS:
        cf = op.c[dx + 1, dy + 1]
        if cf.any():
            out += cf * shift(u, dx, dy)
    return out


def interior_index(grid: CartesianGrid) -> np.ndarray:
    """Map node -> row index over interior nodes, -1 elsewhere."""
    mask = grid.interior_mask()
    idx = -np.ones(grid.shape, dtype=np.int64)
    idx[mask] = np.arange(mask.sum())
    return idx


def assemble(op: SevenPointOperator) -> sps.csr_matrix:
    """Sparse matrix of L_h on interior nodes (Dirichlet ghosts dropped)."""
    grid = op.grid
    idx = interior_index(grid)
    I, J = np.nonzero(idx >= 0)
    rows, cols, vals = [], [], []
    for dx, dy in OFFSETS:
        cf = op.c[dx + 1, dy + 1][I, J]
        ni, nj = grid.wrap(I + dx, J + dy)
        ok = (cf != 0) & (ni >= 0) & (ni < grid.nx) & (nj >= 0) & (nj < grid.ny)
        col = np.full(I.shape, -1)
        col[ok] = idx[ni[ok], nj[ok]]
        ok &= col >= 0
        rows.append(idx[I[ok], J[ok]])
        cols.append(col[ok])
        vals.append(cf[ok])
    n = int((idx >= 0).sum())
    return sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def mmatrix_diagnostics(op: SevenPointOperator, max_dense: int = 33 * 33, mask=None) -> dict:
    """Sign and dominance checks of -L_h.

    ``mask`` restricts the sign and dominance checks to a subset of nodes.
    ``symmetric`` is evaluated on the assembled matrix only when the number of
    interior nodes is at most ``max_dense``; otherwise it is ``None``.
    """
    interior = op.grid.interior_mask()
    if mask is not None:
        interior = interior & mask
    if not np.any(interior):
        return {"diag_sign_ok": True, "offdiag_sign_ok": True, "diag_dominant": True, "symmetric": None}
    center = op.c[1, 1][interior]
    off = np.stack([op.c[dx + 1, dy + 1][interior] for dx, dy in OFFSETS if (dx, dy) != (0, 0)])
    scale = np.max(np.abs(center))
    tol = 1e-12 * scale
    report = {
        "diag_sign_ok": bool(np.all(center < 0)),
        "offdiag_sign_ok": bool(np.all(off >= -tol)),
        "diag_dominant": bool(np.all(np.abs(center) >= np.abs(off).sum(axis=0) - tol)),
        "symmetric": None,
    }
    if op.grid.interior_mask().sum() <= max_dense:
        A = assemble(op).toarray()
        report["symmetric"] = bool(np.max(np.abs(A - A.T)) <= 1e-12 * np.max(np.abs(A)))
    return report
