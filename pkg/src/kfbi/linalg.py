"""Matrix-free GMRES and small dense QR solves."""

from __future__ import annotations

import time
from typing import Callable, NamedTuple

import numpy as np

from .multigrid import ConvergenceError, SolveStats

RANK_TOL = 1e-12


def gmres(apply: Callable[[np.ndarray], np.ndarray], rhs: np.ndarray, tol: float = 1e-8,
          max_iter: int = 100, callback=None):
    """Unrestarted GMRES from a zero initial guess.

    Arnoldi uses modified Gram-Schmidt, repeated once when the projection
    removes more than 30% of the new vector's norm. Convergence is declared
    when the relative residual
    ||b - A x|| / ||b|| (tracked through the Givens recurrence) is <= ``tol``.

    Returns ``(x, SolveStats)``; raises :class:`ConvergenceError` after
    ``max_iter`` Arnoldi steps.
    """
    t0 = time.perf_counter()
    b = np.asarray(rhs, dtype=float)
    beta = np.linalg.norm(b)
    n = b.size
    if beta == 0.0:
        return np.zeros_like(b), SolveStats(0, 0.0, time.perf_counter() - t0)
    m = min(max_iter, n)
    Q = np.zeros((m + 1, n))
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    Q[0] = b / beta
    history = [1.0]
    k = 0
    rel = 1.0
    for k in range(m):
        w = np.asarray(apply(Q[k]), dtype=float).copy()
        w_norm0 = np.linalg.norm(w)
        for i in range(k + 1):
            H[i, k] = Q[i] @ w
            w -= H[i, k] * Q[i]
        w_norm = np.linalg.norm(w)
        if w_norm < 1e-8 * w_norm0 or w_norm < 0.7 * w_norm0:
            # second pass of Gram-Schmidt
            for i in range(k + 1):
                corr = Q[i] @ w
                H[i, k] += corr
                w -= corr * Q[i]
            w_norm = np.linalg.norm(w)
        H[k + 1, k] = w_norm
        for i in range(k):
            hi = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
            H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
            H[i, k] = hi
        denom = np.hypot(H[k, k], H[k + 1, k])
        cs[k] = H[k, k] / denom
        sn[k] = H[k + 1, k] / denom
        H[k, k] = denom
        H[k + 1, k] = 0.0
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]
        rel = abs(g[k + 1]) / beta
        history.append(rel)
        if callback is not None:
            callback(k + 1, rel)
        if rel <= tol or w_norm == 0.0:
            k += 1
            break
        Q[k + 1] = w / w_norm
    else:
        k = m
    y = np.linalg.solve(np.triu(H[:k, :k]), g[:k])
    x = Q[:k].T @ y
    stats = SolveStats(k, rel, time.perf_counter() - t0, history)
    if rel > tol:
        raise ConvergenceError(f"GMRES reached {max_iter} iterations (residual {rel:.2e})", stats)
    return x, stats


class QRSolution(NamedTuple):
    x: np.ndarray
    cond: float
    full_rank: bool


def qr_solve_small(A: np.ndarray, b: np.ndarray) -> QRSolution:
    """Solve a small square system by Householder QR.

    ``cond`` is the ratio of the largest to smallest |R_ii|; ``full_rank`` is
    False when that ratio exceeds 1 / RANK_TOL, in which case ``x`` is NaN.
    Leading batch dimensions are supported.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    Q, R = np.linalg.qr(A)
    d = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    dmax = d.max(axis=-1)
    dmin = d.min(axis=-1)
    with np.errstate(divide="ignore"):
        cond = np.where(dmin > 0, dmax / np.where(dmin > 0, dmin, 1.0), np.inf)
    full = dmin > RANK_TOL * dmax
    qtb = np.einsum("...ji,...j->...i", Q, b)
    x = np.full(qtb.shape, np.nan)
    ok = np.broadcast_to(full, qtb.shape[:-1])
    if np.any(ok):
        x[ok] = _back_substitute(R[ok], qtb[ok])
    if np.ndim(cond) == 0:
        return QRSolution(x, float(cond), bool(full))
    return QRSolution(x, cond, full)


def _back_substitute(R, y):
    n = R.shape[-1]
    x = np.zeros_like(y)
    for i in range(n - 1, -1, -1):
        x[..., i] = (y[..., i] - np.einsum("...j,...j->...", R[..., i, i + 1:], x[..., i + 1:])) / R[..., i, i]
    return x


def qr_inverse_small(A: np.ndarray):
    """Batched inverse through QR, with per-matrix diagonal-ratio condition estimates."""
    A = np.asarray(A, dtype=float)
    n = A.shape[-1]
    eye = np.broadcast_to(np.eye(n), A.shape)
    Q, R = np.linalg.qr(A)
    d = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    cond = d.max(axis=-1) / d.min(axis=-1)
    full = d.min(axis=-1) > RANK_TOL * d.max(axis=-1)
    inv = np.linalg.solve(R, np.swapaxes(Q, -1, -2) @ eye)
    return inv, cond, full
