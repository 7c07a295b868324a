import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kfbi.fd import CartesianGrid, apply
from kfbi.geometry import coefficient_function
from kfbi.linalg import gmres, qr_inverse_small, qr_solve_small
from kfbi.multigrid import (
    ConvergenceError,
    SingularOperatorError,
    build_hierarchy,
    multigrid_solve,
    prolong,
    restrict,
)
from kfbi.surfaces import get_surface


def laplacian(x, y):
    one = np.ones_like(x)
    return one, 0 * one, one, 0 * one


def unit_grid(N, periodic=False):
    return CartesianGrid(-1, 1, -1, 1, N, periodic, periodic)


# ---------------------------------------------------------------------------
# multigrid
# ---------------------------------------------------------------------------

def test_zero_rhs_gives_zero():
    g = unit_grid(32)
    u, stats = multigrid_solve(build_hierarchy(g, laplacian), np.zeros(g.shape))
    assert not u.any() and stats.iterations == 0


def _poisson_error(N, smoother="line"):
    g = unit_grid(N)
    X, Y = g.coords()
    exact = np.sin(np.pi * X) * np.sin(np.pi * Y)
    f = -2 * np.pi**2 * exact
    u, stats = multigrid_solve(build_hierarchy(g, laplacian, smoother=smoother), f, tol=1e-12)
    return np.max(np.abs(u - exact)), stats


def test_poisson_second_order():
    e64, s64 = _poisson_error(64)
    e128, _ = _poisson_error(128)
    assert 3.4 <= e64 / e128 <= 4.6
    assert s64.final_residual <= 1e-12


@pytest.mark.parametrize("N", [64, 128, 256])
def test_vcycle_convergence_factor(N):
    g = unit_grid(N)
    rng = np.random.default_rng(N)
    f = rng.standard_normal(g.shape)
    _, stats = multigrid_solve(build_hierarchy(g, laplacian), f, tol=1e-10)
    h = np.asarray(stats.history)
    factor = (h[-1] / h[0]) ** (1.0 / (len(h) - 1))
    assert factor <= 0.25


def test_point_and_line_smoothers_agree():
    e_line, _ = _poisson_error(64, "line")
    e_point, _ = _poisson_error(64, "point")
    assert e_line == pytest.approx(e_point, rel=1e-6)


def test_unknown_smoother():
    with pytest.raises(ValueError):
        build_hierarchy(unit_grid(16), laplacian, smoother="jacobi")


def test_variable_coefficient_residual():
    surface = get_surface("dupin")
    g = CartesianGrid.for_surface(surface, 64)
    hier = build_hierarchy(g, coefficient_function(surface, 0.8))
    f = np.random.default_rng(0).standard_normal(g.shape)
    u, stats = multigrid_solve(hier, f, tol=1e-10)
    r = apply(hier.operator, u) - f
    assert np.linalg.norm(r) / np.linalg.norm(f) <= 1e-10
    assert stats.final_residual <= 1e-10


def test_periodic_without_reaction_is_refused():
    surface = get_surface("torus")
    with pytest.raises(SingularOperatorError):
        build_hierarchy(CartesianGrid.for_surface(surface, 32), coefficient_function(surface, 0.0))


def test_nonconvergence_error():
    g = unit_grid(64)
    hier = build_hierarchy(g, laplacian)
    with pytest.raises(ConvergenceError) as exc:
        multigrid_solve(hier, np.ones(g.shape), tol=1e-30, max_cycles=2)
    assert exc.value.stats.iterations == 2


def test_solve_time_scales_near_linearly():
    def best_time(N):
        g = unit_grid(N)
        hier = build_hierarchy(g, laplacian)
        f = np.random.default_rng(1).standard_normal(g.shape)
        multigrid_solve(hier, f)  # warm-up (JIT, caches)
        ts = []
        for _ in range(3):
            t0 = time.perf_counter()
            multigrid_solve(hier, f)
            ts.append(time.perf_counter() - t0)
        return min(ts)

    assert best_time(256) / best_time(128) <= 5.0


@given(seed=st.integers(0, 2**31), periodic=st.booleans(), N=st.sampled_from([8, 16, 32]))
@settings(max_examples=25)
def test_restriction_is_scaled_adjoint_of_prolongation(seed, periodic, N):
    fine = unit_grid(N, periodic)
    coarse = fine.coarsen()
    rng = np.random.default_rng(seed)
    r = np.where(fine.interior_mask(), rng.standard_normal(fine.shape), 0.0)
    e = np.where(coarse.interior_mask(), rng.standard_normal(coarse.shape), 0.0)
    lhs = np.sum(prolong(e, fine) * r)
    rhs = 4.0 * np.sum(e * restrict(r, fine))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@given(c=st.floats(-10, 10), periodic=st.booleans())
def test_transfers_preserve_constants(c, periodic):
    fine = unit_grid(16, periodic)
    coarse = fine.coarsen()
    pe = prolong(np.full(coarse.shape, c), fine)
    rr = restrict(np.full(fine.shape, c), fine)
    np.testing.assert_allclose(pe, c, atol=1e-12)
    np.testing.assert_allclose(rr[coarse.interior_mask()], c, atol=1e-12)


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), d=st.floats(-3, 3))
def test_prolongation_exact_for_bilinear(a, b, d):
    fine = unit_grid(16)
    coarse = fine.coarsen()
    Xc, Yc = coarse.coords()
    Xf, Yf = fine.coords()
    out = prolong(a * Xc + b * Yc + d * Xc * Yc, fine)
    np.testing.assert_allclose(out, a * Xf + b * Yf + d * Xf * Yf, atol=1e-12)


# ---------------------------------------------------------------------------
# GMRES
# ---------------------------------------------------------------------------

def test_gmres_identity_one_iteration():
    b = np.arange(1.0, 6.0)
    x, stats = gmres(lambda v: v, b)
    np.testing.assert_allclose(x, b)
    assert stats.iterations == 1


def test_gmres_diagonal():
    x, stats = gmres(lambda v: np.array([2.0, 3.0]) * v, np.array([2.0, 3.0]), tol=1e-12)
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-12)
    assert stats.final_residual <= 1e-12


def test_gmres_zero_rhs():
    x, stats = gmres(lambda v: 2 * v, np.zeros(4))
    assert not x.any() and stats.iterations == 0


def test_gmres_max_iterations():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((50, 50))
    with pytest.raises(ConvergenceError):
        gmres(lambda v: A @ v, rng.standard_normal(50), tol=1e-14, max_iter=5)


@given(seed=st.integers(0, 2**31), n=st.integers(2, 40))
@settings(max_examples=30)
def test_gmres_matches_direct_solve(seed, n):
    rng = np.random.default_rng(seed)
    # identity plus a small perturbation: second-kind-like, well conditioned
    A = np.eye(n) + 0.3 * rng.standard_normal((n, n)) / np.sqrt(n)
    b = rng.standard_normal(n)
    x, stats = gmres(lambda v: A @ v, b, tol=1e-12)
    assert np.linalg.norm(A @ x - b) <= 1e-11 * np.linalg.norm(b)
    assert stats.iterations <= n


def test_gmres_history_monotone():
    rng = np.random.default_rng(5)
    A = np.eye(30) + 0.2 * rng.standard_normal((30, 30))
    _, stats = gmres(lambda v: A @ v, rng.standard_normal(30))
    h = np.asarray(stats.history)
    assert np.all(np.diff(h) <= 1e-15)


# ---------------------------------------------------------------------------
# small QR solves
# ---------------------------------------------------------------------------

def _gauss_elimination(A, b):
    """Textbook elimination with partial pivoting (independent oracle)."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        A[[k, p]], b[[k, p]] = A[[p, k]], b[[p, k]]
        for i in range(k + 1, n):
            m = A[i, k] / A[k, k]
            A[i, k:] -= m * A[k, k:]
            b[i] -= m * b[k]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - A[i, i + 1:] @ x[i + 1:]) / A[i, i]
    return x


def test_qr_identity():
    b = np.arange(6.0)
    sol = qr_solve_small(np.eye(6), b)
    np.testing.assert_allclose(sol.x, b)
    assert sol.full_rank and sol.cond == pytest.approx(1.0)


def test_qr_diagonal():
    sol = qr_solve_small(np.diag(np.arange(1.0, 7.0)), np.ones(6))
    np.testing.assert_allclose(sol.x, 1 / np.arange(1.0, 7.0), rtol=1e-14)


def test_qr_rank_deficient():
    A = np.eye(6)
    A[5, 5] = 0.0
    sol = qr_solve_small(A, np.ones(6))
    assert not sol.full_rank
    assert np.all(np.isnan(sol.x))


@given(seed=st.integers(0, 2**31))
@settings(max_examples=50)
def test_qr_matches_elimination(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((6, 6)) + 4 * np.eye(6)
    b = rng.standard_normal(6)
    sol = qr_solve_small(A, b)
    np.testing.assert_allclose(sol.x, _gauss_elimination(A, b), rtol=1e-10, atol=1e-10)
    assert np.linalg.norm(A @ sol.x - b) <= 1e-12 * np.linalg.norm(b) * np.linalg.cond(A)


@given(seed=st.integers(0, 2**31))
@settings(max_examples=20)
def test_batched_inverse(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((5, 6, 6)) + 4 * np.eye(6)
    inv, cond, full = qr_inverse_small(A)
    np.testing.assert_allclose(A @ inv, np.broadcast_to(np.eye(6), A.shape), atol=1e-10)
    assert np.all(full) and np.all(cond >= 1.0)
