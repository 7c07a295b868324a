import numpy as np
import pytest
import sympy as sp

from kfbi.exact import fd_laplace_beltrami, laplace_beltrami_expr, manufactured, pullback, smooth_field
from kfbi.surfaces import get_surface, surface_names

FIELDS = {
    "embedded": "exp((2*x + y)/7)*cos((x - 3*y)/7) + z",
    "param": "sin(u)*cos(v) + u*v",
}


@pytest.mark.parametrize("name", surface_names())
def test_symbolic_and_fd_laplace_beltrami_agree(name, rng):
    surface = get_surface(name)
    coords = "param" if surface.periodic_u else "embedded"
    fld = smooth_field(surface, FIELDS[coords], coords)
    u0, u1, v0, v1 = surface.domain
    # keep the 4th-order FD stencil inside the domain
    pad = 0.05
    u = rng.uniform(u0 + pad * (u1 - u0), u1 - pad * (u1 - u0), 50)
    v = rng.uniform(v0 + pad * (v1 - v0), v1 - pad * (v1 - v0), 50)
    sym = fld.lb(u, v)
    fd = fd_laplace_beltrami(surface, fld.value, u, v)
    assert np.max(np.abs(sym - fd)) <= 1e-7 * max(1.0, np.max(np.abs(sym)))


def test_plane_laplacian():
    fld = smooth_field(get_surface("plane"), "x**3*y - y**2")
    x, y = 0.3, -0.4
    assert fld.lb(x, y) == pytest.approx(6 * x * y - 2)
    assert fld.du(x, y) == pytest.approx(3 * x**2 * y)
    assert fld.dv(x, y) == pytest.approx(x**3 - 2 * y)


def test_ambient_coordinate_on_curved_sheet():
    # z restricted to a curved sheet is not harmonic; both paths agree on its Laplace-Beltrami
    surface = get_surface("cubic_sheet")
    fld = smooth_field(surface, "z")
    u = np.array([0.1, -0.3])
    v = np.array([0.2, 0.5])
    np.testing.assert_allclose(fld.lb(u, v), fd_laplace_beltrami(surface, fld.value, u, v), atol=1e-7)


def test_pullback_coordinates():
    surface = get_surface("helicoid")
    X, (U, V) = surface.symbolic
    assert sp.simplify(pullback(surface, "x") - X[0]) == 0
    assert sp.simplify(pullback(surface, "u + v", "param") - (U + V)) == 0
    with pytest.raises(ValueError):
        pullback(surface, "x", "cartesian")


def test_laplace_beltrami_of_constant_is_zero():
    surface = get_surface("torus")
    assert sp.simplify(laplace_beltrami_expr(surface, sp.Integer(3))) == 0


def test_manufactured_source_and_sides():
    surface = get_surface("plane")
    man = manufactured(surface, "x**2", "y")
    fp, fm = man.source(2.0, 1.0, 3.0, 0.5)
    assert fp(0.5, 0.0) == pytest.approx(2 * 2 - 0.25)
    assert fm(0.0, 2.0) == pytest.approx(-1.0)
    X = np.array([0.5, 0.5])
    Y = np.array([1.0, 1.0])
    np.testing.assert_allclose(man.exact_on_grid(X, Y, np.array([1, -1])), [0.25, 1.0])
    one_sided = manufactured(surface, "x")
    assert one_sided.source()[1] is None
