import pytest

from kfbi import validation as val
from kfbi.cli import main


def test_fitted_order_of_exact_power_law():
    sizes = (32, 64, 128, 256)
    assert val.fitted_order(sizes, [3.0 * n**-2.0 for n in sizes]) == pytest.approx(2.0)
    assert val.observed_orders([4.0, 1.0, 0.25]) == pytest.approx([2.0, 2.0])


def test_quick_suite_passes():
    results = val.run_all(quick=True)
    assert [r.name[:3] for r in results] == ["(a)", "(b)", "(c)", "(d)", "(e)"]
    for r in results:
        assert r.passed, r.line()


def test_truncation_orders():
    reg, irr = zip(*(val.truncation_errors(N) for N in (32, 64, 128)))
    assert val.fitted_order((32, 64, 128), reg) >= 1.7
    assert 0.7 <= val.fitted_order((32, 64, 128), irr) <= 1.5


def test_cauchy_reproduction_exact():
    err, cond = val.cauchy_reproduction("ex1_dirichlet", 64)
    assert err <= 1e-9 and cond <= 1e5


def test_mmatrix_mask_plane_is_everywhere():
    from kfbi.fd import CartesianGrid
    from kfbi.surfaces import get_surface

    s = get_surface("plane")
    assert val.mmatrix_mask(CartesianGrid.for_surface(s, 16), s).all()


def test_check_result_line():
    assert val.CheckResult("x", False, "bad").line() == "[FAIL] x: bad"


def test_cli_validate_quick(capsys):
    assert main(["validate", "--quick"]) == 0
    assert capsys.readouterr().out.count("[PASS]") == 5
