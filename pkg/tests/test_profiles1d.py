import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from aclab.profiles1d import (
    SIGMA, SIGMA0, DoubleWell, apply_cutoff, constants, heteroclinic, heteroclinic_table, profile_set,
    solve_profile_bvp, write_profile_csv,
)


@pytest.fixture(scope="module")
def tables():
    return profile_set()


def _collocation(rhs, z_max=30.0):
    """Independent oracle: scipy collocation of f'' - W''(hbar) f = rhs."""
    def fun(z, y):
        return np.vstack([y[1], DoubleWell.d2W(heteroclinic(z)[0]) * y[0] + rhs(z)])

    z = np.linspace(0, z_max, 2001)
    sol = integrate.solve_bvp(fun, lambda a, b: np.array([a[0], b[0]]), z, np.zeros((2, z.size)),
                              tol=1e-10, max_nodes=200000)
    assert sol.success
    return sol


@given(st.floats(-5, 5))
def test_double_well_invariants(t):
    W, dW, d2W = DoubleWell.W(t), DoubleWell.dW(t), DoubleWell.d2W(t)
    assert W >= 0
    assert W == pytest.approx(DoubleWell.W(-t))
    assert dW == pytest.approx(-DoubleWell.dW(-t))
    assert d2W == pytest.approx(DoubleWell.d2W(-t))


def test_double_well_wells():
    assert DoubleWell.W(1.0) == 0 and DoubleWell.W(-1.0) == 0
    assert DoubleWell.W(0.0) == 0.25


def test_constants():
    c = constants()
    assert abs(c.sigma0 - math.sqrt(2) / 3) <= 1e-12
    assert abs(c.sigma - 1 / math.sqrt(2)) <= 1e-12
    assert c.sigma0 == pytest.approx(0.4714045208, abs=1e-10)
    # the quadrature of (hbar')^2 reproduces sigma0; the plain integral is 1
    assert abs(c.sigma0_quadrature - SIGMA0) <= 1e-10
    assert abs(c.plain_integral - 1.0) <= 1e-10
    assert SIGMA == pytest.approx(heteroclinic(0.0)[1])


def test_equipartition_and_ode():
    z = np.linspace(-30, 30, 20001)
    v, d = heteroclinic(z)
    assert np.max(np.abs(0.5 * d**2 - DoubleWell.W(v))) <= 1e-10
    tab = heteroclinic_table()
    assert np.max(np.abs(tab(z, 2) - DoubleWell.dW(v))) <= 1e-10
    # strictly increasing until tanh saturates in double precision
    assert np.all(np.diff(tab.values) >= 0)
    assert np.all(np.diff(tab.values[tab.z <= 20]) > 0)


@pytest.mark.parametrize("eps", [0.1, 0.05, 0.02])
def test_whole_line_energy(eps):
    # energy of hbar(x/eps) on a window of +-40 eps is 2 sigma0 independent of eps
    x = np.linspace(-40 * eps, 40 * eps, 400001)
    v, d = heteroclinic(x / eps)
    dens = eps / 2 * (d / eps) ** 2 + DoubleWell.W(v) / eps
    assert abs(integrate.simpson(dens, x=x) - 2 * SIGMA0) <= 1e-6


def test_auxiliary_residuals(tables):
    for kind in ("omega", "rho", "tau", "kappa"):
        t = tables[kind]
        assert t.z[0] == 0 and np.all(np.diff(t.z) > 0)
        assert t.values[0] == 0.0
        assert abs(t.values[-1]) <= 1e-8
        assert t.residual <= 1e-8, kind
        assert t.discrete_residual <= 1e-8, kind


@pytest.mark.parametrize("kind", ["omega", "tau"])
def test_auxiliary_against_collocation(tables, kind):
    rhs = {"omega": lambda z: heteroclinic(z)[1], "tau": lambda z: z * heteroclinic(z)[1]}[kind]
    sol = _collocation(rhs)
    z = np.linspace(0, 15, 301)
    assert np.max(np.abs(tables[kind](z) - sol.sol(z)[0])) <= 1e-7


def test_dependent_profiles_against_collocation(tables):
    om = tables["omega"]
    sol = _collocation(lambda z: heteroclinic(z)[0] * om(z))
    z = np.linspace(0, 15, 301)
    assert np.max(np.abs(tables["kappa"](z) - sol.sol(z)[0])) <= 1e-7


def test_bvp_errors():
    with pytest.raises(ValueError):
        solve_profile_bvp("rho")
    with pytest.raises(ValueError):
        solve_profile_bvp("omega", z_max=10)
    with pytest.raises(ValueError):
        solve_profile_bvp("heteroclinic")


def test_cutoff_bands():
    cp = apply_cutoff(heteroclinic_table(), 0.1, 6)
    assert cp.z1 == pytest.approx(13.8155, abs=1e-4)
    z = np.linspace(0, 13.8, 200)
    assert np.array_equal(cp(z), heteroclinic(z)[0])
    z = np.linspace(27.64, 40, 200)
    assert np.all(cp(z) == 1.0)
    assert np.all(cp(-z) == -1.0)


def test_cutoff_defect(tables):
    cp = apply_cutoff(tables["omega"], 0.05, 6)
    assert cp.defect <= 1e-6
    with pytest.raises(ValueError):
        apply_cutoff(tables["omega"], 1.0)
    with pytest.raises(ValueError):
        apply_cutoff(tables["omega"], 0.1, ell=5)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-3, 0.5), st.floats(0, 60))
def test_cutoff_blend_between_base_and_tail(eps, z):
    cp = apply_cutoff(heteroclinic_table(), eps, 6, npts=101)
    v = float(cp(z))
    assert min(heteroclinic(z)[0], 1.0) - 1e-15 <= v <= 1.0


def test_profile_csv(tmp_path, tables):
    p = write_profile_csv(tables["omega"], tmp_path / "w.csv", zs=[0.0, 1.0])
    lines = open(p).read().splitlines()
    assert lines[0] == "z,value" and len(lines) == 3
    assert float(lines[2].split(",")[1]) == float(tables["omega"](1.0))
