import math

import numpy as np
import pytest
from scipy import linalg

from aclab import elliptic as el
from aclab.geometry import circle_1d, make_warped_torus
from aclab.profiles1d import DoubleWell, heteroclinic

LINE = circle_1d()
MET = make_warped_torus(2.0, 0.3)


def _interval(n, x1=math.pi, x0=0.0, ny=1, eps=0.05):
    return el.discretize(LINE, (x0, x1), eps, resolution=(n, ny))


def test_stencil_taylor_consistency():
    for n in (64, 128):
        dom = _interval(n, eps=0.4)
        x = dom.x()[:, 0]
        lap = dom.laplacian(x**2)[1:-1]
        assert np.max(np.abs(lap - 2.0)) <= 1e-9
    err = []
    for n in (128, 256):
        dom = _interval(n, eps=0.2)
        x = dom.x()[:, 0]
        err.append(np.max(np.abs(dom.laplacian(np.sin(x))[1:-1] + np.sin(x)[1:-1])))
    assert math.log2(err[0] / err[1]) == pytest.approx(2.0, abs=0.1)


def test_under_resolution_rejected():
    with pytest.raises(ValueError):
        el.discretize(LINE, (0, math.pi), 0.05, resolution=4)
    with pytest.raises(ValueError):
        el.discretize(LINE, (0, math.pi), 0.05, resolution=(32, 1))


def test_principal_eigenvalue_interval():
    lam, eps_star = el.principal_eigenvalue(_interval(4096))
    assert lam == pytest.approx(1.0, rel=1e-6) and eps_star == pytest.approx(1.0, rel=1e-6)
    lam, _ = el.principal_eigenvalue(_interval(4096, x1=2.0))
    assert lam == pytest.approx((math.pi / 2) ** 2, rel=1e-6)


def test_principal_eigenvalue_warped_against_dense():
    dom = el.discretize(MET, (0.0, math.pi), 0.4, resolution=(64, 16))
    lam, _ = el.principal_eigenvalue(dom)
    S, m = dom.operators()
    f = dom.free
    dense = linalg.eigh(S[f][:, f].toarray(), np.diag(m[f]), eigvals_only=True, subset_by_index=[0, 0])[0]
    assert lam == pytest.approx(dense, rel=1e-8)


def test_dirichlet_interval():
    u = el.solve_dirichlet(_interval(2048), 0.05)
    x = u.domain.x()[:, 0]
    assert u.residual <= el.RES_TOL
    assert np.interp(math.pi / 2, x, u.values) >= 1 - 1e-6
    inner = u.values[1:-1]
    # the upper bound holds up to rounding: far from the wall u = 1 - O(1e-17) rounds to 1
    assert np.all(inner > 0) and np.all(inner <= 1)
    # 1-D oracle: near the wall the solution is hbar(x / eps) up to exponentially small terms
    near = x <= 0.5
    assert np.max(np.abs(u.values[near] - heteroclinic(x[near] / 0.05)[0])) <= 1e-4


def test_threshold_error():
    with pytest.raises(el.ThresholdError):
        el.solve_dirichlet(el.discretize(LINE, (0, math.pi), 2.0, resolution=(64, 1)), 2.0)


def test_warped_strip_boundary_slope():
    eps = 0.05
    dom = el.discretize(MET, (0.0, math.pi), eps, resolution=(1024, 8))
    u = el.solve_dirichlet(dom, eps)
    U = u.grid2d()
    dx = dom.grid.dxi
    slope = (-25 * U[0] + 48 * U[1] - 36 * U[2] + 16 * U[3] - 3 * U[4]) / (12 * dx)
    target = 1 / (eps * math.sqrt(2))
    assert np.max(np.abs(slope / target - 1)) <= 0.02
    assert np.all(u.values[dom.free] > 0) and np.all(u.values[dom.free] <= 1 + 1e-12)


def test_minimality_against_competitors():
    eps = 0.2
    dom = el.discretize(MET, (0.0, math.pi), eps, resolution=(128, 8))
    u = el.solve_dirichlet(dom, eps)
    rng = np.random.default_rng(7)
    x = dom.x()
    bump = np.sin(x).ravel()
    for _ in range(20):
        v = u.values + rng.normal(scale=0.05) * bump + 0.01 * rng.normal(size=u.values.size)
        v[dom.mask] = 0
        assert dom.energy(v, eps) >= u.energy


def test_mesh_convergence_order():
    eps = 0.2
    E = [el.solve_dirichlet(el.discretize(MET, (0.0, math.pi), eps, resolution=(n, 8)), eps).energy
         for n in (128, 256, 512)]
    order = math.log2(abs(E[0] - E[1]) / abs(E[1] - E[2]))
    assert order >= 1.8


def test_uniqueness_from_several_guesses():
    eps = 0.2
    dom = el.discretize(MET, (0.0, math.pi), eps, resolution=(128, 8))
    ref = el.solve_dirichlet(dom, eps).values
    x = dom.x().ravel()
    guesses = [np.full(dom.size, 0.5), np.full(dom.size, 0.99), np.sin(x), np.sin(x) ** 2,
               0.2 + 0.7 * np.abs(np.sin(3 * x))]
    for g in guesses:
        u = el.solve_dirichlet(dom, eps, u0=g)
        assert np.max(np.abs(u.values - ref)) <= 1e-8


def _translation_pair(n, eps=0.05, h=1e-4):
    """(finite difference, linearized) velocity of the solution on (t, pi)
    under translation of the left end, at the nodes of an n-cell grid."""
    def sol(t):
        return el.solve_dirichlet(el.discretize(LINE, (t, math.pi), eps, resolution=(n, 1)), eps)

    u = sol(0.0)
    x = u.domain.x()[:, 0]
    U = u.values
    dx = x[1] - x[0]
    slope = (-25 * U[0] + 48 * U[1] - 36 * U[2] + 16 * U[3] - 3 * U[4]) / (12 * dx)
    lin = el.solve_linearized(u, np.array([-slope, 0.0]))
    dU = (sol(h).values - sol(-h).values) / (2 * h)
    # grid nodes ride along with the moving end: dx_j/dt = 1 - x_j / pi
    fd = dU - (1 - x / math.pi) * np.gradient(U, dx, edge_order=2)
    return fd, lin


def test_linearized_against_translation_oracle():
    fc, lc = _translation_pair(2048)
    ff, lf = _translation_pair(4096)
    assert lc.residual <= el.RES_TOL and lf.residual <= el.RES_TOL
    fd = (4 * ff[::2] - fc) / 3
    lin = (4 * lf.values[::2] - lc.values) / 3
    assert np.max(np.abs(fd - lin)) <= 1e-5


def test_linearized_zero_and_linearity():
    eps = 0.2
    dom = el.discretize(MET, (0.0, math.pi), eps, resolution=(128, 8))
    u = el.solve_dirichlet(dom, eps)
    nb = int(dom.mask.sum())
    assert np.all(el.solve_linearized(u, np.zeros(nb)).values == 0)
    rng = np.random.default_rng(3)
    g1, g2 = rng.normal(size=nb), rng.normal(size=nb)
    v1 = el.solve_linearized(u, g1).values
    v2 = el.solve_linearized(u, g2).values
    v12 = el.solve_linearized(u, g1 + g2).values
    assert np.max(np.abs(v12 - v1 - v2)) <= 1e-10
    assert np.allclose(el.solve_linearized(u, g1).boundary, g1)
    with pytest.raises(ValueError):
        el.solve_linearized(u, np.zeros(nb + 1))


def test_newton_polish_trivial_critical_points():
    eps = 0.2
    grid = el.chart_grid(MET, 0.0, eps, nodes_per_eps=8, ny=8)
    dom = el.full_domain(grid)
    one = el.newton_polish(MET, el.PhaseField(eps, dom, np.ones(dom.size)))
    assert np.all(one.values == 1.0)
    assert one.energy == pytest.approx(0.0, abs=1e-12) and one.residual <= el.RES_TOL
    zero = el.newton_polish(MET, el.PhaseField(eps, dom, np.zeros(dom.size)))
    S, m = dom.operators()
    assert zero.energy == pytest.approx(m.sum() / (4 * eps), rel=1e-12)
    assert zero.zero_set is None


def test_field_serialization(tmp_path):
    dom = _interval(512)
    u = el.solve_dirichlet(dom, 0.05)
    p = el.save_field(tmp_path / "u.bin", u)
    head, vals = el.load_field(p)
    assert head["eps"] == 0.05 and head["domain_hash"] == dom.hash()
    assert np.array_equal(vals.ravel(), u.values)
    s = el.write_field_slice(tmp_path / "u.csv", u)
    lines = open(s).read().splitlines()
    assert lines[0] == "x,u" and len(lines) == dom.nrow + 1


def test_residual_definition():
    dom = _interval(512)
    u = el.solve_dirichlet(dom, 0.05)
    r = dom.residual(u.values, 0.05)[dom.free]
    assert np.max(np.abs(r)) <= el.RES_TOL
    assert np.all(DoubleWell.W(u.values) >= 0)
