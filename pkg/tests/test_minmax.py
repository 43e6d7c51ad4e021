import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from aclab import elliptic as el
from aclab.energy import Resolution
from aclab.geometry import Hypersurface, geodesic_circle, make_warped_torus, normal_graph
from aclab.minmax import (
    DeformationSets, DescentStop, GraphSpace, PathFamily, cutoff, deformation_realization, descend, disc_nodes,
    gradient_floor_probe, hausdorff_distance, index_one_testbed, index_two_testbed, monotone_segments,
    mountain_pass, palais_smale_diagnostic, pseudogradient, segment_path, speed_cap, strong_minmax_audit,
    symmetric_difference,
)

MET = make_warped_torus(2.0, 0.3)
FLAT = make_warped_torus(2.0, 0.0)
RES = Resolution(8)


@pytest.fixture(scope="module")
def space():
    return GraphSpace(MET, 0.0, 0.1, 16, RES)


@pytest.fixture(scope="module")
def space32():
    # 32 y-nodes resolve the steepest graphs drawn below (sup|f'| = 1.5 at eps = 0.1)
    return GraphSpace(MET, 0.0, 0.1, 32, RES)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-0.25, 0.25), min_size=5, max_size=5))
@example([0.0, 0.25, 0.0, 0.25, 0.25])
def test_pseudogradient_inequalities(space32, coeffs):
    space = space32
    y = 2 * np.pi * np.arange(32) / 32
    f = coeffs[0] + coeffs[1] * np.cos(y) + coeffs[2] * np.sin(y) + coeffs[3] * np.cos(2 * y) \
        + coeffs[4] * np.sin(3 * y)
    pg = pseudogradient(space, f)
    nB = pg.norm_derivative
    assert pg.pairing >= nB**2 * (1 - 1e-10)
    assert pg.norm_V <= 2 * nB * (1 + 1e-10)


def test_under_resolved_steep_graph_is_rejected(space):
    y = 2 * np.pi * np.arange(16) / 16
    f = 0.25 * np.cos(y) + 0.25 * np.cos(2 * y) + 0.25 * np.sin(3 * y)
    with pytest.raises(el.SolverError, match="too coarse"):
        space.gradient(f)


def test_pseudogradient_at_critical_and_noncritical_circles(space):
    assert pseudogradient(space, np.zeros(16)).norm_derivative <= 1e-8
    sp = GraphSpace(MET, math.pi / 2, 0.1, 16, RES)
    f = np.zeros(16)
    pg = pseudogradient(sp, f)
    assert pg.norm_derivative > 1e-2
    # -V lowers the energy (warp area decreases toward x = pi)
    assert sp.energy(f - 1e-3 * pg.V) < pg.energy
    assert np.all(pg.V < 0)


def test_descend_into_stable_basin():
    sp = GraphSpace(MET, 0.0, 0.1, 16, RES)
    traj, sp = descend(sp, np.full(16, 0.3), DescentStop(grad_tol=1e-4, max_steps=40))
    assert monotone_segments(traj)
    assert traj[-1].event == "critical"
    assert abs(traj[-1].c + float(np.mean(traj[-1].f)) - math.pi) <= 1e-3
    assert any(s.event == "rechart" for s in traj)


def test_descend_from_critical_circle_does_not_move(space):
    traj, _ = descend(space, np.zeros(16), DescentStop(grad_tol=1e-6))
    assert len(traj) == 1 and traj[0].event == "critical"


def test_cutoff_and_speed_cap():
    sets = DeformationSets(10.0, 0.2, 0.1, 0.2, 0.1)
    assert cutoff(None, 0.0, 0.0, 1.0) == 1.0
    assert cutoff(sets, 10.05, 0.1, 1.0) == 1.0        # inside A
    assert cutoff(sets, 10.5, 0.1, 1.0) == 0.0         # energy outside B
    assert cutoff(sets, 10.0, 0.45, 1.0) == 0.0        # sup outside B
    mid = cutoff(sets, 10.15, 0.1, 1.0)
    assert 0.0 < mid < 1.0
    assert speed_cap(0.5) == 1.0 and speed_cap(4.0) == 0.25
    with pytest.raises(ValueError):
        DeformationSets(10.0, 0.1, 0.2, 0.2, 0.1)
    with pytest.raises(ValueError):
        DeformationSets(10.0, 0.2, 0.1, 0.2, 0.0)


def test_monotone_segments_detects_increase():
    class S:
        def __init__(self, c, e):
            self.c, self.energy = c, e
    assert monotone_segments([S(0, 3.0), S(0, 2.0), S(1, 2.5), S(1, 2.4)])
    assert not monotone_segments([S(0, 3.0), S(0, 3.0)])


def test_gradient_floor_nondegenerate_and_degenerate():
    floors = [gradient_floor_probe(GraphSpace(MET, 0.0, e, 16, RES), 0.2, 0.1, samples=30).floor
              for e in (0.1, 0.05)]
    assert min(floors) > 0.05
    assert abs(floors[0] - floors[1]) <= 0.1 * floors[1]
    flat = gradient_floor_probe(GraphSpace(FLAT, 0.0, 0.1, 16, RES), 0.2, 0.1, samples=10)
    assert flat.floor <= 1e-10
    with pytest.raises(ValueError):
        gradient_floor_probe(GraphSpace(MET, 0.0, 0.1, 16, RES), 0.2, 0.0)


def test_deformation_realization(space):
    rep = deformation_realization(space, r=0.2, delta=0.1, starts=4, floor_samples=10)
    assert rep.passed and len(rep.reached) == 4
    assert all(e <= rep.level - rep.eta_bar for e in rep.final_energies)
    assert all(s <= rep.r + rep.delta for s in rep.max_sups)
    assert "passed=1" in rep.record()


def test_degenerate_path_reports_no_mountain_pass(space):
    f = np.full(16, 0.3)
    fam = segment_path(f, f, 5)
    res = mountain_pass(space, fam)
    assert not res.mountain_pass and res.d_eps == res.c_eps


@pytest.fixture(scope="module")
def mp_small():
    sp, fam = index_one_testbed(0.1, m=9)
    return sp, mountain_pass(sp, fam)


def test_mountain_pass_small(mp_small):
    sp, res = mp_small
    B0 = sp.energy(np.zeros(16))
    assert res.mountain_pass and res.c_eps < res.d_eps
    assert abs(res.d_eps - B0) <= 1e-2 * B0
    assert res.grad_norm <= 1e-6
    assert res.saddle_residual <= 1e-10 and res.negative_count == 1
    assert res.hausdorff <= 0.05
    line = res.record()
    assert f"d_eps={res.d_eps:.17g}" in line


def test_mountain_pass_node_refinement(mp_small):
    sp, res = mp_small
    sp2, fam2 = index_one_testbed(0.1, m=17)
    res2 = mountain_pass(sp2, fam2, polish=False)
    assert abs(res2.d_eps - res.d_eps) <= 1e-3 * res.d_eps


def test_index_two_testbed():
    sp, fam = index_two_testbed(0.1, rings=2)
    assert fam.k == 2 and fam.m == 19 and int(fam.pinned.sum()) == 12
    res = mountain_pass(sp, fam, iters=60)
    B0 = sp.energy(np.zeros(16))
    assert res.mountain_pass
    assert abs(res.d_eps - B0) <= 1e-2 * B0 and res.grad_norm <= 1e-6
    # the circle has index three; the even restriction sees two of the modes
    assert res.saddle_residual <= 1e-10 and res.negative_count == 3


def test_disc_nodes():
    P, nb, bnd = disc_nodes(3)
    assert len(P) == 37 and int(bnd.sum()) == 18
    assert all(len(n) >= 3 for n in nb)


def test_family_escape():
    fam = PathFamily(1, np.zeros((2, 1)), np.array([[0.0, 0.5], [0.0, 0.1]]), np.array([True, True]), r=0.2,
                     delta=0.1)
    with pytest.raises(RuntimeError):
        fam.check_admissible()


def test_strong_minmax_audit_small(space):
    rep = strong_minmax_audit(space, r=0.2, trials=3, m=9, optimized=1, iters=3)
    assert rep.passed and len(rep.sups) == 3
    assert abs(rep.canonical_argmax) <= 0.25 and rep.canonical_sup == pytest.approx(rep.B_sigma, rel=1e-12)
    zero = strong_minmax_audit(space, r=0.0, trials=2, m=5, optimized=0)
    assert zero.canonical_sup == zero.B_sigma and min(zero.sups) >= zero.B_sigma - zero.delta


def test_hausdorff_examples():
    s0 = geodesic_circle(MET, 0.0, 32)
    assert hausdorff_distance(s0, s0) == 0.0
    assert hausdorff_distance(s0, geodesic_circle(MET, 0.3, 32)) == pytest.approx(0.3, abs=1e-12)
    g = normal_graph(s0, 0.1 * np.cos(s0.y))
    assert 0 < hausdorff_distance(s0, g) <= 0.1 + 1e-12


def test_symmetric_difference_closed_form():
    g1, g2 = np.zeros(16), np.full(16, 0.5)
    exact = 2 * math.pi * (2.0 * 0.5 + 0.3 * math.sin(0.5))
    assert symmetric_difference(MET, g1, g2) == pytest.approx(exact, rel=1e-14)
    assert symmetric_difference(MET, g2, g1) == symmetric_difference(MET, g1, g2)


def test_palais_smale_diagnostics():
    eps = 0.1
    s0 = geodesic_circle(MET, 0.0, 16)
    rep = palais_smale_diagnostic([s0] * 3, eps, RES, polish=False)
    assert rep.cauchy and np.all(rep.sym_diff == 0) and np.all(rep.grad_norms <= 1e-8)
    alt = palais_smale_diagnostic([s0, geodesic_circle(MET, 0.3, 16)] * 2, eps, RES, polish=False)
    assert not alt.cauchy
    sp = GraphSpace(MET, 0.0, eps, 16, RES)
    traj, sp = descend(sp, np.full(16, 0.3), DescentStop(grad_tol=1e-7, max_steps=60))
    tail = [Hypersurface(MET, s.c, s.f, 1) for s in traj[-4:]]
    diag = palais_smale_diagnostic(tail, eps, RES)
    assert diag.cauchy and diag.grad_norms[-1] <= 1e-2
    assert diag.polished and diag.limit.residual <= 1e-10
    assert len(diag.rows()) == 4
