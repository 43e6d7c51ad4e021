"""Acceptance suite: one recorded PASS/FAIL line per criterion (printed in
the terminal summary).  Tolerances are the fixed targets of the project."""
import math
import os
import time

import numpy as np

from aclab import lab
from aclab.energy import Resolution, balanced_energy, expansion_residual
from aclab.geometry import circle_1d, curvature_data, geodesic_circle, jacobi_spectrum, make_warped_torus
from aclab.minmax import (
    GraphSpace, deformation_realization, gradient_floor_probe, index_one_testbed, mountain_pass,
    strong_minmax_audit,
)
from aclab.profiles1d import SIGMA, SIGMA0, DoubleWell, constants, heteroclinic, profile_set
from aclab.variation import fd_variation, first_variation, gram_eigenvalues, random_admissible_pair

MET = make_warped_torus(2.0, 0.3)
FLAT = make_warped_torus(1.0, 0.0)
RES = Resolution(8)
EPS3 = (0.08, 0.04, 0.02)


def test_c01_constants_and_profiles(criterion):
    c = constants()
    e_s0 = abs(c.sigma0 - math.sqrt(2) / 3)
    e_s = abs(c.sigma - 1 / math.sqrt(2))
    z = np.linspace(-30, 30, 20001)
    v, d = heteroclinic(z)
    equi = float(np.max(np.abs(0.5 * d**2 - DoubleWell.W(v))))
    P = profile_set()
    res = max(max(P[k].residual, P[k].discrete_residual) for k in ("omega", "rho", "tau", "kappa"))
    ok = e_s0 <= 1e-12 and e_s <= 1e-12 and equi <= 1e-10 and res <= 1e-8 and SIGMA == c.sigma
    criterion(1, ok, f"sigma0 err={e_s0:.2e} sigma err={e_s:.2e} equipartition={equi:.2e} bvp residual={res:.2e}")


def test_c02_one_dimensional_balanced_energy(criterion):
    rep = balanced_energy(geodesic_circle(circle_1d(), 0.0), 0.02, RES)
    rel = abs(rep.B - 4 * SIGMA0) / (4 * SIGMA0)
    criterion(2, rel <= 1e-2 and abs(4 * SIGMA0 - 1.8856181) <= 1e-7, f"B={rep.B:.10f} rel err={rel:.2e}")


def _trace_ratios(metric, c):
    q = []
    for eps in EPS3:
        r = expansion_residual(geodesic_circle(metric, c, 1), eps, RES)
        q.append(abs(r.slope_plus) * eps * math.sqrt(2) - 1)
    return q, [q[i] / q[i + 1] for i in range(len(q) - 1)]


def test_c03_trace_expansion_flat_strip(criterion):
    # literal target: on the flat strip the quantity must halve with eps
    q, ratios = _trace_ratios(FLAT, 0.0)
    ok = all(1.4 <= r <= 2.6 for r in ratios)
    criterion(3, ok, f"flat strip q={[f'{x:.3e}' for x in q]} ratios={[f'{x:.3f}' for x in ratios]}")


def test_c03_trace_expansion_curved_companion(criterion):
    q, ratios = _trace_ratios(MET, math.pi / 2)
    ok = all(1.4 <= r <= 2.6 for r in ratios)
    criterion(3.1, ok, f"curved companion (x = pi/2) q={[f'{x:.3e}' for x in q]} "
                       f"ratios={[f'{x:.3f}' for x in ratios]}")


def test_c04_expansion_order(criterion):
    cfg = lab.build_config("expansion-order", {"eps": ",".join(map(str, EPS3)), "resolution": "8"})
    t = time.perf_counter()
    tab = lab.sweep(cfg, "expansion")
    dt = time.perf_counter() - t
    criterion(4, tab.slope >= 2.5 and dt <= 1800, f"slope={tab.slope:.3f} time={dt:.0f}s")


def test_c05_first_variation_oracle(criterion):
    rng = np.random.default_rng(20240501)
    worst = 0.0
    for _ in range(10):
        sigma, f = random_admissible_pair(MET, rng, ny=16)
        a = first_variation(sigma, f, 0.05, RES)
        b = fd_variation(sigma, f, 0.05, 1, res=RES)
        worst = max(worst, abs(a - b) / abs(b))
    criterion(5, worst <= 1e-3, f"10 random pairs, worst relative discrepancy={worst:.2e}")


def test_c06_second_variation_spectrum(criterion):
    eps = 0.05
    ev = gram_eigenvalues(geodesic_circle(MET, 0.0, 16), eps, 3, RES)
    target = 2 * SIGMA0 * np.array([-0.1304348, 0.0586006, 0.0586006])
    tol = max(0.3 * math.sqrt(eps), 0.05)
    rel = np.abs(ev - target) / np.abs(target)
    criterion(6, bool(np.all(rel <= tol)), f"eigenvalues={np.round(ev, 6).tolist()} rel err={np.round(rel, 4).tolist()} "
                                          f"tol={tol:.3f}")


def test_c07_jacobi_spectrum(criterion):
    errs, idx = [], []
    for c in (0.0, math.pi):
        sp = jacobi_spectrum(geodesic_circle(MET, c), 5)
        h = MET.h(c)
        exact = np.array([0, 1, 1, 4, 4]) / h**2 - MET.K(c)
        errs.append(float(np.max(np.abs(sp.values - exact))))
        idx.append((sp.index, sp.nullity))
    ok = max(errs) <= 1e-6 and idx[0] == (1, 0) and idx[1][0] == 0
    criterion(7, ok, f"max err={max(errs):.2e} (index, nullity) at 0: {idx[0]}, at pi: {idx[1]}")


def test_c08_mountain_pass(criterion):
    t = time.perf_counter()
    space, fam = index_one_testbed(0.05, m=33)
    res = mountain_pass(space, fam)
    B0 = space.energy(np.zeros(space.ny))
    rel = abs(res.d_eps - B0) / B0
    limit = 2 * SIGMA0 * curvature_data(geodesic_circle(MET, 0.0, 16)).area
    ds = []
    for eps in EPS3:
        sp, fm = index_one_testbed(eps, m=9)
        ds.append(mountain_pass(sp, fm, polish=False).d_eps)
    gaps = [abs(d - limit) for d in ds]
    dt = time.perf_counter() - t
    ok = (rel <= 1e-2 and res.saddle_residual <= 1e-10 and res.negative_count == 1 and res.hausdorff <= 0.05
          and res.grad_norm <= 1e-6 and gaps[0] > gaps[1] > gaps[2] and abs(limit - 13.625) <= 1e-3
          and dt <= 3600)
    criterion(8, ok, f"d={res.d_eps:.8f} B0={B0:.8f} rel={rel:.1e} residual={res.saddle_residual:.1e} "
                     f"negative={res.negative_count} hausdorff={res.hausdorff:.1e} "
                     f"sweep d={[round(d, 6) for d in ds]} -> {limit:.6f} time={dt:.0f}s")


def test_c09_strong_minmax_audit(criterion):
    space = GraphSpace(MET, 0.0, 0.05, 16, RES)
    rep = strong_minmax_audit(space, r=0.2, trials=20, seed=7)
    argmax_ok = abs(rep.canonical_argmax) <= 0.05 and abs(rep.canonical_sup - rep.B_sigma) <= 1e-8 * rep.B_sigma
    ok = rep.passed and len(rep.sups) == 20 and argmax_ok
    criterion(9, ok, f"min sup={min(rep.sups):.8f} >= {rep.B_sigma - rep.delta:.8f} over {len(rep.sups)} "
                     f"families, canonical argmax v={rep.canonical_argmax:.3f}")


def test_c10_deformation_and_gradient_floor(criterion):
    space = GraphSpace(MET, 0.0, 0.05, 16, RES)
    fl = [gradient_floor_probe(GraphSpace(MET, 0.0, e, 16, RES), 0.2, 0.1, samples=100).floor for e in (0.1, 0.05)]
    flat = gradient_floor_probe(GraphSpace(make_warped_torus(2.0, 0.0), 0.0, 0.05, 16, RES), 0.2, 0.1,
                                samples=100).floor
    rep = deformation_realization(space, 0.2, 0.1, starts=10, floor=fl[1])
    stable = abs(fl[0] - fl[1]) <= 0.1 * fl[1]
    ok = rep.passed and len(rep.reached) == 10 and min(fl) > 0 and stable and flat <= 1e-10
    criterion(10, ok, f"reached {sum(rep.reached)}/10 monotone={all(rep.monotone)} floor={fl[0]:.4f},{fl[1]:.4f} "
                      f"flat control floor={flat:.1e}")


def test_c11_determinism(criterion, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        lab.main(["variation-check", "--out", str(out), "--seed", "42", "--set", "trials=2", "--eps", "0.1"])
        outs.append({n: lab.sha256_file(os.path.join(out, n)) for n in sorted(os.listdir(out)) if n != "manifest.txt"})
    ok = outs[0] == outs[1] and len(outs[0]) >= 2
    criterion(11, ok, f"{len(outs[0])} ledger files byte-identical across two seeded runs")
