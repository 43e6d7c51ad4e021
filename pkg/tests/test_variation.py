import math

import numpy as np
import pytest

from aclab.energy import Resolution
from aclab.geometry import geodesic_circle, jacobi_spectrum, make_warped_torus, normal_graph
from aclab.profiles1d import SIGMA0
from aclab.variation import (
    StepTooLarge, arbitrate_first_variation_sign, fd_variation, first_variation, first_variation_asymptotic,
    gram_eigenvalues, random_admissible_pair, second_variation_asymptotic, second_variation_exact,
    variation_report,
)

MET = make_warped_torus(2.0, 0.3)
FLAT = make_warped_torus(2.0, 0.0)
RES = Resolution(8)
EPS = 0.05


def test_zero_direction_gives_zero():
    s = geodesic_circle(MET, 1.0, 8)
    z = np.zeros(8)
    assert first_variation(s, z, EPS, RES) == 0.0
    assert fd_variation(s, z, EPS, 1, res=RES) == 0.0
    assert second_variation_exact(s, z, EPS, RES) == 0.0


def test_symmetric_circles_are_critical():
    # B(Gamma(f)) = B(Gamma(-f)) by the x -> -x isometry around 0 and pi,
    # so every first variation vanishes there
    for c in (0.0, math.pi):
        s = geodesic_circle(MET, c, 8)
        y = s.y
        for f in (np.ones(8), np.cos(y), 1 + 0.5 * np.sin(2 * y)):
            assert abs(first_variation(s, f, EPS, RES)) <= 1e-8


def test_first_variation_sign_and_leading_order():
    arb = arbitrate_first_variation_sign(MET, EPS)
    assert arb.choice == "minus"
    s = geodesic_circle(MET, math.pi / 2, 8)
    val = first_variation(s, 1.0, EPS, RES)
    asym = first_variation_asymptotic(s, 1.0)
    assert asym == pytest.approx(-2 * SIGMA0 * 0.15 * 2 * math.pi * MET.h(math.pi / 2), rel=1e-12)
    # agreement up to the O(eps) correction
    assert abs(val - asym) <= 5 * EPS * abs(asym)
    assert np.sign(val) == np.sign(asym)


def test_odd_direction_on_circle_vanishes():
    s = geodesic_circle(MET, math.pi / 2, 16)
    assert abs(first_variation(s, np.sin(s.y), EPS, RES)) <= 1e-10


def test_first_variation_against_fd_on_random_pair():
    rng = np.random.default_rng(11)
    sigma, f = random_admissible_pair(MET, rng, ny=16)
    a = first_variation(sigma, f, EPS, RES)
    b = fd_variation(sigma, f, EPS, 1, res=RES)
    assert abs(a - b) <= 1e-3 * abs(b)


def test_fd_step_guard():
    s = geodesic_circle(MET, math.pi / 2, 8)
    with pytest.raises(StepTooLarge):
        fd_variation(s, 1.0, EPS, 2, step=0.5, res=RES, tol=1e-6)
    with pytest.raises(ValueError):
        fd_variation(s, 1.0, EPS, 3, res=RES)


@pytest.fixture(scope="module")
def sigma0_spec():
    s = geodesic_circle(MET, 0.0, 16)
    return s, jacobi_spectrum(s, 3)


def test_second_variation_exact_against_fd(sigma0_spec):
    s, sp = sigma0_spec
    u0 = sp.vectors[:, 0]
    a = second_variation_exact(s, u0, EPS, RES)
    b = fd_variation(s, u0, EPS, 2, res=RES)
    assert a < 0 and b < 0
    assert abs(a - b) <= 1e-2 * abs(b)


def test_stability_dichotomy(sigma0_spec):
    s, sp = sigma0_spec
    assert second_variation_exact(s, sp.vectors[:, 0], EPS, RES) < 0
    assert second_variation_exact(s, sp.vectors[:, 1], EPS, RES) > 0
    spi = geodesic_circle(MET, math.pi, 16)
    for f in (np.ones(16), np.cos(spi.y)):
        assert second_variation_exact(spi, f, EPS, RES) > 0


def test_gram_eigenvalues_near_jacobi_values(sigma0_spec):
    s, _ = sigma0_spec
    ev = gram_eigenvalues(s, EPS, 3, RES)
    target = 2 * SIGMA0 * np.array([-0.3 / 2.3, 1 / 2.3**2 - 0.3 / 2.3, 1 / 2.3**2 - 0.3 / 2.3])
    tol = np.maximum(0.3 * math.sqrt(EPS), 0.05) * np.abs(target)
    assert np.all(np.abs(ev - target) <= tol)
    assert ev[0] < 0 < ev[1]


def test_asymptotic_form_conventions(sigma0_spec):
    s, sp = sigma0_spec
    # flat circle: both conventions reduce to 2 sigma0 int |grad f|^2
    fl = geodesic_circle(FLAT, 0.0, 16)
    a = second_variation_asymptotic(fl, np.cos(fl.y))
    assert a.valueA == pytest.approx(a.valueB, rel=1e-12)
    assert a.valueA == pytest.approx(2 * SIGMA0 * math.pi / 2.0, rel=1e-10)
    # constant direction on Sigma_0: B = -2 sigma0 K |f|^2
    u0 = sp.vectors[:, 0]
    b = second_variation_asymptotic(s, u0)
    assert b.valueB == pytest.approx(2 * SIGMA0 * (-0.3 / 2.3), rel=1e-8)
    assert b.valueA == pytest.approx(-b.valueB, rel=1e-8)
    with pytest.raises(ValueError):
        second_variation_exact(normal_graph(s, 0.05 * np.cos(s.y)), 1.0, EPS, RES)


def test_report_record_and_discrepancies():
    s = geodesic_circle(MET, math.pi / 2, 8)
    rep = variation_report(s, 1.0, EPS, RES, second=False)
    d = rep.discrepancies
    assert set(d) == {"first_analytic_vs_fd", "first_asymptotic_vs_fd"}
    assert d["first_analytic_vs_fd"][1] <= 1e-3
    line = rep.record()
    assert "nu=+x_from_Mplus_to_Mminus" in line and "convention=none" in line
    assert f"first_fd={rep.first_fd:.17g}" in line
