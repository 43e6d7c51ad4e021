"""Allen-Cahn energy, broken transitions, balanced energy, traces and the
curvature expansion of one-sided solutions.

Trace conventions.  For each side the positive one-sided field P (u+ on M+,
-u- on M-) is differentiated along the normal pointing into that side:
``slope`` is that first derivative at the interface (about 1/(eps sqrt 2))
and ``curv`` the second normal derivative.  In terms of nu (pointing from
M+ into M-): du+/dnu = -slope_plus, du-/dnu = -slope_minus.
"""
from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass

import numpy as np

from . import elliptic as el
from .geometry import Hypersurface, curvature_data, spectral_derivative
from .profiles1d import SIGMA, SIGMA0, apply_cutoff, profile_set

DEFAULT_ELL = 6.0


@dataclass(frozen=True)
class Resolution:
    """Grid settings: nodes per eps in the band, band half-width and graded
    cells (both in units of the base spacing), refinement level."""

    nodes_per_eps: int = 8
    band: float = 20.0
    grade: int = 32
    level: int = 0

    def refined(self, k=1):
        return Resolution(self.nodes_per_eps, self.band, self.grade, self.level + k)


def allen_cahn_energy(u: el.PhaseField, region=None) -> float:
    """E_eps(u) = int eps |grad u|^2 / 2 + W(u)/eps with the lumped metric
    quadrature of the field's domain; ``region=(r0, r1)`` restricts to grid
    rows r0..r1 (inclusive) of the underlying grid."""
    dom = u.domain
    if region is None:
        return dom.energy(u.values, u.eps)
    r0, r1 = region
    r0, r1 = max(r0, dom.r0), min(r1, dom.r1)
    sub = el.DiscreteDomain(dom.grid, r0, r1, ("neumann", "neumann"), dom.phi)
    U = u.grid2d()[r0 - dom.r0:r1 - dom.r0 + 1]
    return sub.energy(U.ravel(), u.eps)


def _one_sided(vals, d):
    """Fourth-order one-sided first and second derivatives at vals[0]
    (samples at spacing d moving away from the boundary)."""
    v = vals
    d1 = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * d)
    d2 = (45 * v[0] - 154 * v[1] + 214 * v[2] - 156 * v[3] + 61 * v[4] - 10 * v[5]) / (12 * d * d)
    return d1, d2


@dataclass(eq=False)
class BrokenTransition:
    """u+ on M+, u- (negative) on M-, glued along Sigma, with traces."""

    sigma: Hypersurface
    eps: float
    u_plus: el.PhaseField
    u_minus: el.PhaseField
    slope_plus: np.ndarray
    slope_minus: np.ndarray
    curv_plus: np.ndarray
    curv_minus: np.ndarray
    grid: el.MappedGrid | None = None
    phi: np.ndarray | None = None
    left_is_plus: bool = True

    @property
    def un_plus(self):
        """du+/dnu along Sigma."""
        return -self.slope_plus

    @property
    def un_minus(self):
        """du-/dnu along Sigma."""
        return -self.slope_minus

    @property
    def energy(self):
        return self.u_plus.energy + self.u_minus.energy

    def glued(self) -> el.PhaseField:
        """The sign-changing field on the whole cylinder (or circle)."""
        if self.grid is None:
            raise ValueError("gluing of 1-D point pairs is not supported; use the arcs")
        full = el.full_domain(self.grid, self.phi)
        left, right = (self.u_plus, self.u_minus) if self.left_is_plus else (self.u_minus, self.u_plus)
        sgn_l = 1.0 if self.left_is_plus else -1.0
        L = sgn_l * np.abs(left.grid2d())
        R = -sgn_l * np.abs(right.grid2d())
        U = np.vstack([L[:-1], np.zeros((1, self.grid.ny)), R[1:]])
        vals = U.ravel()
        return el.PhaseField(self.eps, full, vals, energy=full.energy(vals, self.eps))

    def shape_gradient(self):
        """Exact derivative of the discrete balanced energy with respect to
        the graph samples f (d B_h / d f_k)."""
        if self.grid is None:
            raise ValueError("graph gradient needs a 2-D hypersurface")
        g = sum(el.shape_derivative(p.domain, np.abs(p.values), self.eps)
                for p in (self.u_plus, self.u_minus))
        return self.sigma.orientation * g


def _side_traces(field_, toward_wall_sign, phi, eps):
    """Inward slope and second normal derivative of the positive side field
    at the interface row."""
    dom = field_.domain
    g = dom.grid
    P = np.abs(field_.grid2d())
    j = g.j_if - dom.r0
    if toward_wall_sign < 0:
        rows = P[j::-1][:6]
    else:
        rows = P[j:j + 6]
    d = g.dxi
    Pxi, Pxixi = _one_sided(rows, d)  # derivatives along the inward xi direction
    # the interface row sits inside the plateau chi = 1 and the band Z' = 1,
    # so x = c + xi + phi(y) there (a = 1, q = phi')
    if abs(g.Zp[g.j_if] - 1.0) > 1e-12 or abs(g.chi[g.j_if] - 1.0) > 1e-12:
        raise ValueError("interface row outside the identity band")
    met = g.metric
    x = g.c + phi
    if met.dim == 2:
        h, hp = met.h(x), met.dh(x)
    else:
        h, hp = np.ones_like(x), np.zeros_like(x)
    p1 = spectral_derivative(phi, 1) if phi.size > 1 else np.zeros_like(phi)
    p2 = spectral_derivative(phi, 2) if phi.size > 1 else np.zeros_like(phi)
    N = np.sqrt(1.0 + p1 * p1 / (h * h))
    slope = N * Pxi
    # Hessian(nu, nu) in (x, y) coordinates; U_xi along +xi
    s = float(toward_wall_sign)
    Uxi = s * Pxi          # derivative in +xi direction
    Uxixi = Pxixi          # second derivative is direction independent
    Uxiy = spectral_derivative(Uxi, 1) if phi.size > 1 else np.zeros_like(phi)
    uy = -p1 * Uxi
    ux = Uxi
    uxx = Uxixi
    uxy = Uxiy - p1 * Uxixi
    uyy = -p2 * Uxi - 2 * p1 * Uxiy + p1 * p1 * Uxixi
    nx = 1.0 / N
    nyv = -p1 / (h * h * N)
    curv = nx * nx * uxx + 2 * nx * nyv * (uxy - hp / h * uy) + nyv * nyv * (uyy + h * hp * ux)
    return slope, curv


def _grid_for(sigma, eps, res, ny=None):
    ny = sigma.ny if ny is None else ny
    return el.chart_grid(sigma.metric, sigma.c, eps, res.nodes_per_eps, ny, res.band, res.grade, res.level)


def broken_transition(sigma: Hypersurface, eps, res: Resolution | None = None, warm=None,
                      check_threshold=True) -> BrokenTransition:
    """Solve both one-sided Dirichlet problems and glue them.

    ``warm`` may be a previous BrokenTransition on the same grid; its fields
    seed Newton.
    """
    res = res or Resolution()
    eps = float(eps)
    if sigma.metric.dim == 1:
        return _broken_transition_1d(sigma, eps, res)
    grid = _grid_for(sigma, eps, res)
    phi = sigma.orientation * np.asarray(sigma.f, dtype=float)
    left, right = el.graph_domains(grid, phi)
    uw_l = uw_r = None
    if warm is not None and warm.grid is grid:
        a, b = (warm.u_plus, warm.u_minus) if warm.left_is_plus else (warm.u_minus, warm.u_plus)
        uw_l, uw_r = np.abs(a.values), np.abs(b.values)
    ul = el.solve_dirichlet(left, eps, uw_l, check_threshold=check_threshold)
    ur = el.solve_dirichlet(right, eps, uw_r, check_threshold=check_threshold)
    sl, cl = _side_traces(ul, -1, phi, eps)
    sr, cr = _side_traces(ur, +1, phi, eps)
    left_is_plus = sigma.orientation > 0
    if left_is_plus:
        up, um = ul, ur
        sp_, sm_, cp_, cm_ = sl, sr, cl, cr
    else:
        up, um = ur, ul
        sp_, sm_, cp_, cm_ = sr, sl, cr, cl
    um = el.PhaseField(um.eps, um.domain, -um.values, um.residual, um.iterations, um.energy, -1.0)
    return BrokenTransition(sigma, eps, up, um, sp_, sm_, cp_, cm_, grid, phi, left_is_plus)


def _arc_field(metric, x0, length, eps, res):
    dom = el.discretize(metric, (x0, x0 + length), eps, resolution=res.nodes_per_eps * 2**res.level)
    return el.solve_dirichlet(dom, eps)


def _broken_transition_1d(sigma, eps, res):
    p1, p2 = sigma.points
    L1 = (p2 - p1) % (2 * np.pi)
    L2 = 2 * np.pi - L1
    up = _arc_field(sigma.metric, p1, L1, eps, res)
    um = _arc_field(sigma.metric, p2, L2, eps, res)
    sl = []
    cl = []
    for f in (up, um):
        v = f.values
        d = f.domain.grid.dxi
        a1, a2 = _one_sided(v[:6], d)
        b1, b2 = _one_sided(v[::-1][:6], d)
        sl.append(np.array([a1, b1]))
        cl.append(np.array([a2, b2]))
    um = el.PhaseField(um.eps, um.domain, -um.values, um.residual, um.iterations, um.energy, -1.0)
    # slopes at (p1, p2): M+ starts at p1 and ends at p2; M- starts at p2
    sp_ = sl[0]
    sm_ = sl[1][::-1]
    return BrokenTransition(sigma, eps, up, um, sp_, sm_, cl[0], cl[1][::-1])


@dataclass(frozen=True)
class EnergyReport:
    E_plus: float
    E_minus: float
    B: float
    area: float
    reference: float
    gap: float
    eps: float = float("nan")
    sigma_hash: str = ""


def sigma_hash(sigma: Hypersurface) -> str:
    return hashlib.sha256(repr(sigma.key()).encode()).hexdigest()[:16]


def balanced_energy(sigma: Hypersurface, eps, res: Resolution | None = None, bt=None) -> EnergyReport:
    """B = E(u+) + E(u-) with the comparison 2 sigma0 |Sigma|."""
    bt = bt or broken_transition(sigma, eps, res)
    A = curvature_data(sigma).area
    B = bt.u_plus.energy + bt.u_minus.energy
    ref = 2 * SIGMA0 * A
    return EnergyReport(bt.u_plus.energy, bt.u_minus.energy, B, A, ref, B - ref, float(eps), sigma_hash(sigma))


def append_energy_ledger(path, report: EnergyReport):
    """Append one CSV row (header written on first use)."""
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if new:
            w.writerow(["sigma_hash", "eps", "E_plus", "E_minus", "B", "area", "gap"])
        w.writerow([report.sigma_hash] + [f"{v:.17g}" for v in
                                          (report.eps, report.E_plus, report.E_minus, report.B,
                                           report.area, report.gap)])
    return path


# ---------------------------------------------------------------------------
# expansion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SideGeometry:
    """Constants entering the one-sided expansion on a circle."""

    H_in: float   # mean curvature w.r.t. the normal pointing into the side
    ric: float
    A2: float


def side_geometry(sigma: Hypersurface):
    """(M+ data, M- data) for a circle; H_in is the coefficient in
    Lap = d_zz - H_z d_z with z the distance into the side."""
    if not sigma.is_circle:
        raise ValueError("the expansion is assembled on geodesic circles only")
    cd = curvature_data(sigma)
    H = float(cd.H[0])  # w.r.t. nu, which points out of M+
    ric = float(cd.ric[0])
    return SideGeometry(-H, ric, H * H), SideGeometry(H, ric, H * H)


def expansion_profile(geo: SideGeometry, eps, ell=DEFAULT_ELL):
    """Callable z -> predicted positive side field at distance z (physical)."""
    P = profile_set()
    hb = apply_cutoff(P["heteroclinic"], eps, ell)
    om = apply_cutoff(P["omega"], eps, ell)
    rho = apply_cutoff(P["rho"], eps, ell)
    tau = apply_cutoff(P["tau"], eps, ell)
    kap = apply_cutoff(P["kappa"], eps, ell)
    H = geo.H_in

    def pred(dist, nu=0):
        z = np.asarray(dist, dtype=float) / eps
        s = eps ** -nu
        v = (hb(z, nu) + eps * H * om(z, nu)
             + eps**2 * ((geo.ric + geo.A2) * tau(z, nu) + H * H * (rho(z, nu) + 0.5 * kap(z, nu))))
        return s * v
    return pred


def expansion_predict(sigma: Hypersurface, eps, res: Resolution | None = None, ny=None, ell=DEFAULT_ELL):
    """Predicted glued field on the chart grid of a circle (values on the
    full cylinder, positive on M+)."""
    res = res or Resolution()
    gp, gm = side_geometry(sigma)
    grid = _grid_for(sigma, eps, res, ny)
    phi = np.full(grid.ny, sigma.orientation * float(np.asarray(sigma.f)[0]))
    full = el.full_domain(grid, phi)
    X = full.x()
    xg = sigma.c + phi[0]
    left_is_plus = sigma.orientation > 0
    gl, gr = (gp, gm) if left_is_plus else (gm, gp)
    sgn = 1.0 if left_is_plus else -1.0
    U = np.where(X < xg, sgn * expansion_profile(gl, eps, ell)(xg - X),
                 -sgn * expansion_profile(gr, eps, ell)(X - xg))
    return el.PhaseField(float(eps), full, U.ravel(), energy=full.energy(U.ravel(), eps))


@dataclass(frozen=True)
class WeightedNorms:
    """sup|f|, eps sup|Df|, eps^2 sup|D^2 f|; ``c2`` their sum; ``w12`` the
    squared eps-weighted Sobolev value eps||f||^2 + eps^3||grad f||^2."""

    c0: float
    c1: float
    c2_only: float
    c2: float
    w12: float
    eps: float


def weighted_norms(x, values, eps, weights=None):
    """Norms of a y-independent field sampled at increasing positions ``x``.

    Derivatives by second-order non-uniform differences; ``weights`` are
    quadrature weights for the Sobolev part (trapezoid by default).
    """
    x = np.asarray(x, dtype=float)
    f = np.asarray(values, dtype=float)
    d1 = np.gradient(f, x, edge_order=2)
    d2 = np.gradient(d1, x, edge_order=2)
    if weights is None:
        weights = np.gradient(x)
    c0 = float(np.max(np.abs(f)))
    c1 = float(eps * np.max(np.abs(d1)))
    c2o = float(eps**2 * np.max(np.abs(d2)))
    w12 = float(eps * np.sum(weights * f * f) + eps**3 * np.sum(weights * d1 * d1))
    return WeightedNorms(c0, c1, c2o, c0 + c1 + c2o, w12, float(eps))


def _solve_1d_reduced(sigma, eps, res):
    """Broken transition of a circle on the y-independent (ny = 1) grid."""
    s1 = Hypersurface(sigma.metric, sigma.c, np.asarray(sigma.f)[:1].copy(), sigma.orientation)
    return broken_transition(s1, eps, res, check_threshold=False)


@dataclass(frozen=True)
class ExpansionResidual:
    eps: float
    plus: WeightedNorms
    minus: WeightedNorms
    norms: WeightedNorms  # worst of the two sides, component-wise
    richardson: bool
    slope_plus: float
    slope_minus: float


def expansion_residual(sigma: Hypersurface, eps, res: Resolution | None = None, richardson=True,
                       ell=DEFAULT_ELL) -> ExpansionResidual:
    """Weighted norms of (solver - prediction) on the Fermi neighbourhood
    N(eta) of a circle, each side separately.

    With ``richardson`` the solver field is extrapolated from levels
    0, 1, 2 (sixth order in the spacing) on the level-0 nodes.
    """
    res = res or Resolution()
    if res.nodes_per_eps < el.MIN_NODES_PER_EPS:
        raise ValueError("order measurement unreliable below 8 nodes per eps")
    bts = [_solve_1d_reduced(sigma, eps, Resolution(res.nodes_per_eps, res.band, res.grade, res.level + k))
           for k in (range(3) if richardson else range(1))]
    gp, gm = side_geometry(sigma)
    eta = sigma.chart_height()
    out = {}
    slopes = {}
    for name, geo in (("plus", gp), ("minus", gm)):
        fields = [np.abs(getattr(bt, "u_" + name).values) for bt in bts]
        stride = [2**k for k in range(len(fields))]
        fields = [f[::s] for f, s in zip(fields, stride)]
        if richardson:
            a = (4 * fields[1] - fields[0]) / 3
            b = (4 * fields[2] - fields[1]) / 3
            U = (16 * b - a) / 15
            sl = [getattr(bt, "slope_" + name)[0] for bt in bts]
            s1 = (4 * sl[1] - sl[0]) / 3
            s2 = (4 * sl[2] - sl[1]) / 3
            slope = (16 * s2 - s1) / 15
        else:
            U = fields[0]
            slope = getattr(bts[0], "slope_" + name)[0]
        dom = getattr(bts[0], "u_" + name).domain
        X = dom.x()[:, 0]
        xg = bts[0].grid.c + bts[0].phi[0]
        dist = np.abs(X - xg)
        pred = expansion_profile(geo, eps, ell)(dist)
        sel = dist <= eta
        order = np.argsort(dist[sel])
        out[name] = weighted_norms(dist[sel][order], (U - pred)[sel][order], eps)
        slopes[name] = float(slope)
    p, m = out["plus"], out["minus"]
    worst = WeightedNorms(max(p.c0, m.c0), max(p.c1, m.c1), max(p.c2_only, m.c2_only), max(p.c2, m.c2),
                          max(p.w12, m.w12), float(eps))
    return ExpansionResidual(float(eps), p, m, worst, richardson, slopes["plus"], slopes["minus"])


def predicted_slope(H_in, eps):
    """Inward normal slope predicted by the expansion: sigma/eps - (2/3) H_in."""
    return SIGMA / eps - (2.0 / 3.0) * H_in


def predicted_curv(H_in, eps):
    """Inward second normal derivative: H_in/(eps sqrt 2) - (2/3) H_in^2."""
    return H_in * SIGMA / eps - (2.0 / 3.0) * H_in**2


def fit_order(eps_values, quantities):
    """Least-squares slope of log(quantity) against log(eps)."""
    e = np.log(np.asarray(eps_values, dtype=float))
    q = np.log(np.abs(np.asarray(quantities, dtype=float)))
    A = np.vstack([e, np.ones_like(e)]).T
    coef, *_ = np.linalg.lstsq(A, q, rcond=None)
    return float(coef[0])
