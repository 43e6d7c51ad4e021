"""First and second variations of the balanced energy along normal graphs.

Variations move a graph x = c + orientation * (f_Sigma + t f) rigidly in the
x-direction, which is a unit geodesic field of dx^2 + h^2 dy^2; the flow
therefore has zero acceleration and ``<X, nu> dH = f h dy`` exactly.

Two routes are kept independent:

* boundary integrals of the one-sided traces (``first_variation``,
  ``second_variation_exact``), extrapolated over two nested x-grids;
* central finite differences of the solved energy itself
  (``fd_variation``), extrapolated in the step and on the same grids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import elliptic as el
from .energy import BrokenTransition, Resolution, broken_transition
from .geometry import (Hypersurface, curvature_data, geodesic_circle, jacobi_spectrum, spectral_derivative,
                       spectral_interp)
from .profiles1d import SIGMA0

FD_STEP = 1e-3
FD_AGREEMENT = 1e-3


class StepTooLarge(ArithmeticError):
    """Step-halving estimates disagree beyond the allowed tolerance."""


def _as_direction(sigma: Hypersurface, f):
    f = np.asarray(f, dtype=float)
    if f.ndim == 0:
        return np.full(sigma.ny, float(f))
    if f.size != sigma.ny:
        f = spectral_interp(f, sigma.y)
    return f


def _perturbed(sigma: Hypersurface, f, t):
    return Hypersurface(sigma.metric, sigma.c, np.asarray(sigma.f, dtype=float) + t * f, sigma.orientation)


def _levels(res, levels):
    res = res or Resolution()
    return [Resolution(res.nodes_per_eps, res.band, res.grade, res.level + k) for k in range(levels)]


def _extrapolate(vals):
    """Second-order Richardson over consecutive refinements (1 or 2 values)."""
    if len(vals) == 1:
        return vals[0]
    return (4.0 * vals[1] - vals[0]) / 3.0


def _surface_weights(sigma: Hypersurface):
    """h(g(y)) dy: the factor with <X, nu> dH = f h dy."""
    met = sigma.metric
    if met.dim == 1:
        return np.ones(2)
    return met.h(sigma.graph) * (2 * np.pi / sigma.ny)


# ---------------------------------------------------------------------------
# first variation
# ---------------------------------------------------------------------------

def trace_density(bt: BrokenTransition):
    """-eps/2 ((du+/dnu)^2 - (du-/dnu)^2) on the graph samples."""
    return -0.5 * bt.eps * (bt.slope_plus**2 - bt.slope_minus**2)


def _first_variation_single(sigma, f, eps, res, bt=None):
    bt = bt if bt is not None else broken_transition(sigma, eps, res)
    if sigma.metric.dim == 1:
        # at the two points the outward displacement of M+ is (-f0, +f1)
        return float(np.sum(np.array([-1.0, 1.0]) * f[:2] * trace_density(bt)))
    return float(np.sum(f * _surface_weights(sigma) * trace_density(bt)))


def first_variation(sigma: Hypersurface, f, eps, res: Resolution | None = None, levels=2) -> float:
    """Boundary quadrature of the trace difference against ``f``.

    ``levels`` nested x-grids are combined by Richardson extrapolation
    (the traces carry a second-order grid error).  In 1-D ``f`` holds the
    displacements of the two points along the circle.
    """
    f = _as_direction(sigma, f) if sigma.metric.dim == 2 else np.broadcast_to(np.asarray(f, float), (2,))
    if not np.any(f):
        return 0.0
    vals = [_first_variation_single(sigma, f, eps, r) for r in _levels(res, levels)]
    return float(_extrapolate(vals))


def first_variation_asymptotic(sigma: Hypersurface, f) -> float:
    """Leading-order value -2 sigma0 int H f (with <X, nu> dH = f h dy)."""
    if sigma.metric.dim == 1:
        return 0.0
    f = _as_direction(sigma, f)
    H = curvature_data(sigma).H
    return float(-2 * SIGMA0 * np.sum(H * f * _surface_weights(sigma)))


# ---------------------------------------------------------------------------
# finite-difference oracle
# ---------------------------------------------------------------------------

class _EnergyCurve:
    """t -> B_h(graph + t f) on one grid level, with warm starts."""

    def __init__(self, sigma, f, eps, res):
        self.sigma, self.f, self.eps, self.res = sigma, f, eps, res
        self.base = broken_transition(sigma, eps, res)
        self.cache = {0.0: self.base.energy}

    def __call__(self, t):
        t = float(t)
        if t not in self.cache:
            bt = broken_transition(_perturbed(self.sigma, self.f, t), self.eps, self.res, warm=self.base)
            self.cache[t] = bt.energy
        return self.cache[t]


def _central(curve, h, order):
    if order == 1:
        return (curve(h) - curve(-h)) / (2 * h)
    return (curve(h) - 2 * curve(0.0) + curve(-h)) / (h * h)


def fd_variation(sigma: Hypersurface, f, eps, order=1, step=FD_STEP, res: Resolution | None = None,
                 levels=2, tol=FD_AGREEMENT) -> float:
    """Central difference of t -> B(graph + t f), Richardson-extrapolated in
    the step (h and h/2) and over ``levels`` nested grids.

    The step is ``step / sup|f|`` so the largest displacement equals
    ``step``.  Raises StepTooLarge when the two step sizes disagree by more
    than ``tol`` relative.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if sigma.metric.dim != 2:
        raise ValueError("the finite-difference oracle works on 2-D graphs")
    f = _as_direction(sigma, f)
    fmax = float(np.max(np.abs(f)))
    if fmax == 0.0:
        return 0.0
    h = step / fmax
    p = 2  # central differences
    per_level = []
    for r in _levels(res, levels):
        curve = _EnergyCurve(sigma, f, eps, r)
        d1 = _central(curve, h, order)
        d2 = _central(curve, h / 2, order)
        scale = max(abs(d2), 1e-12)
        noise = 1e-9 / h**order  # solver tolerance propagated through the stencil
        if abs(d2 - d1) > tol * scale + noise:
            raise StepTooLarge(f"step {h:.3g}: estimates {d1:.10g} and {d2:.10g} disagree")
        per_level.append((2**p * d2 - d1) / (2**p - 1))
    return float(_extrapolate(per_level))


# ---------------------------------------------------------------------------
# second variation
# ---------------------------------------------------------------------------

def _boundary_flux(lin: el.LinearizedField, u: el.PhaseField, speed):
    """Outward normal derivative of a linearized field on the Dirichlet
    row, read off the discrete reaction (J v)_k = eps int d_n v phi_k dH.

    Differencing the field itself loses the O(1) normal derivative under
    the O(1/eps^2) curvature of udot; the reaction is superconvergent.
    """
    dom = lin.domain
    J = el._jacobian(dom, u.eps, u.values)
    R = (J @ lin.values)[dom.mask]
    return R / (u.eps * speed * dom.grid.dy)


@dataclass(frozen=True)
class SecondVariationParts:
    """Contributions of one grid level (bilinear in the directions)."""

    linearized: float   # -eps int f (u+_nu udot+_nu - u-_nu udot-_nu)
    hessian: float      # -eps int f g (u+_nu u+_nunu - u-_nu u-_nunu), u_nunu = H u_nu
    curvature: float    # +eps/2 int H f g ((u+_nu)^2 - (u-_nu)^2)
    critical_form: float  # eps int f u_nu (udot+_nu - udot-_nu), mean u_nu

    @property
    def total(self):
        return self.linearized + self.hessian + self.curvature


def _dotu_normal(bt: BrokenTransition, g):
    """Normal derivatives (along nu) of the linearized fields with
    boundary data -g u_nu on each side."""
    speed = curvature_data(bt.sigma).speed
    out = {}
    for name, un in (("plus", bt.un_plus), ("minus", bt.un_minus)):
        fld = getattr(bt, "u_" + name)
        lin = el.solve_linearized(fld, -g * un)
        flux = _boundary_flux(lin, fld, speed)
        # the outward normal of M+ is nu, that of M- is -nu
        out[name] = flux if name == "plus" else -flux
    return out["plus"], out["minus"]


def _second_normal(bt: BrokenTransition, H):
    """u_nunu on each side from the equation on Sigma: u = 0 and W'(0) = 0
    force Lap u = u_nunu + div(nu) u_nu = 0 there; div(nu) = -H."""
    return H * bt.un_plus, H * bt.un_minus


def _second_parts(bt: BrokenTransition, f, g):
    sigma = bt.sigma
    eps = bt.eps
    w = _surface_weights(sigma)
    H = curvature_data(sigma).H
    upn, umn = bt.un_plus, bt.un_minus
    upnn, umnn = _second_normal(bt, H)
    dp, dm = _dotu_normal(bt, g)
    lin = -eps * np.sum(w * f * (upn * dp - umn * dm))
    hes = -eps * np.sum(w * f * g * (upn * upnn - umn * umnn))
    cur = 0.5 * eps * np.sum(w * H * f * g * (upn**2 - umn**2))
    crit = eps * np.sum(w * f * 0.5 * (upn + umn) * (dp - dm))
    return SecondVariationParts(float(lin), float(hes), float(cur), float(crit))


def _require_circle(sigma):
    if sigma.metric.dim != 2:
        raise ValueError("second variations are computed on the 2-D model")
    if not sigma.is_circle:
        raise ValueError("second_variation_exact needs a circle (X = f d/dx is then normal)")


def second_variation_parts(sigma: Hypersurface, f, eps, g=None, res: Resolution | None = None,
                           levels=2) -> SecondVariationParts:
    """Extrapolated parts of the bilinear second-variation form Q(f, g)."""
    _require_circle(sigma)
    f = _as_direction(sigma, f)
    g = f if g is None else _as_direction(sigma, g)
    parts = [_second_parts(broken_transition(sigma, eps, r), f, g) for r in _levels(res, levels)]
    return SecondVariationParts(*(float(_extrapolate([getattr(p, k) for p in parts]))
                                  for k in ("linearized", "hessian", "curvature", "critical_form")))


def second_variation_exact(sigma: Hypersurface, f, eps, res: Resolution | None = None, levels=2) -> float:
    """The three boundary terms (linearized-field, Hessian and curvature
    term) with udot from the linearized solves; zero for f = 0."""
    f = _as_direction(sigma, f)
    if not np.any(f):
        return 0.0
    return second_variation_parts(sigma, f, eps, res=res, levels=levels).total


def second_variation_matrix(sigma: Hypersurface, basis, eps, res: Resolution | None = None, levels=2):
    """Symmetrised matrix Q_ij of the exact form on ``basis`` (columns) and
    the mass matrix int u_i u_j h dy."""
    _require_circle(sigma)
    B = np.column_stack([_as_direction(sigma, basis[:, j]) for j in range(basis.shape[1])])
    n = B.shape[1]
    w = _surface_weights(sigma)
    Qs = []
    for r in _levels(res, levels):
        bt = broken_transition(sigma, eps, r)
        Q = np.empty((n, n))
        dots = [_dotu_normal(bt, B[:, j]) for j in range(n)]
        H = curvature_data(sigma).H
        upn, umn = bt.un_plus, bt.un_minus
        upnn, umnn = _second_normal(bt, H)
        pot = -eps * (upn * upnn - umn * umnn) + 0.5 * eps * H * (upn**2 - umn**2)
        for i in range(n):
            for j in range(n):
                dp, dm = dots[j]
                Q[i, j] = (-eps * np.sum(w * B[:, i] * (upn * dp - umn * dm))
                           + np.sum(w * pot * B[:, i] * B[:, j]))
        Qs.append(Q)
    Q = _extrapolate(Qs)
    M = B.T @ (w[:, None] * B)
    return 0.5 * (Q + Q.T), M


def gram_eigenvalues(sigma: Hypersurface, eps, k=3, res: Resolution | None = None, levels=2):
    """Eigenvalues of the exact form restricted to the first ``k`` Jacobi
    eigenfunctions (generalised by the mass matrix), ascending."""
    from scipy import linalg
    spec = jacobi_spectrum(sigma, m=k)
    Q, M = second_variation_matrix(sigma, spec.vectors[:, :k], eps, res, levels)
    return linalg.eigh(Q, M, eigvals_only=True)


# ---------------------------------------------------------------------------
# asymptotic form and sign arbitration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AsymptoticSecondVariation:
    valueA: float    # 2 sigma0 int |grad f|^2 + (Ric + |A|^2 - H^2) f^2
    valueB: float    # 2 sigma0 int |grad f|^2 - (Ric + |A|^2) f^2 + H^2 f^2
    convention: str  # "A" or "B" as selected by the oracle ("" if not arbitrated)


def _asymptotic_terms(sigma, f):
    cd = curvature_data(sigma)
    S = cd.speed
    dy = 2 * np.pi / sigma.ny
    met = sigma.metric
    # normal speed and tangential derivative along the graph
    h = met.h(sigma.graph)
    fn = f * h / S
    grad2 = (spectral_derivative(fn, 1) / S) ** 2
    dH = S * dy
    grad = float(np.sum(grad2 * dH))
    pot = float(np.sum((cd.ric + cd.A2) * fn**2 * dH))
    h2 = float(np.sum(cd.H**2 * fn**2 * dH))
    return grad, pot, h2


def second_variation_asymptotic(sigma: Hypersurface, f, arbitrate=False, eps=0.05):
    """Both sign conventions of the geometric second-variation form.

    With ``arbitrate`` the convention selected by the finite-difference
    oracle (see ``arbitrate_convention``) is attached.
    """
    if sigma.metric.dim != 2:
        raise ValueError("asymptotic form is defined on the 2-D model")
    f = _as_direction(sigma, f)
    grad, pot, h2 = _asymptotic_terms(sigma, f)
    a = 2 * SIGMA0 * (grad + pot - h2)
    b = 2 * SIGMA0 * (grad - pot + h2)
    conv = arbitrate_convention(sigma.metric, eps).choice if arbitrate else ""
    return AsymptoticSecondVariation(float(a), float(b), conv)


@dataclass(frozen=True)
class Arbitration:
    """Outcome of one sign decision settled by the finite-difference oracle."""

    question: str
    choice: str
    oracle: float
    candidates: tuple
    detail: str = ""

    def record(self):
        cands = " ".join(f"{k}={v:.17g}" for k, v in self.candidates)
        return f"question={self.question} choice={self.choice} oracle={self.oracle:.17g} {cands} {self.detail}".strip()


@lru_cache(maxsize=8)
def arbitrate_convention(metric, eps=0.05, ny=32) -> Arbitration:
    """Decide the curvature sign of the asymptotic second variation on the
    index-one circle x = 0 along its lowest eigenfunction (where the two
    conventions differ by 4 sigma0 Ric)."""
    sigma = geodesic_circle(metric, 0.0, ny)
    spec = jacobi_spectrum(sigma, m=1)
    u0 = _as_direction(sigma, spec.vectors[:, 0])
    fd = fd_variation(sigma, u0, eps, order=2)
    asym = second_variation_asymptotic(sigma, u0)
    choice = "A" if abs(fd - asym.valueA) < abs(fd - asym.valueB) else "B"
    return Arbitration("second-variation curvature sign", choice, fd,
                       (("A", asym.valueA), ("B", asym.valueB)), f"eps={eps:.17g}")


@lru_cache(maxsize=8)
def arbitrate_first_variation_sign(metric, eps=0.05, ny=16) -> Arbitration:
    """Decide between -eps/2 int f(...) and +eps/2 int f(...) on the
    non-minimal circle x = pi/2 with f = 1."""
    sigma = geodesic_circle(metric, np.pi / 2, ny)
    f = np.ones(ny)
    fd = fd_variation(sigma, f, eps, order=1)
    minus = first_variation(sigma, f, eps)
    choice = "minus" if abs(fd - minus) < abs(fd + minus) else "plus"
    return Arbitration("first-variation prefactor sign", choice, fd, (("minus", minus), ("plus", -minus)),
                       f"eps={eps:.17g}")


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _disc(a, b):
    d = abs(a - b)
    return d, d / (abs(b) + 1e-12)


@dataclass
class VariationReport:
    """All routes to the first and second variation along one direction."""

    eps: float
    f: np.ndarray
    first_analytic: float
    first_asymptotic: float
    first_fd: float
    second_exact: float = float("nan")
    second_asymA: float = float("nan")
    second_asymB: float = float("nan")
    second_fd: float = float("nan")
    convention: str = ""
    arbitration: list = field(default_factory=list)

    @property
    def discrepancies(self):
        """{name: (absolute, relative)}; relative to the second entry."""
        out = {
            "first_analytic_vs_fd": _disc(self.first_analytic, self.first_fd),
            "first_asymptotic_vs_fd": _disc(self.first_asymptotic, self.first_fd),
        }
        if math.isfinite(self.second_exact):
            out["second_exact_vs_fd"] = _disc(self.second_exact, self.second_fd)
            out["second_asymA_vs_fd"] = _disc(self.second_asymA, self.second_fd)
            out["second_asymB_vs_fd"] = _disc(self.second_asymB, self.second_fd)
        return out

    def record(self):
        """One ``key=value`` line with 17 significant digits."""
        items = [("eps", self.eps), ("n", int(self.f.size)), ("f_sup", float(np.max(np.abs(self.f)))),
                 ("first_analytic", self.first_analytic), ("first_asymptotic", self.first_asymptotic),
                 ("first_fd", self.first_fd), ("second_exact", self.second_exact),
                 ("second_asymA", self.second_asymA), ("second_asymB", self.second_asymB),
                 ("second_fd", self.second_fd)]
        for k, (a, r) in self.discrepancies.items():
            items += [(k + "_abs", a), (k + "_rel", r)]
        parts = [f"{k}={v:.17g}" if isinstance(v, float) else f"{k}={v}" for k, v in items]
        parts.append(f"convention={self.convention or 'none'}")
        parts.append("nu=+x_from_Mplus_to_Mminus")
        return " ".join(parts)


def variation_report(sigma: Hypersurface, f, eps, res: Resolution | None = None, second=None,
                     arbitrate=False) -> VariationReport:
    """Evaluate every available route; second variations only on circles
    (``second=None`` means: whenever Sigma is a circle)."""
    f = _as_direction(sigma, f)
    rep = VariationReport(float(eps), f.copy(), first_variation(sigma, f, eps, res),
                          first_variation_asymptotic(sigma, f), fd_variation(sigma, f, eps, 1, res=res))
    if second is None:
        second = sigma.is_circle
    if second:
        rep.second_exact = second_variation_exact(sigma, f, eps, res)
        asym = second_variation_asymptotic(sigma, f)
        rep.second_asymA, rep.second_asymB = asym.valueA, asym.valueB
        rep.second_fd = fd_variation(sigma, f, eps, 2, res=res)
        rep.convention = "A" if abs(rep.second_fd - asym.valueA) < abs(rep.second_fd - asym.valueB) else "B"
        rep.arbitration.append(Arbitration("second-variation curvature sign", rep.convention, rep.second_fd,
                                           (("A", asym.valueA), ("B", asym.valueB))).record())
    if arbitrate:
        rep.arbitration.append(arbitrate_first_variation_sign(sigma.metric, eps).record())
    return rep


def translation_defect(bt: BrokenTransition, g):
    """eps-weighted W^{1,2} size of udot - (-g d_x u) on each side,
    relative to eps sup|g|; udot is the linearized field with data -g u_nu."""
    out = []
    for name, un in (("plus", bt.un_plus), ("minus", bt.un_minus)):
        fld = getattr(bt, "u_" + name)
        dom = fld.domain
        lin = el.solve_linearized(fld, -g * un)
        U = fld.grid2d()
        X = dom.x()
        ux = np.gradient(U, X[:, 0], axis=0, edge_order=2)
        diff = lin.grid2d() - (-g[None, :] * ux)
        S, m = dom.operators()
        v = diff.ravel()
        eps = bt.eps
        w12 = eps * np.sum(m * v * v) + eps**3 * float(v @ (S @ v))
        out.append(math.sqrt(max(w12, 0.0)))
    return max(out)


def random_admissible_pair(metric, rng, ny=32, modes=2, amp=0.04, c_range=(0.5, 2.6)):
    """A random smooth graph over a non-minimal circle and a direction with
    mean one; both use Fourier modes up to ``modes``."""
    y = 2 * np.pi * np.arange(ny) / ny
    c = float(rng.uniform(*c_range)) * (1 if rng.random() < 0.5 else -1)
    g = np.zeros(ny)
    f = np.ones(ny)
    for k in range(1, modes + 1):
        a, b, p, q = rng.uniform(-1, 1, 4)
        g += amp / modes * (a * np.cos(k * y) + b * np.sin(k * y))
        f += 0.5 / modes * (p * np.cos(k * y) + q * np.sin(k * y))
    sigma = Hypersurface(metric, c, g, 1)
    return sigma, f
