"""One-dimensional building blocks: double well, heteroclinic, auxiliary
profiles and their cutoffs.

All profiles live in the stretched variable ``z`` (distance / eps).  The
auxiliary profiles solve

    f'' - W''(hbar) f = rhs,   f(0) = 0,   f -> 0 as z -> inf

with right-hand sides

    omega : hbar'
    rho   : omega'
    tau   : z hbar'
    kappa : hbar omega

and are extended oddly to negative ``z``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.interpolate import make_interp_spline
from scipy.linalg import solve_banded

SQRT2 = np.sqrt(2.0)

AUX_KINDS = ("omega", "rho", "tau", "kappa")
KINDS = ("heteroclinic",) + AUX_KINDS
_ALIASES = {"ω": "omega", "ρ": "rho", "τ": "tau", "κ": "kappa", "hbar": "heteroclinic"}


def _kind(kind):
    kind = _ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ValueError(f"unknown profile kind {kind!r}")
    return kind


class DoubleWell:
    """The quartic double well W(t) = (1 - t^2)^2 / 4 (no parameters)."""

    @staticmethod
    def W(t):
        t = np.asarray(t, dtype=float)
        return 0.25 * (1.0 - t * t) ** 2

    @staticmethod
    def dW(t):
        t = np.asarray(t, dtype=float)
        return t * t * t - t

    @staticmethod
    def d2W(t):
        t = np.asarray(t, dtype=float)
        return 3.0 * t * t - 1.0


def double_well(t):
    """Return ``(W, W', W'')`` at ``t``."""
    return DoubleWell.W(t), DoubleWell.dW(t), DoubleWell.d2W(t)


def heteroclinic(z):
    """Return ``(tanh(z/sqrt2), derivative)``."""
    z = np.asarray(z, dtype=float)
    v = np.tanh(z / SQRT2)
    return v, (1.0 - v * v) / SQRT2


def _heteroclinic_d2(z):
    v, d = heteroclinic(z)
    return -SQRT2 * v * d


@dataclass(frozen=True)
class Constants:
    """Energy constant ``sigma0`` and slope constant ``sigma``.

    ``sigma0_quadrature`` is the adaptive quadrature of int_0^inf (hbar')^2,
    ``plain_integral`` the quadrature of int_0^inf hbar' (which is 1).
    """

    sigma0: float
    sigma: float
    sigma0_quadrature: float
    plain_integral: float


@lru_cache(maxsize=None)
def constants() -> Constants:
    q, _ = integrate.quad(lambda z: heteroclinic(z)[1] ** 2, 0.0, np.inf,
                          epsabs=1e-14, epsrel=1e-13, limit=200)
    p, _ = integrate.quad(lambda z: heteroclinic(z)[1], 0.0, np.inf,
                          epsabs=1e-14, epsrel=1e-13, limit=200)
    return Constants(sigma0=SQRT2 / 3.0, sigma=1.0 / SQRT2,
                     sigma0_quadrature=q, plain_integral=p)


SIGMA0 = SQRT2 / 3.0
SIGMA = 1.0 / SQRT2


@dataclass(frozen=True, eq=False)
class ProfileTable:
    """Sampled profile on ``[0, z_max]`` with a quintic spline for evaluation.

    Evaluation extends oddly to ``z < 0``; beyond ``z_max`` auxiliary
    profiles are 0 and the heteroclinic uses its closed form.
    """

    kind: str
    z: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    z_max: float
    residual: float = 0.0          # sup of continuous ODE residual (midpoints)
    discrete_residual: float = 0.0  # sup of finite-difference system residual
    omega: "ProfileTable | None" = field(default=None, repr=False)
    _spl: object = field(default=None, repr=False)

    def __call__(self, z, nu=0):
        """Value (nu=0) or nu-th derivative (nu <= 3) at ``z``."""
        z = np.asarray(z, dtype=float)
        a = np.abs(z)
        sgn = np.where(z < 0, -1.0, 1.0)
        # odd extension: even-order derivatives odd, odd-order even
        par = sgn if nu % 2 == 0 else 1.0
        if self.kind == "heteroclinic":
            if nu == 0:
                out = heteroclinic(a)[0]
            elif nu == 1:
                out = heteroclinic(a)[1]
            elif nu == 2:
                out = _heteroclinic_d2(a)
            else:
                v, d = heteroclinic(a)
                out = -SQRT2 * (d * d + v * (-SQRT2 * v * d))
            return par * out
        inside = a <= self.z_max
        out = np.zeros_like(a)
        if np.any(inside):
            out[inside] = self._spl(a[inside], nu)
        return par * out

    def rhs(self, z):
        return _rhs(self.kind, np.asarray(z, dtype=float), self.omega)


def _rhs(kind, z, omega):
    hb, dh = heteroclinic(z)
    if kind == "omega":
        return dh
    if kind == "tau":
        return z * dh
    if kind == "rho":
        return omega(z, 1)
    if kind == "kappa":
        return hb * omega(z)
    raise ValueError(kind)


def _fd_solve(kind, z_max, n, omega):
    z = np.linspace(0.0, z_max, n + 1)
    dz = z[1] - z[0]
    zi = z[1:-1]
    ab = np.zeros((3, n - 1))
    ab[0, 1:] = 1.0 / dz**2
    ab[2, :-1] = 1.0 / dz**2
    ab[1] = -2.0 / dz**2 - DoubleWell.d2W(heteroclinic(zi)[0])
    b = _rhs(kind, zi, omega)
    try:
        v = solve_banded((1, 1), ab, b)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise np.linalg.LinAlgError("singular profile system; refine resolution") from exc
    if not np.all(np.isfinite(v)):
        raise np.linalg.LinAlgError("singular profile system; refine resolution")
    full = np.r_[0.0, v, 0.0]
    # residual of the discrete system
    lap = (full[2:] - 2 * full[1:-1] + full[:-2]) / dz**2
    res = np.max(np.abs(lap - DoubleWell.d2W(heteroclinic(zi)[0]) * v - b))
    return z, full, res


def solve_profile_bvp(kind, z_max=30.0, resolution=4096, omega: ProfileTable | None = None,
                      decay_tol=1e-6) -> ProfileTable:
    """Solve an auxiliary two-point problem on ``[0, z_max]``.

    Second-order differences at ``resolution``, ``2*resolution`` and
    ``4*resolution`` cells are combined by two Richardson levels, giving
    sixth-order nodal values on the coarse grid.

    Parameters
    ----------
    kind : {'omega', 'rho', 'tau', 'kappa'}
    z_max : float
        Truncation radius, at least 20.
    resolution : int
        Number of cells of the coarse grid.
    omega : ProfileTable, optional
        Required for 'rho' and 'kappa'.
    decay_tol : float
        Allowed |f(z_max/2)| relative to max|f|; larger values mean the
        truncation radius cuts into the profile.
    """
    kind = _kind(kind)
    if kind not in AUX_KINDS:
        raise ValueError("solve_profile_bvp handles the auxiliary kinds only")
    if z_max < 20:
        raise ValueError("z_max must be >= 20")
    if resolution < 16:
        raise np.linalg.LinAlgError("resolution too coarse")
    if kind in ("rho", "kappa") and omega is None:
        raise ValueError(f"{kind} requires the omega profile")
    n = int(resolution)
    z, a, ra = _fd_solve(kind, z_max, n, omega)
    _, b, rb = _fd_solve(kind, z_max, 2 * n, omega)
    _, c, rc = _fd_solve(kind, z_max, 4 * n, omega)
    b, c = b[::2], c[::4]
    ab = (4 * b - a) / 3
    bc = (4 * c - b) / 3
    vals = (16 * bc - ab) / 15
    spl = make_interp_spline(z, vals, k=5)
    derivs = spl(z, 1)
    # continuous residual at cell midpoints
    zm = 0.5 * (z[1:] + z[:-1])
    res = spl(zm, 2) - DoubleWell.d2W(heteroclinic(zm)[0]) * spl(zm) - _rhs(kind, zm, omega)
    # the spline's second derivative loses accuracy in the last cells; those
    # sit where every profile is below 1e-12
    resid = float(np.max(np.abs(res[3:-3])))
    half = np.searchsorted(z, 0.5 * z_max)
    if abs(vals[half]) > decay_tol * np.max(np.abs(vals)):
        raise ValueError(f"unresolved decay of {kind}: increase z_max")
    tab = ProfileTable(kind=kind, z=z, values=vals, derivs=derivs, z_max=float(z_max),
                       residual=resid, discrete_residual=float(max(ra, rb, rc)),
                       omega=omega, _spl=spl)
    return tab


def heteroclinic_table(z_max=30.0, resolution=4096) -> ProfileTable:
    z = np.linspace(0.0, z_max, resolution + 1)
    v, d = heteroclinic(z)
    return ProfileTable(kind="heteroclinic", z=z, values=v, derivs=d, z_max=float(z_max))


@lru_cache(maxsize=8)
def profile_set(z_max=30.0, resolution=4096):
    """All five tables, solved once and cached."""
    om = solve_profile_bvp("omega", z_max, resolution)
    return {
        "heteroclinic": heteroclinic_table(z_max, resolution),
        "omega": om,
        "rho": solve_profile_bvp("rho", z_max, resolution, omega=om),
        "tau": solve_profile_bvp("tau", z_max, resolution),
        "kappa": solve_profile_bvp("kappa", z_max, resolution, omega=om),
    }


def smoothstep(t):
    """Quintic smoothstep 6t^5 - 15t^4 + 10t^3 on [0, 1], clamped; with
    first and second derivatives."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    s = t**3 * (10 - 15 * t + 6 * t * t)
    ds = 30 * t * t * (1 - t) ** 2
    d2s = 60 * t * (1 - t) * (1 - 2 * t)
    return s, ds, d2s


@dataclass(frozen=True, eq=False)
class CutoffProfile:
    """``base`` blended to its tail value on ``z1 <= |z| <= z2`` where
    ``z1 = -ell log eps`` and ``z2 = 2 z1``."""

    base: ProfileTable
    eps: float
    ell: float
    tail: float
    defect: float = float("nan")

    @property
    def z1(self):
        return -self.ell * np.log(self.eps)

    @property
    def z2(self):
        return 2.0 * self.z1

    def chi(self, a):
        """Cutoff factor in |z| with derivatives (in |z|)."""
        w = self.z2 - self.z1
        s, ds, d2s = smoothstep((np.asarray(a, dtype=float) - self.z1) / w)
        return 1.0 - s, -ds / w, -d2s / w**2

    def __call__(self, z, nu=0):
        """Value or derivative (nu <= 2) of the blended profile in ``z``."""
        z = np.asarray(z, dtype=float)
        a = np.abs(z)
        sgn = np.where(z < 0, -1.0, 1.0)
        c0, c1, c2 = self.chi(a)
        # work on z >= 0, then extend oddly
        f0 = self.base(a, 0)
        T = self.tail
        if nu == 0:
            out = c0 * f0 + (1 - c0) * T
            return sgn * out
        f1 = self.base(a, 1)
        if nu == 1:
            return c1 * (f0 - T) + c0 * f1
        f2 = self.base(a, 2)
        if nu == 2:
            return sgn * (c2 * (f0 - T) + 2 * c1 * f1 + c0 * f2)
        raise ValueError("nu <= 2")


def apply_cutoff(profile: ProfileTable, eps, ell=6.0, npts=200001) -> CutoffProfile:
    """Blend ``profile`` to its tail value and measure the ODE defect.

    The defect is ``(d^2/dz^2 - W''(hbar)) f_bar - rhs`` for auxiliary
    profiles and ``hbar_bar'' - W'(hbar_bar)`` for the heteroclinic,
    measured on a uniform grid covering ``[0, z2 + 1]``.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1); the cutoff bands are empty otherwise")
    if ell <= 5:
        raise ValueError("ell must exceed 5")
    tail = 1.0 if profile.kind == "heteroclinic" else 0.0
    cp = CutoffProfile(base=profile, eps=float(eps), ell=float(ell), tail=tail)
    z = np.linspace(0.0, cp.z2 + 1.0, npts)
    if profile.kind == "heteroclinic":
        d = cp(z, 2) - DoubleWell.dW(cp(z, 0))
    else:
        f = cp(z, 0)
        d = cp(z, 2) - DoubleWell.d2W(heteroclinic(z)[0]) * f - profile.rhs(z) * (
            z <= profile.z_max)
        # beyond the table the right-hand sides are below 1e-16 as well
    mask = z >= 1e-9
    object.__setattr__(cp, "defect", float(np.max(np.abs(d[mask]))))
    return cp


def write_profile_csv(table, path, zs=None):
    """Two-column CSV ``z,value`` at 17 significant digits."""
    zs = table.z if zs is None else np.asarray(zs, dtype=float)
    vals = table(zs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z", "value"])
        for a, b in zip(zs, vals):
            w.writerow([f"{a:.17g}", f"{b:.17g}"])
    return path
