"""Mapped-grid discretization and solvers for eps^2 Lap u = W'(u).

Every domain lives on a uniform computational grid (xi, y) with the
physical position

    x(xi, y) = c + Z(xi) + phi(y) chi(Z(xi))

where Z is the identity in a band around xi = 0 and smoothly graded towards
the walls, phi is the graph offset and chi a plateau cutoff.  The
hypersurface x = c + phi(y) is therefore exactly the grid row xi = 0, and
the graph enters only through the metric coefficients

    a = dx/dxi,  q = dx/dy = phi' chi,  sqrt(det g) = a h,
    |grad u|^2 sqrt(g) = ((q^2 + h^2) u_xi^2 - 2 a q u_xi u_y + a^2 u_y^2) / (a h).

The discrete energy is

    E_h(u) = eps/2 u^T S u + 1/eps sum_i m_i W(u_i)

with xi-edge terms at y-nodes, y-edge terms at xi-nodes, the mixed term at
cell centres and lumped (trapezoid) masses.  Its gradient gives the
residual, its Hessian the Newton / linearized operator.  Because E_h is an
explicit function of the graph samples, the envelope theorem gives the exact
derivative of the minimal discrete energy with respect to the graph
(:func:`shape_derivative`).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import TWO_PI, WarpedMetric, spectral_derivative, spectral_interp, y_grid
from .profiles1d import DoubleWell, heteroclinic, smoothstep

RES_TOL = 1e-10
MIN_NODES_PER_EPS = 8


class SolverError(RuntimeError):
    """Numerical failure of a nonlinear or linear solve."""


class ThresholdError(ValueError):
    """eps above the solvability threshold lambda_1^{-1/2}."""


# ---------------------------------------------------------------------------
# coordinate map
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Side:
    """Map on one side: Z(s) for s = |xi| in [0, L]."""

    room: float      # physical distance from the base to the wall (D)
    L: float         # computational extent
    band: float      # identity band B (<= L)
    A: float         # cubic coefficient beyond the band
    scale: float     # linear scale used when there is no room for a band
    z1: float        # chi plateau end
    z2: float        # chi support end

    def Z(self, s):
        s = np.asarray(s, dtype=float)
        if self.scale != 1.0 or self.band >= self.L:
            return self.scale * s, np.full_like(s, self.scale)
        t = np.maximum(s - self.band, 0.0)
        return s + self.A * t**3, 1.0 + 3.0 * self.A * t**2

    def chi(self, z):
        """Plateau cutoff in |Z| with its derivative in |Z|."""
        z = np.asarray(z, dtype=float)
        if self.z2 <= self.z1:
            return np.zeros_like(z), np.zeros_like(z)
        w = self.z2 - self.z1
        s, ds, _ = smoothstep((z - self.z1) / w)
        return 1.0 - s, -ds / w


def _make_side(room, dxi0, band_cells, grade_cells, p1=0.15, p2=0.95):
    B = band_cells * dxi0
    z1, z2 = p1 * room, p2 * room
    if room <= 0:
        return _Side(room, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0), 0
    if B + 4 * dxi0 >= room:
        n = int(np.ceil(room / dxi0 - 1e-9))
        L = n * dxi0
        return _Side(room, L, L, 0.0, room / L, z1, z2), n
    q = min(grade_cells * dxi0, (room - B))
    nq = max(int(np.floor(q / dxi0 + 1e-9)), 1)
    q = nq * dxi0
    A = (room - B - q) / q**3
    return _Side(room, B + q, B, A, 1.0, z1, z2), band_cells + nq


@dataclass(frozen=True, eq=False)
class MappedGrid:
    """Uniform (xi, y) grid with the coordinate map of one chart.

    Rows are indexed j = 0..nrow-1; ``j_if`` is the row xi = 0 (the base
    hypersurface) for charts, ``None`` for plain strips.
    """

    metric: WarpedMetric
    c: float
    eps: float
    nodes_per_eps: int
    ny: int
    dxi: float
    xi: np.ndarray
    Z: np.ndarray
    Zp: np.ndarray
    chi: np.ndarray
    chip: np.ndarray
    Zh: np.ndarray       # at half rows
    Zph: np.ndarray
    chih: np.ndarray
    chiph: np.ndarray
    j_if: int | None
    level: int = 0
    kind: str = "chart"
    params: tuple = ()

    @property
    def nrow(self):
        return self.xi.size

    @property
    def dy(self):
        return TWO_PI / self.ny

    @property
    def wy(self):
        """Measure of one y-cell (1 for the 1-D model, which has no y)."""
        return self.dy if self.metric.dim == 2 else 1.0

    @property
    def y(self):
        return y_grid(self.ny)

    def x_of(self, phi=None):
        """Physical x at all nodes, shape (nrow, ny)."""
        phi = np.zeros(self.ny) if phi is None else np.asarray(phi, dtype=float)
        return self.c + self.Z[:, None] + phi[None, :] * self.chi[:, None]

    def key(self):
        return (self.metric.key(), self.c, self.eps, self.nodes_per_eps, self.ny, self.level,
                self.kind, self.params)

    def hash(self):
        return hashlib.sha256(repr(self.key()).encode()).hexdigest()[:16]


def _assemble_map(xi, sides, signs):
    Z = np.empty_like(xi)
    Zp = np.empty_like(xi)
    ch = np.empty_like(xi)
    chp = np.empty_like(xi)
    for side, sgn in zip(sides, signs):
        sel = (xi * sgn >= 0)
        s = np.abs(xi[sel])
        z, zp = side.Z(s)
        c0, c1 = side.chi(z)
        Z[sel] = sgn * z
        Zp[sel] = zp
        ch[sel] = c0
        chp[sel] = sgn * c1  # d chi / dZ with Z signed
    return Z, Zp, ch, chp


@lru_cache(maxsize=64)
def _chart_grid_cached(metric, c, eps, npe, ny, band, grade, level):
    lo, hi = metric.x_walls
    dxi0 = eps / npe
    sL, nL = _make_side(c - lo, dxi0, int(round(band * npe)), grade)
    sR, nR = _make_side(hi - c, dxi0, int(round(band * npe)), grade)
    r = 2**level
    xi = np.arange(-nL * r, nR * r + 1) * (dxi0 / r)
    Z, Zp, ch, chp = _assemble_map(xi, (sL, sR), (-1.0, 1.0))
    xh = 0.5 * (xi[1:] + xi[:-1])
    Zh, Zph, chh, chph = _assemble_map(xh, (sL, sR), (-1.0, 1.0))
    return MappedGrid(metric, float(c), float(eps), int(npe), int(ny), dxi0 / r, xi, Z, Zp, ch, chp,
                      Zh, Zph, chh, chph, j_if=nL * r, level=level, kind="chart",
                      params=(band, grade, sL, sR))


def chart_grid(metric, c, eps, nodes_per_eps=8, ny=32, band=20.0, grade=32, level=0) -> MappedGrid:
    """Grid for graphs over the circle {x = c} in the walled cylinder.

    ``band`` is the half-width (in units of eps) of the uniform region,
    ``grade`` the number of base-level cells in each graded region, and
    ``level`` the number of uniform refinements (nodes of level 0 are every
    2**level-th node of level ``level``).
    """
    if nodes_per_eps < MIN_NODES_PER_EPS:
        raise ValueError(f"under-resolved eps: {nodes_per_eps} < {MIN_NODES_PER_EPS} nodes per eps")
    lo, hi = metric.x_walls
    if not lo < c < hi:
        raise ValueError("base circle outside the cylinder")
    return _chart_grid_cached(metric, float(c), float(eps), int(nodes_per_eps), int(ny), float(band),
                              int(grade), int(level))


def strip_grid(metric, x0, x1, eps, nodes_per_eps=8, ny=1, level=0) -> MappedGrid:
    """Uniform grid on x0 <= x <= x1 (y-independent unless ny > 1)."""
    if nodes_per_eps < MIN_NODES_PER_EPS:
        raise ValueError(f"under-resolved eps: {nodes_per_eps} < {MIN_NODES_PER_EPS} nodes per eps")
    L = float(x1 - x0)
    n = int(np.ceil(L * nodes_per_eps / eps - 1e-9)) * 2**level
    return strip_grid_n(metric, x0, x1, n, eps, ny, nodes_per_eps, level)


def strip_grid_n(metric, x0, x1, n, eps, ny=1, npe=None, level=0) -> MappedGrid:
    """Uniform strip grid with ``n`` cells."""
    L = float(x1 - x0)
    dxi = L / n
    if npe is None:
        npe = int(np.floor(eps / dxi + 1e-9))
        if npe < MIN_NODES_PER_EPS:
            raise ValueError(f"under-resolved eps: {eps / dxi:.3g} < {MIN_NODES_PER_EPS} nodes per eps")
    xi = np.arange(n + 1) * dxi
    xh = 0.5 * (xi[1:] + xi[:-1])
    one = np.ones_like(xi)
    zero = np.zeros_like(xi)
    return MappedGrid(metric, float(x0), float(eps), int(npe), int(ny), dxi, xi, xi.copy(), one, zero, zero.copy(),
                      xh, np.ones_like(xh), np.zeros_like(xh), np.zeros_like(xh), j_if=None, level=level,
                      kind="strip", params=(float(x1), int(n)))


# ---------------------------------------------------------------------------
# domains and operators
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _y_ops(ny):
    """Half-point interpolation and derivative matrices for periodic samples."""
    if ny == 1:
        one = np.ones((1, 1))
        zero = np.zeros((1, 1))
        return one, zero, zero
    eye = np.eye(ny)
    yh = y_grid(ny) + np.pi / ny
    P = np.column_stack([spectral_interp(eye[:, j], yh) for j in range(ny)])
    D = np.column_stack([spectral_derivative(eye[:, j]) for j in range(ny)])
    # derivative at half points: interpolate the (Nyquist-free) derivative
    Dh = P @ D
    return P, D, Dh


@dataclass(eq=False)
class DiscreteDomain:
    """Rows ``r0..r1`` of a mapped grid with boundary conditions.

    ``bc`` gives the condition at (r0, r1): 'dirichlet' or 'neumann'.
    ``phi`` is the graph offset on the y-grid (physical x minus c on the
    interface row).  Nodes are ordered row-major, y fastest.
    """

    grid: MappedGrid
    r0: int
    r1: int
    bc: tuple
    phi: np.ndarray
    _ops: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float).copy()
        if self.phi.size != self.grid.ny:
            raise ValueError("graph samples must match the y-grid")
        g = self.grid
        # admissibility: a > 0 everywhere
        for Zp, chp in ((g.Zp, g.chip), (g.Zph, g.chiph)):
            a = Zp[:, None] * (1.0 + self.phi[None, :] * chp[:, None])
            if np.min(a) <= 0.25 * np.min(Zp):
                raise ValueError("graph exits the chart (coordinate map degenerates)")

    @property
    def nrow(self):
        return self.r1 - self.r0 + 1

    @property
    def ny(self):
        return self.grid.ny

    @property
    def size(self):
        return self.nrow * self.ny

    @property
    def dirichlet_rows(self):
        rows = []
        if self.bc[0] == "dirichlet":
            rows.append(self.r0)
        if self.bc[1] == "dirichlet" and self.r1 != self.r0:
            rows.append(self.r1)
        return rows

    @property
    def mask(self):
        """Boolean array over nodes, True on Dirichlet rows."""
        m = np.zeros((self.nrow, self.ny), dtype=bool)
        for r in self.dirichlet_rows:
            m[r - self.r0, :] = True
        return m.ravel()

    @property
    def free(self):
        return ~self.mask

    def x(self):
        """Physical x of the domain nodes, shape (nrow, ny)."""
        return self.grid.x_of(self.phi)[self.r0:self.r1 + 1]

    def hash(self):
        h = hashlib.sha256()
        h.update(repr((self.grid.key(), self.r0, self.r1, self.bc)).encode())
        h.update(np.ascontiguousarray(self.phi).tobytes())
        return h.hexdigest()[:16]

    # -- geometry at quadrature points --------------------------------------
    def _coef(self, Zv, Zpv, chv, chpv, fv, fpv, derivs=False):
        """Metric data on the tensor grid (rows of Zv) x (samples fv)."""
        met = self.grid.metric
        Zv, Zpv, chv, chpv = (np.asarray(t)[:, None] for t in (Zv, Zpv, chv, chpv))
        fv, fpv = fv[None, :], fpv[None, :]
        a = Zpv * (1.0 + fv * chpv)
        x = self.grid.c + Zv + fv * chv
        h = met.h(x) if met.dim == 2 else np.ones_like(x)
        q = fpv * chv
        out = dict(a=a, h=h, q=q)
        if derivs:
            hp = met.dh(x) if met.dim == 2 else np.zeros_like(x)
            out.update(a_f=np.broadcast_to(Zpv * chpv, a.shape), h_f=hp * chv,
                       q_fp=np.broadcast_to(chv, a.shape))
        return out

    def _quad_data(self, derivs=False):
        g = self.grid
        P, D, Dh = _y_ops(g.ny)
        f = self.phi
        fn, fpn = f, D @ f
        fh, fph = P @ f, Dh @ f
        r0, r1 = self.r0, self.r1
        rows = slice(r0, r1 + 1)
        hrows = slice(r0, r1)
        wxi = np.full(self.nrow, g.dxi)
        if self.nrow > 1:
            wxi[0] *= 0.5
            wxi[-1] *= 0.5
        d = dict(
            xe=self._coef(g.Zh[hrows], g.Zph[hrows], g.chih[hrows], g.chiph[hrows], fn, fpn, derivs),
            ye=self._coef(g.Z[rows], g.Zp[rows], g.chi[rows], g.chip[rows], fh, fph, derivs),
            ce=self._coef(g.Zh[hrows], g.Zph[hrows], g.chih[hrows], g.chiph[hrows], fh, fph, derivs),
            nd=self._coef(g.Z[rows], g.Zp[rows], g.chi[rows], g.chip[rows], fn, fpn, derivs),
            wxi=wxi,
        )
        return d

    # -- operators ----------------------------------------------------------
    def operators(self):
        """(S, m): stiffness matrix (csr, all nodes) and lumped masses."""
        if "S" in self._ops:
            return self._ops["S"], self._ops["m"]
        g = self.grid
        ny, nr = g.ny, self.nrow
        dxi, dy = g.dxi, g.dy
        d = self._quad_data()
        idx = np.arange(nr * ny).reshape(nr, ny)
        rows, cols, vals = [], [], []

        def add_pair(i, j, w):
            # w (u_i - u_j)^2 contributes to S
            i, j, w = i.ravel(), j.ravel(), w.ravel()
            rows.extend([i, j, i, j])
            cols.extend([i, j, j, i])
            vals.extend([w, w, -w, -w])

        xe = d["xe"]
        if nr > 1:
            Cxx = (xe["q"] ** 2 + xe["h"] ** 2) / (xe["a"] * xe["h"])
            add_pair(idx[:-1], idx[1:], Cxx * g.wy / dxi)
        if ny > 1:
            ye = d["ye"]
            Cyy = ye["a"] / ye["h"]
            add_pair(idx, np.roll(idx, -1, axis=1), Cyy * d["wxi"][:, None] / dy)
            if nr > 1:
                ce = d["ce"]
                Cxy = -ce["q"] / ce["h"]
                if np.any(Cxy != 0):
                    # cell gradients: gx = (u10 - u00 + u11 - u01)/(2 dxi),
                    # gy = (u01 - u00 + u11 - u10)/(2 dy); energy eps * Cxy gx gy dxi dy
                    n00 = idx[:-1]
                    n10 = idx[1:]
                    n01 = np.roll(idx, -1, axis=1)[:-1]
                    n11 = np.roll(idx, -1, axis=1)[1:]
                    cyv = [(n00, -1), (n01, 1), (n10, -1), (n11, 1)]
                    cxv = [(n00, -1), (n10, 1), (n01, -1), (n11, 1)]
                    w = Cxy * 0.25  # (1/(2dxi))(1/(2dy)) dxi dy
                    for (ni, si) in cxv:
                        for (nj, sj) in cyv:
                            # symmetric form: S_ij += w si sj and S_ji += w si sj
                            rows.extend([ni.ravel(), nj.ravel()])
                            cols.extend([nj.ravel(), ni.ravel()])
                            vals.extend([(w * si * sj).ravel(), (w * si * sj).ravel()])
        nd = d["nd"]
        m = (nd["a"] * nd["h"] * d["wxi"][:, None] * g.wy).ravel()
        if rows:
            S = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(nr * ny, nr * ny)).tocsr()
        else:
            S = sp.csr_matrix((nr * ny, nr * ny))
        S.sum_duplicates()
        self._ops["S"] = S
        self._ops["m"] = m
        return S, m

    def energy(self, u, eps=None):
        eps = self.grid.eps if eps is None else eps
        S, m = self.operators()
        u = np.asarray(u, dtype=float).ravel()
        return float(0.5 * eps * u @ (S @ u) + np.sum(m * DoubleWell.W(u)) / eps)

    def residual(self, u, eps=None):
        """Pointwise residual eps^2 (S u)/m + W'(u) (approx. -eps^2 Lap u + W'(u))."""
        eps = self.grid.eps if eps is None else eps
        S, m = self.operators()
        return eps * eps * (S @ u) / m + DoubleWell.dW(u)

    def laplacian(self, u):
        """Discrete Laplace-Beltrami -(S u)/m at all nodes."""
        S, m = self.operators()
        return -(S @ np.asarray(u, dtype=float).ravel()) / m


def graph_domains(grid: MappedGrid, phi):
    """(left, right) domains split at the interface row: left = rows with
    x < graph, right = rows with x > graph; walls are reflecting."""
    j = grid.j_if
    left = DiscreteDomain(grid, 0, j, ("neumann", "dirichlet"), phi)
    right = DiscreteDomain(grid, j, grid.nrow - 1, ("dirichlet", "neumann"), phi)
    return left, right


def full_domain(grid: MappedGrid, phi=None):
    phi = np.zeros(grid.ny) if phi is None else phi
    return DiscreteDomain(grid, 0, grid.nrow - 1, ("neumann", "neumann"), phi)


def discretize(metric, omega, eps, resolution=8, ny=1, bc=("dirichlet", "dirichlet")):
    """Build a strip domain ``omega = (x0, x1)``.

    ``resolution`` is nodes per eps (int) or, if a tuple ``(n, ny)``, the
    number of cells in x and the y-resolution.
    """
    x0, x1 = omega
    if isinstance(resolution, tuple):
        n, ny = resolution
        grid = strip_grid_n(metric, x0, x1, int(n), eps, int(ny))
    else:
        grid = strip_grid(metric, x0, x1, eps, int(resolution), ny)
    return DiscreteDomain(grid, 0, grid.nrow - 1, tuple(bc), np.zeros(grid.ny))


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PhaseField:
    """Nodal values on a domain (row-major, y fastest)."""

    eps: float
    domain: DiscreteDomain
    values: np.ndarray
    residual: float = float("nan")
    iterations: int = 0
    energy: float = float("nan")
    sign: float = 1.0

    def grid2d(self):
        return self.values.reshape(self.domain.nrow, self.domain.ny)


@dataclass(eq=False)
class LinearizedField:
    eps: float
    domain: DiscreteDomain
    values: np.ndarray
    boundary: np.ndarray
    residual: float = float("nan")

    def grid2d(self):
        return self.values.reshape(self.domain.nrow, self.domain.ny)


def _factor(A):
    try:
        return spla.splu(A.tocsc(), permc_spec="COLAMD")
    except RuntimeError as exc:
        raise np.linalg.LinAlgError(f"singular operator: {exc}") from exc


def principal_eigenvalue(dom: DiscreteDomain, tol=1e-13, maxit=2000):
    """Smallest Dirichlet eigenvalue of -Lap_g by inverse power iteration.

    Returns ``(lambda_1, eps_star)`` with ``eps_star = lambda_1**-0.5``.
    """
    free = dom.free
    if free.all():
        raise ValueError("principal_eigenvalue needs a nonempty Dirichlet mask")
    S, m = dom.operators()
    Sff = S[free][:, free]
    mf = m[free]
    lu = _factor(Sff)
    v = np.ones(mf.size)
    lam = np.inf
    for it in range(maxit):
        w = lu.solve(mf * v)
        w /= np.sqrt(np.sum(mf * w * w))
        new = float(w @ (Sff @ w))
        v = w
        if abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam = new
    else:
        raise SolverError("inverse power iteration stagnated")
    return lam, lam ** -0.5


def initial_guess(dom: DiscreteDomain, eps):
    """hbar(dist / eps) with dist the coordinate distance to the Dirichlet rows."""
    g = dom.grid
    Z = g.Z[dom.r0:dom.r1 + 1]
    dist = np.full(Z.shape, np.inf)
    if dom.bc[0] == "dirichlet":
        dist = np.minimum(dist, np.abs(Z - Z[0]))
    if dom.bc[1] == "dirichlet":
        dist = np.minimum(dist, np.abs(Z[-1] - Z))
    u = heteroclinic(dist / eps)[0]
    u = np.where(np.isfinite(dist), u, 1.0)
    return np.repeat(u, g.ny)


def _newton(dom, eps, u, tol, maxit, fixed=None, positive=False):
    """Damped Newton on the free nodes with residual line search."""
    S, m = dom.operators()
    free = dom.free if fixed is None else ~fixed
    Sff = S[free][:, free]
    Sfull_f = S[free]
    mf = m[free]
    u = u.copy()

    def res(v):
        return eps * eps * (Sfull_f @ v) / mf + DoubleWell.dW(v[free])

    r = res(u)
    rn = np.max(np.abs(r))
    it = 0
    stalls = 0
    while rn > tol:
        if it >= maxit:
            raise SolverError(f"Newton did not converge (residual {rn:.3e} after {it} steps)")
        J = eps * Sff + sp.diags(mf * DoubleWell.d2W(u[free]) / eps)
        try:
            du = _factor(J).solve(-(r * mf / eps))
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular Newton matrix") from exc
        alpha = 1.0
        while True:
            trial = u.copy()
            trial[free] += alpha * du
            rt = res(trial)
            rtn = np.max(np.abs(rt))
            if np.isfinite(rtn) and (rtn < (1 - 1e-4 * alpha) * rn or rtn <= tol):
                break
            alpha *= 0.5
            if alpha < 1.0 / 64:
                trial = None
                break
        it += 1
        if trial is None:
            if not positive or stalls > 2:
                raise SolverError(f"Newton line search stalled at residual {rn:.3e}")
            stalls += 1
            u = _monotone_sweeps(dom, eps, u, free)
            r = res(u)
            rn = np.max(np.abs(r))
            continue
        u, r, rn = trial, rt, rtn
    return u, rn, it


def _monotone_sweeps(dom, eps, u, free, sweeps=30, kappa=2.0):
    """Sub/supersolution iteration (eps S + kappa m/eps) u_new = kappa m u/eps - m W'(u)/eps,
    started from the larger of u and the hbar guess; monotone for kappa >= max W''."""
    S, m = dom.operators()
    Sff = S[free][:, free]
    mf = m[free]
    lu = _factor(eps * Sff + sp.diags(kappa * mf / eps))
    v = np.minimum(np.maximum(u, initial_guess(dom, eps)), 1.0)
    for _ in range(sweeps):
        rhs = mf * (kappa * v[free] - DoubleWell.dW(v[free])) / eps - eps * (S[free] @ np.where(free, 0.0, v))
        v[free] = lu.solve(rhs)
    return v


def solve_dirichlet(dom: DiscreteDomain, eps=None, u0=None, tol=RES_TOL, maxit=60,
                    check_threshold=True) -> PhaseField:
    """Positive solution of eps^2 Lap u = W'(u) with u = 0 on the mask.

    Damped Newton from ``u0`` (default hbar(dist/eps)); verifies 0 < u <= 1
    inside and that the energy did not increase over the initial guess.
    """
    eps = dom.grid.eps if eps is None else float(eps)
    if check_threshold:
        lam, eps_star = principal_eigenvalue(dom)
        if eps >= eps_star:
            raise ThresholdError(f"eps={eps} >= lambda_1^(-1/2)={eps_star:.6g}: only u = 0 exists")
    guess = initial_guess(dom, eps)
    u = guess.copy() if u0 is None else np.asarray(u0, dtype=float).ravel().copy()
    mask = dom.mask
    u[mask] = 0.0
    u, rn, it = _newton(dom, eps, u, tol, maxit, positive=True)
    inner = u[~mask]
    if np.min(inner) <= 0.0:
        raise SolverError("Dirichlet solution not positive (wrong basin)")
    # the discrete maximum principle fails when the y-grid under-resolves a
    # steep graph; the overshoot is the symptom
    if np.max(inner) > 1.0 + 1e-12:
        raise SolverError(f"Dirichlet solution exceeds 1 (max {np.max(inner):.17g}); "
                          "the y-grid may be too coarse for the graph slope")
    E = dom.energy(u, eps)
    g0 = guess.copy()
    g0[mask] = 0.0
    if E > dom.energy(g0, eps) + 1e-12 * max(1.0, abs(E)):
        raise SolverError("solution energy above the initial guess")
    return PhaseField(eps, dom, u, rn, it, E)


def _jacobian(dom, eps, u):
    S, m = dom.operators()
    return (eps * S + sp.diags(m * DoubleWell.d2W(u) / eps)).tocsr()


def solve_linearized(u: PhaseField, g, tol=RES_TOL) -> LinearizedField:
    """Solve the linearization eps^2 Lap v = W''(u) v with v = g on the mask.

    ``g`` holds the values on the Dirichlet rows (shape (n_rows, ny) or
    flat) or the full nodal vector.
    """
    dom, eps = u.domain, u.eps
    mask = dom.mask
    g = np.asarray(g, dtype=float).ravel()
    v = np.zeros(dom.size)
    if g.size == dom.size:
        v[mask] = g[mask]
    elif g.size == mask.sum():
        v[mask] = g
    else:
        raise ValueError("boundary data does not match the mask")
    J = _jacobian(dom, eps, u.values)
    free = ~mask
    rhs = -(J[free][:, mask] @ v[mask])
    try:
        lu = _factor(J[free][:, free])
        v[free] = lu.solve(rhs)
    except (np.linalg.LinAlgError, RuntimeError) as exc:
        raise np.linalg.LinAlgError("singular linearized operator (Dirichlet eigenvalue crossing)") from exc
    if not np.all(np.isfinite(v)):
        raise np.linalg.LinAlgError("singular linearized operator (Dirichlet eigenvalue crossing)")
    S, m = dom.operators()
    r = (eps * (J @ v) / m)[free]
    scale = max(1.0, float(np.max(np.abs(v))))
    rn = float(np.max(np.abs(r))) if r.size else 0.0
    if rn > tol * scale * 10:
        # one step of iterative refinement
        v[free] += lu.solve(-(J @ v)[free])
        r = (eps * (J @ v) / m)[free]
        rn = float(np.max(np.abs(r)))
    return LinearizedField(eps, dom, v, v[mask].copy(), rn / scale)


def newton_polish(metric, initial: PhaseField, tol=RES_TOL, maxit=60) -> PhaseField:
    """Full-manifold Newton solve (reflecting walls, no Dirichlet mask).

    Returns the critical point with its energy; ``zero_set`` (physical x
    per y-column) is attached when the field changes sign along every
    column.
    """
    dom, eps = initial.domain, initial.eps
    if dom.mask.any():
        dom = DiscreteDomain(dom.grid, dom.r0, dom.r1, ("neumann", "neumann"), dom.phi)
    u = np.asarray(initial.values, dtype=float).copy()
    u, rn, it = _newton(dom, eps, u, tol, maxit, fixed=np.zeros(dom.size, dtype=bool))
    field_ = PhaseField(eps, dom, u, rn, it, dom.energy(u, eps))
    field_.zero_set = zero_set(field_)
    return field_


def zero_set(u: PhaseField):
    """x-position of the sign change in each y-column (cubic interpolation
    along xi), or None if some column does not change sign exactly once."""
    dom = u.domain
    U = u.grid2d()
    X = dom.x()
    xi = dom.grid.xi[dom.r0:dom.r1 + 1]
    out = np.empty(dom.ny)
    for k in range(dom.ny):
        col = U[:, k]
        if not np.any(col):
            return None  # identically zero: no graphical zero set
        s = np.sign(col)
        ch = np.nonzero(s[:-1] * s[1:] < 0)[0]
        zeros = np.nonzero(col == 0)[0]
        if ch.size + zeros.size == 0:
            return None
        if zeros.size:
            j = zeros[0]
            out[k] = X[j, k]
            continue
        j = ch[0]
        lo = max(j - 1, 0)
        hi = min(j + 3, col.size)
        pts = np.arange(lo, hi)
        coef = np.polyfit(xi[pts] - xi[j], col[pts], len(pts) - 1)
        roots = np.roots(coef)
        roots = roots[np.isreal(roots)].real + xi[j]
        roots = roots[(roots >= xi[j] - 1e-12) & (roots <= xi[j + 1] + 1e-12)]
        t = roots[0] if roots.size else xi[j] - col[j] * (xi[j + 1] - xi[j]) / (col[j + 1] - col[j])
        # physical position by interpolating x along the column
        out[k] = np.interp(t, xi[pts], X[pts, k])
    return out


def hessian_eigenvalues(u: PhaseField, k=4):
    """Lowest ``k`` eigenvalues of the discrete Hessian of E_h relative to
    the lumped mass, i.e. of eps(-Lap) + W''(u)/eps; negative values count
    the Morse index of the critical point."""
    dom, eps = u.domain, u.eps
    J = _jacobian(dom, eps, u.values)
    S, m = dom.operators()
    free = dom.free
    J = J[free][:, free].tocsc()
    M = sp.diags(m[free]).tocsc()
    sigma = -1.5 / eps
    k = min(k, J.shape[0] - 2)
    vals = spla.eigsh(J, k=k, M=M, sigma=sigma, which="LM", return_eigenvectors=False,
                      tol=1e-12, v0=np.ones(J.shape[0]))
    return np.sort(vals)


# ---------------------------------------------------------------------------
# shape derivative of the discrete energy
# ---------------------------------------------------------------------------

def shape_derivative(dom: DiscreteDomain, u, eps=None):
    """d E_h / d phi_k at fixed nodal values ``u`` (envelope theorem).

    At a discrete critical point this is the exact derivative of the
    solved energy with respect to the graph samples.
    """
    eps = dom.grid.eps if eps is None else eps
    g = dom.grid
    ny, nr = g.ny, dom.nrow
    dxi, dy = g.dxi, g.dy
    P, D, Dh = _y_ops(ny)
    d = dom._quad_data(derivs=True)
    U = np.asarray(u, dtype=float).reshape(nr, ny)
    gn = np.zeros(ny)   # d/d phi at y-nodes
    gpn = np.zeros(ny)  # d/d phi' at y-nodes
    gh = np.zeros(ny)   # d/d phi at half points
    gph = np.zeros(ny)

    def dC(c, kind):
        a, h, q = c["a"], c["h"], c["q"]
        af, hf, qfp = c["a_f"], c["h_f"], c["q_fp"]
        if kind == "xx":
            num = q * q + h * h
            den = a * h
            dCf = (2 * h * hf * den - num * (af * h + a * hf)) / den**2
            dCfp = 2 * q * qfp / den
        elif kind == "yy":
            dCf = (af * h - a * hf) / h**2
            dCfp = 0.0 * a
        elif kind == "xy":
            dCf = q * hf / h**2
            dCfp = -qfp / h
        else:  # mass density a h
            dCf = af * h + a * hf
            dCfp = 0.0 * a
        return dCf, dCfp

    if nr > 1:
        du = np.diff(U, axis=0) / dxi
        w = 0.5 * eps * du * du * dxi * g.wy
        f1, f2 = dC(d["xe"], "xx")
        gn += np.sum(w * f1, axis=0)
        gpn += np.sum(w * f2, axis=0)
    if ny > 1:
        dv = (np.roll(U, -1, axis=1) - U) / dy
        w = 0.5 * eps * dv * dv * dy * d["wxi"][:, None]
        f1, f2 = dC(d["ye"], "yy")
        gh += np.sum(w * f1, axis=0)
        if nr > 1:
            U1 = np.roll(U, -1, axis=1)
            gx = (U[1:] - U[:-1] + U1[1:] - U1[:-1]) / (2 * dxi)
            gyv = (U1[:-1] - U[:-1] + U1[1:] - U[1:]) / (2 * dy)
            w = eps * gx * gyv * dxi * dy
            f1, f2 = dC(d["ce"], "xy")
            gh += np.sum(w * f1, axis=0)
            gph += np.sum(w * f2, axis=0)
    w = DoubleWell.W(U) / eps * d["wxi"][:, None] * g.wy
    f1, _ = dC(d["nd"], "mass")
    gn += np.sum(w * f1, axis=0)
    return gn + D.T @ gpn + P.T @ gh + Dh.T @ gph


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_field(path, u: PhaseField):
    """Binary grid: one JSON header line, then little-endian float64 values."""
    dom = u.domain
    head = dict(eps=u.eps, nrow=dom.nrow, ny=dom.ny, nodes_per_eps=dom.grid.nodes_per_eps,
                level=dom.grid.level, domain_hash=dom.hash(), residual=u.residual,
                energy=u.energy)
    with open(path, "wb") as fh:
        fh.write((json.dumps(head, sort_keys=True) + "\n").encode())
        fh.write(np.asarray(u.values, dtype="<f8").tobytes())
    return path


def load_field(path):
    """Return ``(header, values)`` with values shaped (nrow, ny)."""
    with open(path, "rb") as fh:
        head = json.loads(fh.readline().decode())
        vals = np.frombuffer(fh.read(), dtype="<f8")
    return head, vals.reshape(head["nrow"], head["ny"])


def write_field_slice(path, u: PhaseField, k=0):
    """CSV slice x,u along the y-column ``k``."""
    X = u.domain.x()[:, k]
    U = u.grid2d()[:, k]
    with open(path, "w") as fh:
        fh.write("x,u\n")
        for a, b in zip(X, U):
            fh.write(f"{a:.17g},{b:.17g}\n")
    return path
