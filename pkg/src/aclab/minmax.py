"""Pseudogradient descent, mountain-pass paths and min-max audits on the
space of normal graphs over a circle.

Graphs are sampled functions f on the y-grid of a fixed chart {x = c};
energies are discrete balanced energies on that chart, whose gradient with
respect to the samples is available exactly (``BrokenTransition.shape_gradient``).

Norms.  The tangent space carries the H^1 product of the base circle,
<a, b> = int (a b + a' b' / h^2) h dy.  The pseudogradient is the H^1 Riesz
representative of the derivative, V = (1 - Lap)^{-1} g with g the L^2
density of the derivative, so <B', V> = |B'|^2 and |V| = |B'|.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from . import elliptic as el
from .energy import Resolution, broken_transition
from .geometry import (Hypersurface, TWO_PI, canonical_family, curvature_data, geodesic_circle,
                       jacobi_spectrum, spectral_interp, y_grid)

GRAD_TOL = 1e-6


class PathEscape(RuntimeError):
    """A path or family left the admissible neighbourhood."""


# ---------------------------------------------------------------------------
# graph space
# ---------------------------------------------------------------------------

class GraphSpace:
    """Energy, exact gradient and H^1 geometry of graphs over {x = c}.

    ``symmetry='even'`` restricts to f(y) = f(-y).
    """

    def __init__(self, metric, c, eps, ny=16, res: Resolution | None = None, symmetry=None):
        self.metric = metric
        self.c = float(c)
        self.eps = float(eps)
        self.ny = int(ny)
        self.res = res or Resolution()
        self.symmetry = symmetry
        self.h0 = float(metric.h(self.c))
        self.dy = TWO_PI / self.ny
        k = np.fft.rfftfreq(self.ny, 1.0 / self.ny)
        self._mult = 1.0 / (1.0 + (k / self.h0) ** 2)
        self._k = k
        self.evaluations = 0
        self.eta = geodesic_circle(metric, c, ny).chart_height()

    # -- geometry ---------------------------------------------------------
    def sigma(self, f):
        return Hypersurface(self.metric, self.c, np.asarray(f, dtype=float), 1)

    def project(self, v):
        if self.symmetry == "even":
            return 0.5 * (v + v[(-np.arange(self.ny)) % self.ny])
        return v

    def riesz(self, g):
        """(1 - Lap)^{-1} on the base circle (Fourier multiplier)."""
        return np.fft.irfft(np.fft.rfft(g) * self._mult, n=self.ny)

    def inner(self, a, b):
        A, Bf = np.fft.rfft(a), np.fft.rfft(b)
        w = np.full(A.size, 2.0)
        w[0] = 1.0
        if self.ny % 2 == 0:
            w[-1] = 1.0
        s = np.sum(w * (A * np.conj(Bf)).real * (1.0 + (self._k / self.h0) ** 2))
        return float(s / self.ny**2 * TWO_PI * self.h0)

    def norm(self, a):
        return math.sqrt(max(self.inner(a, a), 0.0))

    def sup(self, f):
        return float(np.max(np.abs(f)))

    # -- energy -----------------------------------------------------------
    def solve(self, f, warm=None):
        f = np.asarray(f, dtype=float)
        if self.sup(f) >= self.eta:
            raise PathEscape(f"graph leaves the chart (sup|f| = {self.sup(f):.4g} >= {self.eta:.4g})")
        self.evaluations += 1
        return broken_transition(self.sigma(f), self.eps, self.res, warm=warm)

    def energy(self, f, warm=None):
        return self.solve(f, warm).energy

    def gradient(self, f, warm=None):
        """(B, G, bt) with G_k = dB/df_k (exact discrete derivative)."""
        bt = self.solve(f, warm)
        G = self.project(bt.shape_gradient())
        return bt.energy, G, bt

    def density(self, G):
        """L^2(h dy) density of the derivative: B'(v) = int density v h dy."""
        return G / (self.h0 * self.dy)

    def area(self, f):
        return curvature_data(self.sigma(f)).area


@dataclass(frozen=True)
class Pseudogradient:
    V: np.ndarray
    norm_derivative: float   # |B'| (H^1 dual norm)
    norm_V: float            # |V|_{H^1}
    pairing: float           # B'(V)
    energy: float


def pseudogradient(space: GraphSpace, f, warm=None, G=None, energy=None) -> Pseudogradient:
    """Smoothed first-variation density with both pseudogradient
    inequalities checked: B'(V) >= |B'|^2 and |V| <= 2|B'|."""
    if G is None:
        energy, G, _ = space.gradient(f, warm)
    g = space.density(G)
    V = space.project(space.riesz(g))
    pair = float(np.dot(G, V))
    nV = space.norm(V)
    # dual norm of B' in H^1 equals the H^1 norm of its Riesz representative
    nB = nV
    slack = 1e-10 * max(1.0, nB * nB)
    if not (pair >= nB * nB - slack and nV <= 2 * nB + slack):
        raise ArithmeticError("pseudogradient inequalities violated")
    return Pseudogradient(V, nB, nV, pair, float(energy))


# ---------------------------------------------------------------------------
# descent with the deformation cutoffs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeformationSets:
    """Level c, energy windows eta_bar < eta and sup-norm radii r < r+delta
    < r+2 delta around the base circle (the sets A and B of the cutoff)."""

    level: float
    eta: float
    eta_bar: float
    r: float
    delta: float

    def __post_init__(self):
        if not 0 < self.eta_bar < self.eta:
            raise ValueError("need 0 < eta_bar < eta")
        if self.delta <= 0:
            raise ValueError("delta must be positive")


def cutoff(sets: DeformationSets | None, energy, sup, l1_density):
    """d(u) = dist(u, B) / (dist(u, A) + dist(u, B)) with sup-norm
    distances; energy gaps are converted to sup-norm distances through
    |dB| <= |density|_{L^1} |df|_sup."""
    if sets is None:
        return 1.0
    L = max(l1_density, 1e-300)
    gap = abs(energy - sets.level)
    dA = max((gap - sets.eta_bar) / L, sup - (sets.r + sets.delta), 0.0)
    dB = max(min((sets.eta - gap) / L, (sets.r + 2 * sets.delta) - sup), 0.0)
    if dA + dB == 0.0:
        return 0.0
    return dB / (dA + dB)


def speed_cap(t):
    """h(t) = min(1, 1/t)."""
    return 1.0 if t <= 1.0 else 1.0 / t


@dataclass
class DescentState:
    f: np.ndarray
    energy: float
    V: np.ndarray
    grad_norm: float
    d: float
    h: float
    step: int
    c: float
    tau: float = 0.0
    event: str = ""


@dataclass(frozen=True)
class DescentStop:
    grad_tol: float = 1e-6
    energy_floor: float = -math.inf
    max_steps: int = 200


def _rechart(space: GraphSpace, f):
    c_new = space.c + float(np.mean(f))
    lo, hi = space.metric.x_walls
    c_new = min(max(c_new, lo + 1.0), hi - 1.0)
    new = GraphSpace(space.metric, c_new, space.eps, space.ny, space.res, space.symmetry)
    return new, f + space.c - c_new


def descend(space: GraphSpace, f0, stop: DescentStop = DescentStop(), sets: DeformationSets | None = None,
            tau0=2.0, rechart_at=0.6, min_tau=1e-12, allow_rechart=True):
    """Explicit Euler steps along -d(u) h(|B'|) V with backtracking.

    Each accepted step strictly lowers the energy.  When sup|f| exceeds
    ``rechart_at`` times the chart height the graph is re-expressed over
    the circle through its mean (a new chart; its energy is re-evaluated
    and the event recorded).  Returns ``(trajectory, space)``.
    """
    f = np.asarray(f0, dtype=float).copy()
    E, G, bt = space.gradient(f)
    traj = []
    tau = tau0
    for step in range(stop.max_steps + 1):
        pg = pseudogradient(space, f, G=G, energy=E)
        L1 = float(np.sum(np.abs(G)))
        d = cutoff(sets, E, space.sup(f) if sets is None else _sup_dist(space, f), L1)
        hh = speed_cap(pg.norm_derivative)
        st = DescentState(f.copy(), E, pg.V, pg.norm_derivative, d, hh, step, space.c, tau)
        traj.append(st)
        if pg.norm_derivative <= stop.grad_tol:
            st.event = "critical"
            break
        if E <= stop.energy_floor:
            st.event = "energy-floor"
            break
        if d == 0.0:
            st.event = "outside-cutoff"
            break
        if step == stop.max_steps:
            st.event = "max-steps"
            break
        direction = -d * hh * pg.V
        slope = float(np.dot(G, direction))
        t = min(tau * 2.0, 8.0)
        while True:
            trial = space.project(f + t * direction)
            try:
                Et, Gt, btt = space.gradient(trial, warm=bt)
            except (PathEscape, el.SolverError, ValueError):
                Et = math.inf
            if Et < E + 1e-4 * t * slope and Et < E:
                break
            t *= 0.5
            if t < min_tau:
                st.event = "step-collapse"
                return traj, space
        f, E, G, bt, tau = trial, Et, Gt, btt, t
        if allow_rechart and space.sup(f) > rechart_at * space.eta:
            space, f = _rechart(space, f)
            E, G, bt = space.gradient(f)
            traj[-1].event = "rechart"
    return traj, space


def _sup_dist(space, f):
    """sup-norm distance from the base circle of the deformation sets."""
    return space.sup(f)


def monotone_segments(traj):
    """True if energies decrease strictly within every chart segment."""
    for a, b in zip(traj[:-1], traj[1:]):
        if a.c == b.c and not b.energy < a.energy:
            return False
    return True


# ---------------------------------------------------------------------------
# gradient floor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FloorReport:
    floor: float
    norms: np.ndarray
    argmin: np.ndarray
    eps: float


def gradient_floor_probe(space: GraphSpace, r, delta, samples=100, seed=0, modes=3, translations=True):
    """Minimum of |B'| over graphs with r <= sup|f| < r + delta.

    Directions are random smooth combinations of Fourier modes up to
    ``modes``; with ``translations`` the two constant shifts are included
    (the directions along which a degenerate family is flat).
    """
    if delta <= 0:
        raise ValueError("empty annulus (delta must be positive)")
    rng = np.random.default_rng(seed)
    y = y_grid(space.ny)
    dirs = []
    if translations:
        dirs += [np.ones(space.ny), -np.ones(space.ny)]
    while len(dirs) < samples:
        v = rng.normal() * np.ones(space.ny)
        for k in range(1, modes + 1):
            a, b = rng.normal(size=2) / k
            v += a * np.cos(k * y) + b * np.sin(k * y)
        dirs.append(space.project(v))
    norms = []
    graphs = []
    for v in dirs[:samples]:
        rad = rng.uniform(r, r + delta)
        f = rad * v / np.max(np.abs(v))
        E, G, _ = space.gradient(f)
        norms.append(pseudogradient(space, f, G=G, energy=E).norm_derivative)
        graphs.append(f)
    norms = np.array(norms)
    i = int(np.argmin(norms))
    return FloorReport(float(norms[i]), norms, graphs[i], space.eps)


@dataclass
class DeformationReport:
    level: float
    eta: float
    eta_bar: float
    floor: float
    r: float
    delta: float
    start_energies: list
    final_energies: list
    max_sups: list
    steps: list
    monotone: list
    reached: list

    @property
    def passed(self):
        return bool(self.reached) and all(self.reached) and all(self.monotone)

    def rows(self):
        return [dict(start=i, start_energy=a, final_energy=b, max_sup=s, steps=n, monotone=int(m), reached=int(ok))
                for i, (a, b, s, n, m, ok) in enumerate(zip(self.start_energies, self.final_energies, self.max_sups,
                                                           self.steps, self.monotone, self.reached))]

    def record(self):
        return (f"level={self.level:.17g} eta={self.eta:.17g} eta_bar={self.eta_bar:.17g} floor={self.floor:.17g} "
                f"r={self.r:.17g} delta={self.delta:.17g} starts={len(self.reached)} "
                f"reached={sum(self.reached)} passed={int(self.passed)}")


def _level_start(space, v, target, s_max, iters=40):
    """Largest-energy-below-target point s v on the ray, s <= s_max, found
    by bisection on B(s v) - target (B decreasing along unstable rays)."""
    lo, hi = 0.0, s_max
    if space.energy(hi * v) > target:
        return None
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if space.energy(mid * v) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-6 * s_max:
            break
    return hi * v


def deformation_realization(space: GraphSpace, r=0.2, delta=0.1, starts=10, seed=0, floor=None,
                            floor_samples=30, max_steps=100):
    """Run the cut-off descent from ``starts`` graphs of A_{c+eta_bar} in U
    (sup|f| <= r) with c the energy of the base circle, and record whether
    each reaches A_{c-eta_bar} without leaving U_delta.

    eta_bar = floor * delta / 4 from the annulus gradient floor (measured
    unless given) and eta = 2 eta_bar.  Starts lie on random rays mixing
    the constant mode with smaller higher modes, placed by bisection just
    below c - eta_bar / 2.
    """
    if floor is None:
        floor = gradient_floor_probe(space, r, delta, samples=floor_samples, seed=seed).floor
    if not floor > 0:
        raise ValueError("deformation needs a positive gradient floor")
    c = space.energy(np.zeros(space.ny))
    eta_bar = 0.25 * floor * delta
    sets = DeformationSets(c, 2 * eta_bar, eta_bar, r, delta)
    rng = np.random.default_rng(seed)
    y = y_grid(space.ny)
    rep = DeformationReport(c, 2 * eta_bar, eta_bar, float(floor), r, delta, [], [], [], [], [], [])
    attempts = 0
    while len(rep.reached) < starts and attempts < 10 * starts:
        attempts += 1
        v = np.full(space.ny, 1.0 if rng.random() < 0.5 else -1.0)
        for k in range(1, 4):
            a, b = rng.uniform(-0.3, 0.3, 2) / k
            v += a * np.cos(k * y) + b * np.sin(k * y)
        v = space.project(v) / np.max(np.abs(v))
        f0 = _level_start(space, v, c - 0.5 * eta_bar, r)
        if f0 is None:
            continue
        traj, _ = descend(space, f0, DescentStop(grad_tol=0.0, energy_floor=c - eta_bar, max_steps=max_steps),
                          sets=sets, allow_rechart=False)
        sups = [space.sup(s.f) for s in traj]
        rep.start_energies.append(traj[0].energy)
        rep.final_energies.append(traj[-1].energy)
        rep.max_sups.append(max(sups))
        rep.steps.append(len(traj) - 1)
        rep.monotone.append(all(b.energy < a.energy for a, b in zip(traj[:-1], traj[1:])))
        rep.reached.append(traj[-1].energy <= c - eta_bar and max(sups) <= r + delta)
    return rep


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

@dataclass
class PathFamily:
    """Graphs at the nodes of B^k (k = 1: m points on [-1, 1]; k = 2: a
    triangulated disc).  ``pinned`` nodes are never modified."""

    k: int
    params: np.ndarray          # (m, k)
    graphs: np.ndarray          # (m, ny)
    pinned: np.ndarray          # (m,) bool
    r: float = math.inf
    delta: float = 0.0
    neighbours: list = field(default_factory=list)

    @property
    def m(self):
        return self.params.shape[0]

    def check_admissible(self, base=0.0):
        lim = self.r + 2 * self.delta
        sup = float(np.max(np.abs(self.graphs - base)))
        # a zero radius admits the base graph alone
        if sup > lim or (sup == lim and lim > 0):
            raise PathEscape(f"family leaves U_2delta (sup {sup:.4g} >= {lim:.4g})")
        return sup


def segment_path(f_start, f_end, m, bump=None):
    """Straight path on [-1, 1] with an optional interior ``bump`` (added
    with weight sin(pi s))."""
    s = np.linspace(0.0, 1.0, m)
    G = (1 - s)[:, None] * f_start[None, :] + s[:, None] * f_end[None, :]
    if bump is not None:
        G = G + np.sin(np.pi * s)[:, None] * bump[None, :]
    pinned = np.zeros(m, dtype=bool)
    pinned[[0, -1]] = True
    nb = [[i - 1, i + 1] if 0 < i < m - 1 else [] for i in range(m)]
    return PathFamily(1, (2 * s - 1)[:, None], G, pinned, neighbours=nb)


def disc_nodes(rings):
    """Centre plus ``rings`` concentric rings with 6j nodes on ring j."""
    pts = [(0.0, 0.0)]
    for j in range(1, rings + 1):
        n = 6 * j
        th = 2 * np.pi * np.arange(n) / n
        pts += list(zip(j / rings * np.cos(th), j / rings * np.sin(th)))
    P = np.array(pts)
    tri = Delaunay(P)
    nb = [set() for _ in range(len(P))]
    for s in tri.simplices:
        for a in s:
            nb[a].update(int(b) for b in s if b != a)
    boundary = np.isclose(np.hypot(P[:, 0], P[:, 1]), 1.0)
    return P, [sorted(x) for x in nb], boundary


def disc_family(boundary_fn, rings, interior=None):
    """Family on a triangulated disc; ``boundary_fn(v)`` gives the pinned
    boundary graphs, ``interior(v)`` (default: radial blend of the boundary
    towards its mean) the initial interior graphs."""
    P, nb, bnd = disc_nodes(rings)
    G = []
    for v in P:
        rad = float(np.hypot(*v))
        if interior is not None:
            G.append(interior(v))
        elif rad > 0:
            G.append(rad * boundary_fn(v / rad))
        else:
            G.append(0.0 * boundary_fn(np.array([1.0, 0.0])))
    return PathFamily(2, P, np.array(G), bnd, neighbours=nb)


def _reparametrize(space: GraphSpace, fam: PathFamily, energies=None, weight=0.0):
    """k = 1: equal (energy-weighted) H^1 arclength; k = 2: one sweep of
    barycentric smoothing of the interior nodes."""
    G = fam.graphs
    if fam.k == 1:
        d = np.array([space.norm(G[i + 1] - G[i]) for i in range(fam.m - 1)])
        if weight and energies is not None:
            e = np.asarray(energies)
            w = 1.0 + weight * (0.5 * (e[1:] + e[:-1]) - e.min()) / max(np.ptp(e), 1e-300)
            d = d * w
        s = np.concatenate([[0.0], np.cumsum(d)])
        if s[-1] == 0.0:
            return fam
        s /= s[-1]
        t = np.linspace(0, 1, fam.m)
        new = np.empty_like(G)
        for j in range(G.shape[1]):
            new[:, j] = np.interp(t, s, G[:, j])
        new[fam.pinned] = G[fam.pinned]
        fam.graphs = new
    else:
        new = G.copy()
        for i in range(fam.m):
            if not fam.pinned[i]:
                new[i] = 0.5 * G[i] + 0.5 * np.mean(G[fam.neighbours[i]], axis=0)
        fam.graphs = new
    return fam


def _h1_orthonormal(space, vecs, k):
    """Up to ``k`` H^1-orthonormal directions spanning the rows of ``vecs``
    (modified Gram-Schmidt, largest first)."""
    vecs = sorted(list(vecs), key=lambda v: -space.norm(v))
    out = []
    for v in vecs:
        w = v - sum(space.inner(v, q) * q for q in out) if out else v.copy()
        n = space.norm(w)
        if n > 1e-12 * max(1.0, space.norm(v)):
            out.append(w / n)
        if len(out) == k:
            break
    return out


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# mountain pass
# ---------------------------------------------------------------------------

@dataclass
class MinMaxResult:
    d_eps: float
    c_eps: float
    argmax: int
    saddle_graph: np.ndarray
    saddle: el.PhaseField | None
    grad_norm: float
    hausdorff: float
    log: list
    path_max: float = float("nan")
    eigenvalues: np.ndarray | None = None
    negative_count: int = -1
    saddle_residual: float = float("nan")
    mountain_pass: bool = True
    c: float = 0.0
    eps: float = float("nan")
    family: PathFamily | None = None

    def record(self):
        items = [("eps", self.eps), ("d_eps", self.d_eps), ("c_eps", self.c_eps), ("path_max", self.path_max),
                 ("argmax", self.argmax), ("grad_norm", self.grad_norm), ("hausdorff", self.hausdorff),
                 ("saddle_residual", self.saddle_residual), ("negative_eigenvalues", self.negative_count),
                 ("mountain_pass", int(self.mountain_pass)), ("iterations", len(self.log))]
        return " ".join(f"{k}={v:.17g}" if isinstance(v, float) else f"{k}={v}" for k, v in items)


def graph_newton(space: GraphSpace, f0, tol=GRAD_TOL, maxit=12, basis=None, h=1e-5):
    """Newton's method on the exact gradient in a reduced Fourier basis
    (finite-difference Jacobian); converges to the nearby critical graph
    of any index."""
    f = np.asarray(f0, dtype=float).copy()
    if basis is None:
        basis = _fourier_basis(space)
    E, G, bt = space.gradient(f)
    pg = pseudogradient(space, f, G=G, energy=E)
    for _ in range(maxit):
        if pg.norm_derivative <= tol:
            break
        r = basis.T @ G
        J = np.empty((basis.shape[1], basis.shape[1]))
        for j in range(basis.shape[1]):
            _, Gp, _ = space.gradient(f + h * basis[:, j], warm=bt)
            _, Gm, _ = space.gradient(f - h * basis[:, j], warm=bt)
            J[:, j] = basis.T @ (Gp - Gm) / (2 * h)
        J = 0.5 * (J + J.T)
        step = basis @ np.linalg.solve(J, -r)
        f = space.project(f + step)
        E, G, bt = space.gradient(f, warm=bt)
        pg = pseudogradient(space, f, G=G, energy=E)
    return f, E, pg, bt


def _fourier_basis(space, kmax=None):
    n = space.ny
    kmax = (n - 1) // 2 if kmax is None else kmax
    y = y_grid(n)
    cols = [np.ones(n)]
    for k in range(1, kmax + 1):
        cols.append(np.cos(k * y))
        if space.symmetry != "even":
            cols.append(np.sin(k * y))
    if n % 2 == 0 and kmax == (n - 1) // 2:
        cols.append(np.cos(n // 2 * y))  # Nyquist mode
    B = np.column_stack(cols)
    q, _ = np.linalg.qr(B)
    return q


def hausdorff_distance(curve_a, curve_b, metric=None, samples=512):
    """Symmetric Hausdorff distance between two graphs x = g(y) on the
    cylinder, densely resampled; ``curve_*`` are Hypersurfaces or arrays
    of x-positions on a uniform y-grid.  Pairwise distances use the local
    metric sqrt(dx^2 + h(x_mid)^2 dy^2), exact for x-separations."""
    def xs(c):
        if isinstance(c, Hypersurface):
            return c.graph, c.metric
        return np.asarray(c, dtype=float), None
    ga, ma = xs(curve_a)
    gb, mb = xs(curve_b)
    metric = metric or ma or mb
    n = max(samples, ga.size, gb.size)
    y = y_grid(n)
    A = spectral_interp(ga, y) if ga.size > 1 else np.full(n, ga[0])
    B = spectral_interp(gb, y) if gb.size > 1 else np.full(n, gb[0])
    dx = A[:, None] - B[None, :]
    dyy = np.abs(y[:, None] - y[None, :])
    dyy = np.minimum(dyy, TWO_PI - dyy)
    hmid = metric.h(0.5 * (A[:, None] + B[None, :])) if metric is not None else 1.0
    D = np.sqrt(dx * dx + (hmid * dyy) ** 2)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def _polish(space: GraphSpace, f, bt, base_circle):
    try:
        sad = el.newton_polish(space.metric, bt.glued())
    except el.SolverError:
        return None, float("nan"), None, -1, float("nan")
    zs = getattr(sad, "zero_set", None)
    haus = float("nan")
    if zs is not None:
        haus = hausdorff_distance(zs, base_circle.graph, space.metric)
    try:
        ev = el.hessian_eigenvalues(sad, k=6)
        neg = int(np.sum(ev < 0))
    except Exception:  # noqa: BLE001 - eigensolver failure is reported, not fatal
        ev, neg = None, -1
    return sad, haus, ev, neg, sad.residual


def mountain_pass(space: GraphSpace, family: PathFamily, iters=200, tau=1.0, string_tol=1e-3,
                  tol=GRAD_TOL, climb=True, polish=True, workers=None, weight=0.0,
                  reference: Hypersurface | None = None, active_frac=0.25, stall_tol=1e-7,
                  stall_window=10) -> MinMaxResult:
    """String method (k = 1) or smoothed disc family (k = 2) with a
    climbing argmax node, then graph-space Newton on the argmax node and a
    full-manifold polish of its glued broken transition.

    The string stops when the largest perpendicular gradient falls below
    ``string_tol`` or when the maximum energy has varied by less than
    ``stall_tol`` (relative) over the last ``stall_window`` steps; Newton
    finishes the argmax node in either case.

    Only nodes with energy above c + active_frac (max - c), c the boundary
    maximum, are moved; nodes move across the family (the component of V
    along the family is removed, and reversed on the climbing node).
    """
    fam = family
    warm = [None] * fam.m
    log = []

    def evaluate(i):
        E, G, bt = space.gradient(fam.graphs[i], warm=warm[i])
        return E, G, bt

    out = _map(evaluate, range(fam.m), workers)
    E = np.array([o[0] for o in out])
    c_eps = float(E[fam.pinned].max())
    if np.max(E[~fam.pinned], initial=-math.inf) <= c_eps + 1e-12 * abs(c_eps):
        i = int(np.argmax(E))
        return MinMaxResult(float(E.max()), c_eps, i, fam.graphs[i].copy(), None, float("nan"), float("nan"),
                            log, float(E.max()), mountain_pass=False, c=space.c, eps=space.eps, family=fam)
    for it in range(iters):
        warm = [o[2] for o in out]
        Vs = [pseudogradient(space, fam.graphs[i], G=o[1], energy=o[0]).V for i, o in enumerate(out)]
        free = np.nonzero(~fam.pinned)[0]
        imax = int(free[np.argmax(E[free])])
        perp = []
        G0 = fam.graphs.copy()
        # nodes in the sublevel set of the boundary level are left alone:
        # the min-max value only sees the part of the family above it
        emax = float(E[free].max())
        active = [i for i in free if E[i] > c_eps + active_frac * (emax - c_eps)]
        for i in active:
            V = Vs[i]
            # only the component across the family moves a node (its ends
            # are not critical, so tangential motion would drain the path
            # through them); the climbing node reverses the tangential part
            if fam.k == 1:
                q = G0[i + 1] - G0[i - 1]
                nq = space.norm(q)
                tang = space.inner(V, q) / nq**2 * q if nq > 0 else 0.0 * V
            else:
                nbr = G0[fam.neighbours[i]] - G0[i]
                Q = _h1_orthonormal(space, nbr, fam.k)
                tang = sum(space.inner(V, qv) * qv for qv in Q) if Q else 0.0 * V
            step = -(V - 2 * tang) if (climb and i == imax) else -(V - tang)
            perp.append(space.norm(V - tang))
            fam.graphs[i] = space.project(fam.graphs[i] + tau * step)
        if not climb or fam.k == 2:
            _reparametrize(space, fam, E, weight)
        else:
            # reparametrize the two sub-strings on either side of the climber
            left = PathFamily(1, fam.params[:imax + 1], fam.graphs[:imax + 1].copy(),
                              np.r_[True, np.zeros(imax - 1, bool), True])
            right = PathFamily(1, fam.params[imax:], fam.graphs[imax:].copy(),
                               np.r_[True, np.zeros(fam.m - imax - 2, bool), True])
            if left.m > 2:
                fam.graphs[:imax + 1] = _reparametrize(space, left).graphs
            if right.m > 2:
                fam.graphs[imax:] = _reparametrize(space, right).graphs
        if np.isfinite(fam.r):
            fam.check_admissible()
        out = _map(evaluate, range(fam.m), workers)
        E = np.array([o[0] for o in out])
        mperp = float(max(perp))
        log.append(dict(step=it, d_estimate=float(E.max()), max_gradient=mperp, argmax=imax))
        if mperp <= string_tol:
            break
        if len(log) > stall_window:
            recent = [row["d_estimate"] for row in log[-stall_window - 1:]]
            if max(recent) - min(recent) <= stall_tol * abs(recent[-1]):
                break
    free = np.nonzero(~fam.pinned)[0]
    imax = int(free[np.argmax(E[free])])
    path_max = float(E.max())
    f_sad, d_eps, pg, bt = graph_newton(space, fam.graphs[imax], tol=tol)
    log.append(dict(step=len(log), d_estimate=d_eps, max_gradient=pg.norm_derivative, argmax=imax))
    ref = reference if reference is not None else geodesic_circle(space.metric, space.c, space.ny)
    sad = ev = None
    neg, resid = -1, float("nan")
    haus = hausdorff_distance(space.sigma(f_sad), ref)
    if polish:
        sad, h2, ev, neg, resid = _polish(space, f_sad, bt, ref)
        if np.isfinite(h2):
            haus = h2
    return MinMaxResult(float(d_eps), c_eps, imax, f_sad, sad, pg.norm_derivative, haus, log, path_max, ev, neg,
                        resid, bool(d_eps > c_eps), space.c, space.eps, fam)


def index_one_testbed(eps=0.05, m=33, ny=16, res=None, endpoints=0.6, bump_amp=(0.05, 0.15), metric=None):
    """Space and initial perturbed path between the constant graphs at
    x = -endpoints and x = +endpoints around the circle x = 0 of the
    warped torus a = 2, b = 0.3."""
    from .geometry import make_warped_torus
    metric = metric or make_warped_torus(2.0, 0.3)
    space = GraphSpace(metric, 0.0, eps, ny, res)
    y = y_grid(ny)
    bump = bump_amp[0] * np.cos(y) + bump_amp[1] * np.cos(2 * y)
    fam = segment_path(np.full(ny, -endpoints), np.full(ny, endpoints), m, bump)
    return space, fam


def index_two_testbed(eps=0.05, rings=3, ny=16, res=None, r=0.3):
    """Warped torus a = 1, b = 0.8 (the circle x = 0 has index 3); on
    y-even graphs the index is 2 with unstable modes 1 and cos y.  The
    pinned boundary is the canonical family at radius ``r``."""
    from .geometry import make_warped_torus
    metric = make_warped_torus(1.0, 0.8)
    space = GraphSpace(metric, 0.0, eps, ny, res, symmetry="even")
    base = geodesic_circle(metric, 0.0, ny)
    spec = jacobi_spectrum(base, m=4)
    # even eigenfunctions: constant and cos y
    U = spec.vectors
    even = [j for j in range(U.shape[1]) if np.allclose(U[:, j], U[(-np.arange(U.shape[0])) % U.shape[0], j],
                                                         atol=1e-8)]
    E2 = U[:, even[:2]]

    def on_grid(v):
        return spectral_interp(v, y_grid(ny))

    def boundary(v):
        return r * on_grid(E2 @ np.asarray(v))

    y = y_grid(ny)

    def interior(v):
        rad = float(np.hypot(*v))
        return boundary(v / rad) * rad + 0.08 * (1 - rad**2) * np.cos(2 * y) if rad > 0 else \
            0.08 * np.cos(2 * y)

    fam = disc_family(boundary, rings, interior)
    return space, fam


# ---------------------------------------------------------------------------
# strong min-max audit
# ---------------------------------------------------------------------------

@dataclass
class AuditReport:
    B_sigma: float
    delta: float
    sups: list
    kinds: list
    discarded: list
    canonical_sup: float
    canonical_argmax: float
    passed: bool
    eps: float

    def record(self):
        return (f"eps={self.eps:.17g} B_sigma={self.B_sigma:.17g} delta={self.delta:.17g} "
                f"min_sup={min(self.sups):.17g} trials={len(self.sups)} discarded={len(self.discarded)} "
                f"canonical_sup={self.canonical_sup:.17g} canonical_argmax={self.canonical_argmax:.17g} "
                f"passed={int(self.passed)}")


def strong_minmax_audit(space: GraphSpace, r=0.2, trials=20, m=17, seed=0, optimized=4, rel_delta=1e-2,
                        radius=None, iters=15, max_attempts=5):
    """Families pinned to the canonical boundary {r u0, -r u0} of the
    index-one circle: random smooth interior perturbations plus
    descent-optimized (string-relaxed) families; each sup must stay
    above B(Sigma) - delta, delta = rel_delta * B(Sigma).  Families that
    leave the admissible radius are logged and redrawn until ``trials``
    families are evaluated (at most ``max_attempts * trials`` draws)."""
    base = geodesic_circle(space.metric, space.c, space.ny)
    spec = jacobi_spectrum(base, m=1)
    B0 = space.energy(np.zeros(space.ny))
    delta = rel_delta * B0
    radius = radius if radius is not None else 2.5 * r

    def member(v):
        return np.asarray(canonical_family(base, spec, r, [v]).f, dtype=float)

    vs = np.linspace(-1, 1, m)
    canon = np.array([space.energy(member(v)) for v in vs])
    i0 = int(np.argmax(canon))
    rng = np.random.default_rng(seed)
    y = y_grid(space.ny)
    sups, kinds, discarded = [], [], []
    start, end = member(-1.0), member(1.0)
    t = -1
    while len(sups) < trials and t + 1 < max_attempts * trials:
        t += 1
        bump = np.zeros(space.ny)
        for k in range(0, 4):
            a, b = rng.normal(size=2) * r / (1 + k)
            bump += a * np.cos(k * y) + (b * np.sin(k * y) if k else 0.0)
        fam = segment_path(start, end, m, bump)
        fam.r = radius
        fam.delta = 0.0
        kind = "random"
        try:
            fam.check_admissible()
            if len(sups) < optimized:
                kind = "optimized"
                _relax_path(space, fam, iters)
            E = [space.energy(g) for g in fam.graphs]
        except (PathEscape, el.SolverError) as exc:
            discarded.append(f"trial={t} reason={exc}")
            continue
        sups.append(float(max(E)))
        kinds.append(kind)
    passed = len(sups) == trials and min(sups) >= B0 - delta
    return AuditReport(B0, delta, sups, kinds, discarded, float(canon.max()), float(vs[i0]), passed, space.eps)


def _relax_path(space, fam, iters, tau=1.0):
    """Plain string iterations (no climbing) lowering the path maximum."""
    for _ in range(iters):
        for i in np.nonzero(~fam.pinned)[0]:
            pg = pseudogradient(space, fam.graphs[i])
            fam.graphs[i] = fam.graphs[i] - tau * pg.V
        _reparametrize(space, fam)
        fam.check_admissible()
    return fam


# ---------------------------------------------------------------------------
# Palais-Smale diagnostics
# ---------------------------------------------------------------------------

@dataclass
class PalaisSmaleReport:
    grad_norms: np.ndarray
    energies: np.ndarray
    areas: np.ndarray
    sym_diff: np.ndarray
    cauchy: bool
    limit: el.PhaseField | None
    polished: bool

    def rows(self):
        n = len(self.energies)
        sd = np.r_[self.sym_diff, np.nan]
        return [dict(n=i, energy=float(self.energies[i]), grad=float(self.grad_norms[i]),
                     area=float(self.areas[i]), sym_diff=float(sd[i])) for i in range(n)]


def symmetric_difference(metric, g1, g2):
    """|M+_1 delta M+_2| for two graphs (physical x-positions)."""
    n = g1.size
    y = y_grid(n)
    del y
    lo, hi = np.minimum(g1, g2), np.maximum(g1, g2)
    b, a = metric.b, metric.a
    # int_lo^hi (a + b cos x) dx
    strip = a * (hi - lo) + b * (np.sin(hi) - np.sin(lo))
    return float(np.sum(strip) * TWO_PI / n)


def palais_smale_diagnostic(graphs, eps, res=None, tail=3, sd_tol=1e-3, grad_tol=1e-2, polish=True):
    """Tabulate a sequence of Hypersurfaces (graphs over circles) and flag
    Cauchy behaviour of the symmetric differences of M+."""
    graphs = list(graphs)
    if not graphs:
        raise ValueError("empty sequence")
    met = graphs[0].metric
    grads, energies, areas = [], [], []
    bts = []
    for s in graphs:
        space = GraphSpace(met, s.c, eps, s.ny, res)
        E, G, bt = space.gradient(np.asarray(s.f, dtype=float))
        grads.append(pseudogradient(space, s.f, G=G, energy=E).norm_derivative)
        energies.append(E)
        areas.append(curvature_data(s).area)
        bts.append(bt)
    sd = np.array([symmetric_difference(met, a.graph, b.graph) for a, b in zip(graphs[:-1], graphs[1:])])
    grads = np.array(grads)
    k = min(tail, sd.size)
    cauchy = bool(sd.size == 0 or (np.all(sd[-k:] <= sd_tol) and (k < 2 or sd[-1] <= sd[-k] + 1e-15)))
    limit, ok = None, False
    if polish and cauchy and grads[-1] <= grad_tol:
        try:
            limit = el.newton_polish(met, bts[-1].glued())
            ok = True
        except el.SolverError:
            limit = None
    return PalaisSmaleReport(grads, np.array(energies), np.array(areas), sd, cauchy, limit, ok)
