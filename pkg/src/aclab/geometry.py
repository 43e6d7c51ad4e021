"""Model manifolds, graph hypersurfaces, curvature and Jacobi spectra.

The 2-D model is the warped product dx^2 + h(x)^2 dy^2 with
h(x) = a + b cos x, y periodic of period 2pi.  Separating hypersurfaces are
graphs x = g(y); the ambient region used by the solvers is the cylinder
``x_walls[0] <= x <= x_walls[1]`` with reflecting (Neumann) ends, which keeps
every graph separating.  The 1-D model is a circle of length 2pi and its
hypersurfaces are point pairs.

Sign conventions: the unit normal nu points towards increasing x when
``orientation = +1`` (from M+ = {x < g} into M- = {x > g}); the mean
curvature H is <grad_T T, nu>, so that the first variation of length along
X is -int H <X, nu>.  For the circle {x = c} this gives H = -h'(c)/h(c).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class WarpedMetric:
    """dx^2 + h(x)^2 dy^2, h = a + b cos x.

    ``dim = 1`` is the circle of length 2pi (warp ignored).  ``x_walls``
    bounds the cylinder used for separating graphs.
    """

    a: float
    b: float
    dim: int = 2
    x_walls: tuple = (-TWO_PI, TWO_PI)

    def __post_init__(self):
        if self.dim == 2 and not self.a > abs(self.b):
            raise ValueError("need a > |b| so that h stays positive")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if not self.x_walls[0] < self.x_walls[1]:
            raise ValueError("x_walls must be increasing")

    def h(self, x):
        return self.a + self.b * np.cos(x)

    def dh(self, x):
        return -self.b * np.sin(x)

    def d2h(self, x):
        return -self.b * np.cos(x)

    def K(self, x):
        """Gaussian curvature -h''/h."""
        return -self.d2h(x) / self.h(x)

    @property
    def flat(self):
        return self.b == 0.0

    def key(self):
        return (float(self.a), float(self.b), int(self.dim), tuple(map(float, self.x_walls)))


def make_warped_torus(a, b, x_walls=(-TWO_PI, TWO_PI)) -> WarpedMetric:
    if not a > b:
        raise ValueError(f"a={a} must exceed b={b} (h vanishes otherwise)")
    if b < 0:
        raise ValueError("b must be >= 0")
    return WarpedMetric(float(a), float(b), 2, tuple(x_walls))


def circle_1d() -> WarpedMetric:
    """Circle of length 2pi."""
    return WarpedMetric(1.0, 0.0, 1)


def y_grid(ny):
    return TWO_PI * np.arange(ny) / ny


def spectral_derivative(f, order=1):
    """Fourier derivative of periodic samples on [0, 2pi); the Nyquist mode
    is dropped for odd orders."""
    f = np.asarray(f, dtype=float)
    n = f.size
    if n == 1:
        return np.zeros_like(f)
    k = np.fft.rfftfreq(n, 1.0 / n)
    fk = np.fft.rfft(f)
    mult = (1j * k) ** order
    if n % 2 == 0 and order % 2 == 1:
        mult[-1] = 0.0
    return np.fft.irfft(fk * mult, n)


def spectral_interp(f, y):
    """Trigonometric interpolant of periodic samples evaluated at ``y``."""
    f = np.asarray(f, dtype=float)
    n = f.size
    if n == 1:
        return np.full(np.shape(y), f[0])
    fk = np.fft.rfft(f) / n
    k = np.arange(fk.size)
    w = np.full(fk.size, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    y = np.asarray(y, dtype=float)
    ph = np.exp(1j * np.multiply.outer(y, k))
    # the Nyquist coefficient of real data is real, so the real part is the
    # cos(N/2 y) interpolant
    return (ph @ (w * fk)).real


@dataclass(frozen=True, eq=False)
class Hypersurface:
    """Normal graph x = c + orientation * f(y) over the circle {x = c}.

    In 1-D, ``points`` holds the pair of point positions on the circle and
    M+ is the arc from points[0] to points[1] (counter-clockwise).
    """

    metric: WarpedMetric
    c: float = 0.0
    f: np.ndarray = field(default_factory=lambda: np.zeros(1))
    orientation: int = 1
    points: tuple | None = None

    @property
    def ny(self):
        return int(np.size(self.f))

    @property
    def y(self):
        return y_grid(self.ny)

    @property
    def graph(self):
        """Physical positions x = g(y_k)."""
        return self.c + self.orientation * np.asarray(self.f, dtype=float)

    @property
    def is_circle(self):
        f = np.asarray(self.f, dtype=float)
        return bool(np.ptp(f) <= 1e-14 * max(1.0, np.abs(f).max()))

    def flipped(self):
        """Same set, opposite normal."""
        if self.points is not None:
            return Hypersurface(self.metric, self.c, self.f, -self.orientation, self.points[::-1])
        return Hypersurface(self.metric, self.c, -np.asarray(self.f), -self.orientation)

    def rebased(self, c_new):
        """Same set expressed as a graph over {x = c_new}."""
        g = self.graph
        return Hypersurface(self.metric, float(c_new), self.orientation * (g - c_new), self.orientation)

    def with_resolution(self, ny):
        """Resample the graph to ``ny`` points (trigonometric interpolation)."""
        if ny == self.ny:
            return self
        f = spectral_interp(self.f, y_grid(ny)) if self.ny > 1 else np.full(ny, float(self.f[0]))
        return Hypersurface(self.metric, self.c, f, self.orientation)

    def key(self):
        f = np.ascontiguousarray(np.asarray(self.f, dtype=float))
        pts = None if self.points is None else tuple(map(float, self.points))
        return (self.metric.key(), float(self.c), f.tobytes(), int(self.orientation), pts)

    def chart_height(self):
        return chart_height(self.metric, self.c)


def chart_height(metric, c):
    """Fermi chart height: min(pi/2, distance from the base to a wall)."""
    if metric.dim == 1:
        return np.pi / 2
    lo, hi = metric.x_walls
    return float(min(np.pi / 2, c - lo, hi - c))


def geodesic_circle(metric, c, ny=32, orientation=1) -> Hypersurface:
    """The circle {x = c}; in 1-D (``metric.dim == 1``) the antipodal pair
    {c, c + pi}."""
    if metric.dim == 1:
        return point_pair(metric, c, c + np.pi)
    lo, hi = metric.x_walls
    if not lo < c < hi:
        raise ValueError("circle outside the cylinder")
    return Hypersurface(metric, float(c), np.zeros(int(ny)), int(orientation))


def point_pair(metric, p1, p2) -> Hypersurface:
    if metric.dim != 1:
        raise ValueError("point pairs live on the 1-D circle")
    p1 = float(p1) % TWO_PI
    p2 = float(p2) % TWO_PI
    if p1 == p2:
        raise ValueError("points must be distinct")
    return Hypersurface(metric, 0.0, np.zeros(1), 1, (p1, p2))


def normal_graph(base: Hypersurface, f) -> Hypersurface:
    """Push ``base`` along its normal by ``f`` (translation in x)."""
    if base.metric.dim == 1:
        raise ValueError("normal_graph applies to the 2-D model")
    f = np.broadcast_to(np.asarray(f, dtype=float), (base.ny,)).copy() if np.ndim(f) == 0 else np.asarray(f, dtype=float)
    if f.size != base.ny:
        base = base.with_resolution(f.size)
    total = np.asarray(base.f, dtype=float) + f
    eta = base.chart_height()
    if np.max(np.abs(total)) >= eta:
        raise ValueError(f"graph exits the Fermi chart (sup|f| >= eta = {eta:.6g})")
    return Hypersurface(base.metric, base.c, total, base.orientation)


@dataclass(frozen=True)
class FermiChart:
    """(s, z) -> (x, y) = (c + orientation z, s) for the circle {x = c}."""

    base: Hypersurface
    eta: float

    def forward(self, s, z):
        z = np.asarray(z, dtype=float)
        if np.any(np.abs(z) > self.eta):
            raise ValueError("point outside the chart")
        return self.base.c + self.base.orientation * z, np.mod(s, TWO_PI)

    def inverse(self, x, y):
        z = self.base.orientation * (np.asarray(x, dtype=float) - self.base.c)
        return np.mod(y, TWO_PI), z


def fermi_chart(base: Hypersurface) -> FermiChart:
    if not base.is_circle or np.any(np.asarray(base.f) != 0):
        base = Hypersurface(base.metric, base.c, np.zeros(base.ny), base.orientation)
    return FermiChart(base, base.chart_height())


@dataclass(frozen=True, eq=False)
class CurvatureData:
    """Pointwise curvature along a graph, on the graph's y-grid."""

    H: np.ndarray
    A2: np.ndarray
    ric: np.ndarray
    area: float
    orientation: int
    speed: np.ndarray  # ds/dy


def curvature_data(sigma: Hypersurface) -> CurvatureData:
    """Mean curvature, |A|^2, Ric(nu, nu) and length of a graph.

    For x = phi(y) in dx^2 + h^2 dy^2 with S = sqrt(phi'^2 + h^2),
    H = (phi'' h - h'(h^2 + 2 phi'^2)) / S^3 relative to nu = +x.
    """
    m = sigma.metric
    if m.dim == 1:
        n = 2
        return CurvatureData(np.zeros(n), np.zeros(n), np.zeros(n), 2.0, sigma.orientation, np.ones(n))
    g = sigma.graph
    g1 = spectral_derivative(g, 1)
    g2 = spectral_derivative(g, 2)
    h, dh = m.h(g), m.dh(g)
    S = np.sqrt(g1 * g1 + h * h)
    H = (g2 * h - dh * (h * h + 2 * g1 * g1)) / S**3
    H = sigma.orientation * H
    area = float(np.sum(S) * TWO_PI / g.size)
    return CurvatureData(H=H, A2=H * H, ric=m.K(g), area=area,
                         orientation=sigma.orientation, speed=S)


def area(sigma: Hypersurface) -> float:
    return curvature_data(sigma).area


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Lowest eigenpairs of the Jacobi quadratic form on a circle.

    ``vectors[:, i]`` are samples on the y-grid, orthonormal for the
    surface measure h dy.
    """

    values: np.ndarray
    vectors: np.ndarray
    index: int
    nullity: int
    y: np.ndarray


def _fourier_diff_matrix(n):
    eye = np.eye(n)
    return np.column_stack([spectral_derivative(eye[:, j]) for j in range(n)])


def jacobi_spectrum(sigma: Hypersurface, m=4, ny=None, null_tol=1e-8) -> SpectralData:
    """Dense eigensolve of int |grad f|^2 - (Ric + |A|^2) f^2 on a minimal circle.

    The Fourier collocation discretization is exact for modes below the
    Nyquist frequency, so the returned values equal k^2/h(c)^2 - K(c) to
    rounding.
    """
    met = sigma.metric
    if met.dim != 2:
        raise ValueError("Jacobi spectra are defined for the 2-D model")
    if not sigma.is_circle:
        raise ValueError("jacobi_spectrum needs a geodesic circle")
    c = float(sigma.graph[0])
    if abs(met.dh(c)) > 1e-12:
        raise ValueError("circle is not minimal (h'(c) != 0)")
    n = int(ny or max(sigma.ny, 33))
    n = max(n, 2 * m + 3)
    n += 1 - n % 2  # odd: no Nyquist mode, whose derivative would vanish
    h = met.h(c)
    w = TWO_PI / n * h  # surface measure weights
    D = _fourier_diff_matrix(n)
    pot = met.K(c) + 0.0  # |A|^2 = 0 on minimal circles
    Q = (D.T @ D) * (TWO_PI / n) / h - pot * w * np.eye(n)
    Q = 0.5 * (Q + Q.T)
    vals, vecs = linalg.eigh(Q, w * np.eye(n))
    vals, vecs = vals[:m], vecs[:, :m]
    vecs = _canonical_basis(vals, vecs, n)
    # normalise in h dy
    for j in range(m):
        nrm = np.sqrt(np.sum(vecs[:, j] ** 2) * w)
        vecs[:, j] /= nrm
    index = int(np.sum(vals < -null_tol))
    nullity = int(np.sum(np.abs(vals) <= null_tol))
    return SpectralData(values=vals, vectors=vecs, index=index, nullity=nullity, y=y_grid(n))


def _canonical_basis(vals, vecs, n):
    """Rotate degenerate clusters to (cos ky, sin ky) and fix signs."""
    vecs = vecs.copy()
    refl = (-np.arange(n)) % n
    i = 0
    m = len(vals)
    while i < m:
        j = i + 1
        while j < m and abs(vals[j] - vals[i]) < 1e-8 * max(1.0, abs(vals[i])):
            j += 1
        if j - i == 2:
            V = vecs[:, i:j]
            E = 0.5 * (V + V[refl])  # even parts
            _, _, vt = np.linalg.svd(E, full_matrices=False)
            rot = vt.T
            V = V @ rot
            vecs[:, i:j] = V
        i = j
    for k in range(m):
        v = vecs[:, k]
        # even modes positive at y = 0, odd modes positive slope at y = 0
        ref = v[0] if abs(v[0]) > 1e-8 * np.abs(v).max() else v[1] - v[-1]
        if ref < 0:
            vecs[:, k] = -v
    return vecs


def canonical_family(sigma: Hypersurface, spec: SpectralData, r, v) -> Hypersurface:
    """Graph of r * sum_i v_i u_i over ``sigma``; u_i are the first k
    eigenfunctions, k = len(v)."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    k = v.size
    if k > spec.vectors.shape[1]:
        raise ValueError("not enough eigenfunctions for this family")
    if float(np.linalg.norm(v)) > 1.0 + 1e-12:
        raise ValueError("v must lie in the closed unit ball")
    vec = spec.vectors[:, :k] @ v
    f = r * vec
    if f.size != sigma.ny:
        f = spectral_interp(f, sigma.y)
    base = Hypersurface(sigma.metric, sigma.c, np.zeros(sigma.ny), sigma.orientation)
    try:
        return normal_graph(base, np.asarray(sigma.f) + f)
    except ValueError as exc:
        raise ValueError("family member leaves the admissible neighbourhood") from exc


def write_hypersurface_csv(sigma: Hypersurface, path):
    """CSV of (y, f) with a commented header carrying a, b, c, orientation."""
    m = sigma.metric
    with open(path, "w", newline="") as fh:
        fh.write(f"# a={m.a:.17g} b={m.b:.17g} c={sigma.c:.17g} orientation={sigma.orientation:d}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y", "f"])
        for y, f in zip(sigma.y, np.asarray(sigma.f, dtype=float)):
            w.writerow([f"{y:.17g}", f"{f:.17g}"])
    return path


def read_hypersurface_csv(path, x_walls=(-TWO_PI, TWO_PI)) -> Hypersurface:
    with open(path) as fh:
        head = fh.readline().lstrip("#").split()
        kv = dict(item.split("=") for item in head)
        rows = list(csv.reader(fh))[1:]
    f = np.array([float(r[1]) for r in rows])
    met = WarpedMetric(float(kv["a"]), float(kv["b"]), 2, tuple(x_walls))
    return Hypersurface(met, float(kv["c"]), f, int(kv["orientation"]))
