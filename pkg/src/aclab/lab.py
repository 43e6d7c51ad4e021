"""Run configuration, experiments, sweeps and report emission.

Usage::

    aclab <kind> [--config FILE] [--eps 0.08,0.04] [--res 8] [--seed 1] [--out DIR] [--set key=value ...]

The configuration file holds flat ``key = value`` lines (``#`` starts a
comment); command-line flags override it.  Without ``--out`` results go to
``$ACLAB_OUTPUT_ROOT/<kind>-<config hash>`` (default root ``aclab-runs``).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__

KINDS = ("profiles", "dirichlet", "balanced-energy", "expansion-order", "variation-check", "spectrum",
         "mountain-pass", "strong-minmax", "descend", "diagnose")
OUTPUT_ENV = "ACLAB_OUTPUT_ROOT"
DEFAULT_ROOT = "aclab-runs"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

def fmt(v):
    """17 significant digits for floats; plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(fmt(x) for x in v)
    return str(v)


def _as_items(report):
    if isinstance(report, dict):
        return list(report.items())
    if dataclasses.is_dataclass(report):
        out = []
        for f in dataclasses.fields(report):
            v = getattr(report, f.name)
            if isinstance(v, (int, float, str, bool, np.floating, np.integer)):
                out.append((f.name, v))
        return out
    raise TypeError(f"cannot emit {type(report).__name__}")


def record_line(report):
    """One ``key=value`` record; reports with a ``record()`` method use it."""
    if hasattr(report, "record") and callable(report.record):
        return report.record()
    return " ".join(f"{k}={fmt(v)}" for k, v in _as_items(report))


def emit(report, path, fmt_="structured-text", append=True):
    """Write a report as a structured-text line or a CSV row (header on
    first write).  Output is bit-stable for identical inputs."""
    mode = "a" if append else "w"
    if fmt_ == "structured-text":
        with open(path, mode) as fh:
            fh.write(record_line(report) + "\n")
    elif fmt_ == "csv":
        items = _as_items(report)
        new = not (append and os.path.exists(path))
        with open(path, mode, newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new:
                w.writerow([k for k, _ in items])
            w.writerow([fmt(v) for _, v in items])
    else:
        raise ValueError("format must be 'csv' or 'structured-text'")
    return path


def write_csv(path, rows, columns=None):
    """Rows of dicts to CSV with a fixed column order."""
    rows = list(rows)
    columns = columns or (list(rows[0].keys()) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c, "")) for c in columns])
    return path


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    kind: str
    a: float = 2.0
    b: float = 0.3
    one_d: bool = False
    eps: tuple = (0.05,)
    resolution: int = 8
    ny: int = 16
    c: float = 0.0
    r: float = 0.2
    delta: float = 0.1
    m: int = 33
    trials: int = 10
    seed: int = 0
    out: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {', '.join(KINDS)} (got {self.kind!r})")
        eps = tuple(float(e) for e in self.eps)
        if not eps:
            raise ConfigError("eps list is empty")
        if any(e <= 0 for e in eps):
            raise ConfigError("eps list must be positive")
        if any(e2 >= e1 for e1, e2 in zip(eps[:-1], eps[1:])):
            raise ConfigError("eps list must be strictly descending")
        self.eps = eps
        if int(self.resolution) < 8:
            raise ConfigError("resolution must be at least 8 nodes per smallest eps")
        if not self.one_d and not self.a > self.b >= 0:
            raise ConfigError("metric needs a > b >= 0")
        if self.m < 3:
            raise ConfigError("path needs m >= 3 nodes")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def canonical(self):
        items = [(f.name, getattr(self, f.name)) for f in dataclasses.fields(self) if f.name not in ("out", "extra")]
        items += sorted(self.extra.items())
        return "\n".join(f"{k}={fmt(v)}" for k, v in items)

    def hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def get(self, key, default=None, cast=float):
        v = self.extra.get(key, default)
        return v if v is None else cast(v)


_FIELD_CASTS = {"a": float, "b": float, "c": float, "r": float, "delta": float, "resolution": int, "ny": int,
                "m": int, "trials": int, "seed": int}


def _parse_bool(v):
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def parse_config_text(text):
    out = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def build_config(kind, values: dict) -> RunConfig:
    kw = {"kind": kind}
    extra = {}
    for k, v in values.items():
        if k == "kind":
            continue
        if k == "eps":
            kw["eps"] = tuple(float(x) for x in str(v).replace(";", ",").split(",") if x.strip())
        elif k == "one_d":
            kw["one_d"] = _parse_bool(v)
        elif k == "out":
            kw["out"] = str(v)
        elif k in _FIELD_CASTS:
            try:
                kw[k] = _FIELD_CASTS[k](v)
            except ValueError as exc:
                raise ConfigError(f"{k}: {exc}") from exc
        else:
            extra[k] = str(v)
    kw["extra"] = extra
    return RunConfig(**kw)


def load_config(kind, path=None, overrides=None) -> RunConfig:
    values = {}
    if path:
        with open(path) as fh:
            values.update(parse_config_text(fh.read()))
        if "kind" in values and kind is None:
            kind = values["kind"]
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if kind is None:
        raise ConfigError("experiment kind missing")
    return build_config(kind, values)


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Manifest:
    config_hash: str
    version: str
    timings: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    arbitration: list = field(default_factory=list)
    files: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def add_file(self, outdir, name):
        self.files[name] = sha256_file(os.path.join(outdir, name))

    def text(self):
        buf = io.StringIO()
        buf.write(f"config_hash={self.config_hash}\nversion={self.version}\n")
        for k, v in sorted(self.tolerances.items()):
            buf.write(f"tolerance {k}={fmt(v)}\n")
        for k, v in self.timings.items():
            buf.write(f"time {k}={v:.3f}\n")
        for a in self.arbitration:
            buf.write(f"arbitration {a}\n")
        for name, ok, detail in self.checks:
            buf.write(f"check {name}={'PASS' if ok else 'FAIL'} {detail}\n")
        for name in sorted(self.files):
            buf.write(f"file {name} sha256={self.files[name]}\n")
        return buf.getvalue()

    def write(self, outdir):
        path = os.path.join(outdir, "manifest.txt")
        with open(path, "w") as fh:
            fh.write(self.text())
        return path


def verify_manifest(outdir):
    """True if every listed file exists with the recorded hash and every
    file in the directory (besides the manifest) is listed."""
    listed = {}
    with open(os.path.join(outdir, "manifest.txt")) as fh:
        for line in fh:
            if line.startswith("file "):
                _, name, h = line.split()
                listed[name] = h.split("=", 1)[1]
    present = {n for n in os.listdir(outdir) if n != "manifest.txt"}
    if present != set(listed):
        return False
    return all(sha256_file(os.path.join(outdir, n)) == h for n, h in listed.items())


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

class _Run:
    def __init__(self, cfg: RunConfig, outdir):
        self.cfg = cfg
        self.outdir = outdir
        self.manifest = Manifest(cfg.hash(), __version__)
        self.written = []

    def path(self, name):
        if name not in self.written:
            self.written.append(name)
        return os.path.join(self.outdir, name)

    def check(self, name, ok, detail=""):
        self.manifest.checks.append((name, bool(ok), detail))

    def timed(self, name, fn, *a, **k):
        t = time.perf_counter()
        out = fn(*a, **k)
        self.manifest.timings[name] = self.manifest.timings.get(name, 0.0) + time.perf_counter() - t
        return out

    def metric(self):
        from .geometry import circle_1d, make_warped_torus
        return circle_1d() if self.cfg.one_d else make_warped_torus(self.cfg.a, self.cfg.b)


def _exp_profiles(run: _Run):
    from .profiles1d import constants, profile_set, write_profile_csv
    c = run.timed("constants", constants)
    P = run.timed("profile_set", profile_set)
    for k, t in P.items():
        write_profile_csv(t, run.path(f"profile_{k}.csv"))
    emit(c, run.path("constants.txt"), append=False)
    run.manifest.tolerances.update(sigma0=1e-12, residual=1e-8)
    run.check("sigma0", abs(c.sigma0 - math.sqrt(2) / 3) <= 1e-12, fmt(c.sigma0))
    for k, t in P.items():
        if k != "heteroclinic":
            run.check(f"residual_{k}", t.residual <= 1e-8, fmt(t.residual))


def _exp_dirichlet(run: _Run):
    from . import elliptic as el
    met = run.metric()
    x0 = run.cfg.get("x0", 0.0)
    x1 = run.cfg.get("x1", math.pi)
    rows = []
    for eps in run.cfg.eps:
        dom = el.discretize(met, (x0, x1), eps, resolution=run.cfg.resolution)
        u = run.timed("solve_dirichlet", el.solve_dirichlet, dom, eps)
        el.write_field_slice(run.path(f"dirichlet_eps{eps:g}.csv"), u)
        el.save_field(run.path(f"dirichlet_eps{eps:g}.bin"), u)
        rows.append(dict(eps=eps, energy=u.energy, residual=u.residual, iterations=u.iterations))
        run.check(f"residual_eps{eps:g}", u.residual <= el.RES_TOL, fmt(u.residual))
    write_csv(run.path("dirichlet.csv"), rows)
    run.manifest.tolerances.update(residual=el.RES_TOL)


def _sigma_for(run):
    from .geometry import geodesic_circle
    return geodesic_circle(run.metric(), run.cfg.c, run.cfg.ny)


def _exp_balanced(run: _Run):
    from .energy import Resolution, append_energy_ledger, balanced_energy
    from .profiles1d import SIGMA0
    sigma = _sigma_for(run)
    path = run.path("energy_ledger.csv")
    if os.path.exists(path):
        os.remove(path)
    for eps in run.cfg.eps:
        rep = run.timed("balanced_energy", balanced_energy, sigma, eps, Resolution(run.cfg.resolution))
        append_energy_ledger(path, rep)
        if run.cfg.one_d:
            target = 4 * SIGMA0
            run.check(f"B_eps{eps:g}", abs(rep.B - target) / target <= 1e-2, fmt(rep.B))
    run.manifest.tolerances.update(relative=1e-2)


def _exp_expansion(run: _Run):
    from .energy import Resolution
    tab = run.timed("sweep", sweep, run.cfg, "expansion")
    write_csv(run.path("expansion_order.csv"), tab.rows)
    emit(dict(quantity=tab.quantity, slope=tab.slope), run.path("expansion_order.txt"), append=False)
    run.check("slope", tab.slope >= 2.5, fmt(tab.slope))
    run.manifest.tolerances.update(slope=2.5)
    del Resolution


def _exp_variation(run: _Run):
    from .energy import Resolution
    from .variation import VariationReport, arbitrate_first_variation_sign, random_admissible_pair, variation_report
    met = run.metric()
    rng = np.random.default_rng(run.cfg.seed)
    eps = run.cfg.eps[0]
    res = Resolution(run.cfg.resolution)
    worst = 0.0
    path = run.path("variation_reports.txt")
    rows = []
    with open(path, "w"):
        pass
    for t in range(run.cfg.trials):
        sigma, f = random_admissible_pair(met, rng, ny=max(run.cfg.ny, 32))
        rep: VariationReport = run.timed("variation_report", variation_report, sigma, f, eps, res, second=False)
        emit(rep, path)
        a, r = rep.discrepancies["first_analytic_vs_fd"]
        worst = max(worst, r)
        rows.append(dict(trial=t, c=sigma.c, analytic=rep.first_analytic, fd=rep.first_fd, abs=a, rel=r))
    write_csv(run.path("variation_discrepancy.csv"), rows)
    arb = run.timed("arbitration", arbitrate_first_variation_sign, met, eps)
    run.manifest.arbitration.append(arb.record())
    run.check("first_variation_oracle", worst <= 1e-3, fmt(worst))
    run.manifest.tolerances.update(first_variation_relative=1e-3)


def _exp_spectrum(run: _Run):
    from .geometry import geodesic_circle, jacobi_spectrum
    met = run.metric()
    rows = []
    for c in (0.0, math.pi):
        spec = run.timed("jacobi_spectrum", jacobi_spectrum, geodesic_circle(met, c, 33), 5)
        h = met.h(c)
        ks = np.array([0, 1, 1, 2, 2])
        exact = ks**2 / h**2 - met.K(c)
        for i, (v, e) in enumerate(zip(spec.values, exact)):
            rows.append(dict(c=c, i=i, value=v, closed_form=e, error=abs(v - e)))
        run.check(f"spectrum_c{c:g}", np.max(np.abs(spec.values - exact)) <= 1e-6, fmt(np.max(np.abs(spec.values - exact))))
        run.check(f"index_c{c:g}", spec.index == (1 if c == 0.0 else 0), f"index={spec.index} nullity={spec.nullity}")
    write_csv(run.path("spectrum.csv"), rows)


def _exp_mountain_pass(run: _Run):
    from . import elliptic as el
    from .energy import Resolution
    from .minmax import index_one_testbed, mountain_pass
    eps = run.cfg.eps[0]
    space, fam = index_one_testbed(eps, m=run.cfg.m, ny=run.cfg.ny, res=Resolution(run.cfg.resolution),
                                   metric=run.metric())
    res = run.timed("mountain_pass", mountain_pass, space, fam)
    emit(res, run.path("minmax_result.txt"), append=False)
    write_csv(run.path("minmax_iterations.csv"), res.log, ["step", "d_estimate", "max_gradient", "argmax"])
    if res.saddle is not None:
        el.save_field(run.path("saddle_field.bin"), res.saddle)
    B0 = space.energy(np.zeros(space.ny))
    run.check("d_eps_vs_B", abs(res.d_eps - B0) / B0 <= 1e-2, fmt(res.d_eps))
    run.check("saddle_residual", res.saddle_residual <= 1e-10, fmt(res.saddle_residual))
    run.check("negative_eigenvalues", res.negative_count == 1, str(res.negative_count))
    run.check("hausdorff", res.hausdorff <= 0.05, fmt(res.hausdorff))
    run.manifest.tolerances.update(relative=1e-2, residual=1e-10, hausdorff=0.05, gradient=1e-6)
    if len(run.cfg.eps) > 1:
        # d_eps over the whole eps list on a coarser string (the refinement
        # check bounds the node-count effect)
        from .geometry import curvature_data, geodesic_circle
        from .profiles1d import SIGMA0
        m = run.cfg.get("sweep_m", 9, int)
        rows = []
        for e in run.cfg.eps:
            sp, fm = index_one_testbed(e, m=m, ny=run.cfg.ny, res=Resolution(run.cfg.resolution),
                                       metric=run.metric())
            r = run.timed("mountain_pass_sweep", mountain_pass, sp, fm, polish=False)
            rows.append(dict(eps=e, m=m, d_eps=r.d_eps, grad_norm=r.grad_norm))
        limit = 2 * SIGMA0 * curvature_data(geodesic_circle(run.metric(), 0.0, run.cfg.ny)).area
        gaps = [abs(row["d_eps"] - limit) for row in rows]
        for row, g in zip(rows, gaps):
            row["gap"] = g
        write_csv(run.path("minmax_sweep.csv"), rows)
        run.check("sweep_monotone", all(b < a for a, b in zip(gaps[:-1], gaps[1:])), fmt(gaps))


def _exp_strong(run: _Run):
    from .energy import Resolution
    from .minmax import GraphSpace, strong_minmax_audit
    space = GraphSpace(run.metric(), 0.0, run.cfg.eps[0], run.cfg.ny, Resolution(run.cfg.resolution))
    rep = run.timed("audit", strong_minmax_audit, space, r=run.cfg.r, trials=run.cfg.trials, seed=run.cfg.seed)
    emit(rep, run.path("audit.txt"), append=False)
    write_csv(run.path("audit_trials.csv"), [dict(trial=i, kind=k, sup=s) for i, (k, s) in
                                             enumerate(zip(rep.kinds, rep.sups))])
    with open(run.path("audit_discarded.txt"), "w") as fh:
        for d in rep.discarded:
            fh.write(d + "\n")
    run.check("audit", rep.passed, fmt(min(rep.sups)) if rep.sups else "no trials")


def _descent(run: _Run):
    from .energy import Resolution
    from .minmax import DescentStop, GraphSpace, descend
    space = GraphSpace(run.metric(), run.cfg.c, run.cfg.eps[0], run.cfg.ny, Resolution(run.cfg.resolution))
    start = run.cfg.get("start", 0.3)
    steps = run.cfg.get("max_steps", 60, int)
    f0 = np.full(space.ny, start)
    traj, space = run.timed("descend", descend, space, f0, DescentStop(grad_tol=1e-4, max_steps=steps))
    rows = [dict(step=s.step, c=s.c, mean_x=s.c + float(np.mean(s.f)), energy=s.energy, grad=s.grad_norm,
                 d=s.d, h=s.h, tau=s.tau, event=s.event) for s in traj]
    return traj, rows


def _exp_descend(run: _Run):
    from .minmax import monotone_segments
    traj, rows = _descent(run)
    write_csv(run.path("descent.csv"), rows)
    run.check("monotone", monotone_segments(traj), f"steps={len(traj)}")
    if run.cfg.get("deformation", 0, int):
        from .energy import Resolution
        from .minmax import GraphSpace, deformation_realization
        space = GraphSpace(run.metric(), run.cfg.c, run.cfg.eps[0], run.cfg.ny, Resolution(run.cfg.resolution))
        rep = run.timed("deformation", deformation_realization, space, run.cfg.r, run.cfg.delta,
                        run.cfg.trials, run.cfg.seed)
        write_csv(run.path("deformation.csv"), rep.rows())
        emit(rep, run.path("deformation.txt"), append=False)
        run.check("gradient_floor", rep.floor > 0, fmt(rep.floor))
        run.check("deformation", rep.passed, f"reached={sum(rep.reached)}/{len(rep.reached)}")


def _exp_diagnose(run: _Run):
    from .geometry import Hypersurface
    from .minmax import palais_smale_diagnostic
    traj, rows = _descent(run)
    write_csv(run.path("descent.csv"), rows)
    tail = traj[-6:]
    graphs = [Hypersurface(run.metric(), s.c, s.f, 1) for s in tail]
    from .energy import Resolution
    rep = run.timed("palais_smale", palais_smale_diagnostic, graphs, run.cfg.eps[0], Resolution(run.cfg.resolution))
    write_csv(run.path("palais_smale.csv"), rep.rows())
    emit(dict(cauchy=rep.cauchy, polished=rep.polished), run.path("palais_smale.txt"), append=False)
    run.check("cauchy", rep.cauchy, "")


_EXPERIMENTS = {
    "profiles": _exp_profiles,
    "dirichlet": _exp_dirichlet,
    "balanced-energy": _exp_balanced,
    "expansion-order": _exp_expansion,
    "variation-check": _exp_variation,
    "spectrum": _exp_spectrum,
    "mountain-pass": _exp_mountain_pass,
    "strong-minmax": _exp_strong,
    "descend": _exp_descend,
    "diagnose": _exp_diagnose,
}


def output_dir(cfg: RunConfig):
    if cfg.out:
        return cfg.out
    root = os.environ.get(OUTPUT_ENV, DEFAULT_ROOT)
    return os.path.join(root, f"{cfg.kind}-{cfg.hash()[:12]}")


def run(cfg: RunConfig):
    """Execute the experiment; returns ``(exit_status, outdir, manifest)``.

    Exit status 0 iff every in-run check passed.
    """
    outdir = output_dir(cfg)
    os.makedirs(outdir, exist_ok=True)
    r = _Run(cfg, outdir)
    with open(r.path("config.txt"), "w") as fh:
        fh.write(cfg.canonical() + "\n")
    _EXPERIMENTS[cfg.kind](r)
    for name in r.written:
        if os.path.exists(os.path.join(outdir, name)):
            r.manifest.add_file(outdir, name)
    r.manifest.write(outdir)
    ok = all(c[1] for c in r.manifest.checks)
    return (0 if ok else 1), outdir, r.manifest


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepTable:
    quantity: str
    eps: list
    values: list
    slope: float
    rows: list


def sweep(cfg: RunConfig, quantity):
    """Log-log slope of ``quantity`` against eps over the config's eps
    list: 'expansion' (weighted residual of the expansion on the circle
    x = c), 'first-variation' (|first variation| at the circle along
    f = 1) or 'gap' (|B - 2 sigma0 area| at the circle)."""
    from .energy import Resolution, balanced_energy, expansion_residual, fit_order
    from .geometry import geodesic_circle
    from .variation import first_variation
    if len(cfg.eps) < 3:
        raise ConfigError("a sweep needs at least 3 eps values")
    from .geometry import circle_1d, make_warped_torus
    met = circle_1d() if cfg.one_d else make_warped_torus(cfg.a, cfg.b)
    res = Resolution(cfg.resolution)
    vals, rows = [], []
    for eps in cfg.eps:
        if quantity == "expansion":
            sigma = geodesic_circle(met, cfg.c, 1)
            er = expansion_residual(sigma, eps, res)
            v = er.norms.c2
            rows.append(dict(eps=eps, c0=er.norms.c0, c1=er.norms.c1, c2=er.norms.c2, w12=er.norms.w12))
        elif quantity == "first-variation":
            sigma = geodesic_circle(met, cfg.c, cfg.ny)
            v = abs(first_variation(sigma, 1.0, eps, res))
            rows.append(dict(eps=eps, value=v))
        elif quantity == "gap":
            rep = balanced_energy(geodesic_circle(met, cfg.c, cfg.ny), eps, res)
            v = abs(rep.gap)
            rows.append(dict(eps=eps, B=rep.B, reference=rep.reference, value=v))
        else:
            raise ConfigError(f"unknown sweep quantity {quantity!r}")
        vals.append(v)
    use = [(e, v) for e, v in zip(cfg.eps, vals) if v > 0 and math.isfinite(v)]
    if len(use) < 3:
        raise ConfigError("fewer than 3 usable points")
    slope = fit_order([e for e, _ in use], [v for _, v in use])
    for r in rows:
        r["slope"] = slope
    return SweepTable(quantity, list(cfg.eps), vals, slope, rows)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="aclab", description="Allen-Cahn balanced-energy laboratory")
    p.add_argument("kind", choices=KINDS + ("sweep",))
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--eps", help="comma-separated descending eps list")
    p.add_argument("--res", type=int, help="nodes per eps")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--quantity", default="expansion", help="sweep quantity (expansion, first-variation, gap)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    over = {"eps": args.eps, "resolution": args.res, "seed": args.seed, "out": args.out}
    for kv in args.set:
        if "=" not in kv:
            print(f"aclab: --set expects KEY=VALUE, got {kv!r}", file=sys.stderr)
            return 2
        k, v = kv.split("=", 1)
        over[k.strip().replace("-", "_")] = v.strip()
    try:
        if args.kind == "sweep":
            cfg = load_config("expansion-order", args.config, over)
            tab = sweep(cfg, args.quantity)
            outdir = output_dir(cfg)
            os.makedirs(outdir, exist_ok=True)
            write_csv(os.path.join(outdir, f"sweep_{args.quantity}.csv"), tab.rows)
            print(f"slope={tab.slope:.17g}")
            return 0
        cfg = load_config(args.kind, args.config, over)
    except ConfigError as exc:
        print(f"aclab: invalid config: {exc}", file=sys.stderr)
        return 2
    status, outdir, man = run(cfg)
    for name, ok, detail in man.checks:
        print(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
    print(f"output: {outdir}")
    return status


if __name__ == "__main__":
    sys.exit(main())
