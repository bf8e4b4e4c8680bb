"""Experiment orchestration: configs, result tables and the headline experiments."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import toml

from . import __version__
from . import fock as fk
from . import vanhove as vh
from .correlations import BoundaryProfiles
from .davies import build_generator_direct, evolve_semigroup, semigroup_super, spectral_analysis
from .model import (CouplingMatrix, SpectralDensity, SpinBosonModel, SystemSpec, build_model,
                    load_model, model_from_config)
from .polymer import (PolymerSystem, brute_force_partition, cluster_decay_profile,
                      cluster_log_partition, fit_decay_exponent)

EXPERIMENTS = ("weak_coupling_scaling", "relaxation", "photon_bound", "vanhove_crosscheck",
               "cluster_demo")
FLAG_THRESHOLD = 0.01
# Deviations from the semigroup are accepted inside BAND_CONSTANT * lam^2.
BAND_CONSTANT = 2.0


def lab_threads():
    """Worker count: LAB_THREADS if set, else the CPU count."""
    env = os.environ.get("LAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _pmap(fn, items):
    """Map over grid points in a thread pool; results keep the input order."""
    items = list(items)
    n = min(lab_threads(), len(items)) or 1
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# ------------------------------------------------------------------ config
@dataclass
class FockSettings:
    K: int = 16
    N_max: int = 3
    scheme: str = "gauss_legendre"
    grid: str = "uniform"          # uniform | horizon | composite
    omega_max: Optional[float] = None
    segments: list = field(default_factory=list)   # tables {a, b, K, scheme}

    def build_grid(self, density: SpectralDensity, t_max=None):
        if self.grid == "uniform":
            return fk.build_mode_grid(density, self.K, self.scheme, self.omega_max)
        if self.grid == "horizon":
            return fk.horizon_mode_grid(density, self.K, t_max, self.scheme)
        if self.grid == "composite":
            segs = [(s["a"], s["b"], s["K"], s.get("scheme", "gauss_legendre"))
                    for s in self.segments]
            return fk.build_composite_grid(density, segs)
        raise ValueError(f"unknown grid kind {self.grid!r}")


@dataclass
class ExperimentConfig:
    experiment: str
    model: object = None            # path to a model TOML, or an inline model table
    lambdas: list = field(default_factory=list)
    times: list = field(default_factory=list)
    macro_times: list = field(default_factory=list)
    kappas: list = field(default_factory=lambda: [0.0])
    fock: FockSettings = field(default_factory=FockSettings)
    output: str = "results"
    seed: int = 0
    params: dict = field(default_factory=dict)
    base_dir: str = field(default=".", repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.fock, dict):
            self.fock = FockSettings(**self.fock)
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.experiment != "cluster_demo":
            if not self.times and not self.macro_times:
                raise ValueError("a time grid (times or macro_times) is required")
        if self.experiment in ("weak_coupling_scaling", "relaxation"):
            if not self.lambdas:
                raise ValueError("lambdas must be nonempty")
        if any(x == 0 for x in self.lambdas):
            raise ValueError("lambda values must be nonzero")
        if any(abs(k) > 0.2 for k in self.kappas) and self.experiment == "photon_bound":
            raise ValueError("photon bound needs |kappa| <= 0.2")

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        fockd = d["fock"]
        if fockd["omega_max"] is None:
            fockd.pop("omega_max")
        if d["model"] is None:
            d.pop("model")
        return d

    def dumps(self):
        return toml.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data, base_dir="."):
        data = dict(data)
        return cls(base_dir=str(base_dir), **data)

    @classmethod
    def loads(cls, text, base_dir="."):
        return cls.from_dict(toml.loads(text), base_dir)

    @classmethod
    def load(cls, path):
        path = Path(path)
        return cls.loads(path.read_text(), path.parent)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()

    def load_model(self) -> SpinBosonModel:
        if self.model is None:
            raise ValueError("experiment needs a model")
        if isinstance(self.model, dict):
            return model_from_config(self.model, self.base_dir)
        return load_model(Path(self.base_dir) / self.model)

    def time_points(self, lam=1.0):
        """Physical times: ``times`` if given, else macro_times / lam^2."""
        if self.times:
            return [float(t) for t in self.times]
        return [float(s) / lam ** 2 for s in self.macro_times]


# ------------------------------------------------------------------ results
@dataclass
class ResultTable:
    columns: list
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, **row):
        cut = float(row.get("norm_at_cutoff", 0.0))
        row["norm_at_cutoff"] = cut
        row["flagged"] = bool(row.get("flagged", False) or cut > FLAG_THRESHOLD)
        self.rows.append(row)

    @property
    def all_valid(self):
        return not any(r["flagged"] for r in self.rows)

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def _complex_columns(self):
        return {c for c in self.columns
                if any(isinstance(r.get(c), (complex, np.complexfloating)) for r in self.rows)}

    def _header(self):
        cplx = self._complex_columns()
        out = []
        for c in self.columns + ["norm_at_cutoff", "flagged"]:
            out += [c + "_re", c + "_im"] if c in cplx else [c]
        return out

    def csv_lines(self):
        cplx = self._complex_columns()
        lines = [self._header()]
        for r in self.rows:
            vals = []
            for c in self.columns + ["norm_at_cutoff", "flagged"]:
                v = r.get(c, "")
                if c in cplx:
                    z = complex(v) if v != "" else complex("nan")
                    vals += [repr(z.real), repr(z.imag)]
                elif isinstance(v, (float, np.floating)):
                    vals.append(repr(float(v)))
                else:
                    vals.append(str(v))
            lines.append(vals)
        return lines

    def write(self, out_dir, name):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{name}.csv", "w", newline="") as fh:
            csv.writer(fh).writerows(self.csv_lines())
        meta = dict(self.metadata)
        meta["n_rows"] = len(self.rows)
        meta["n_flagged"] = sum(r["flagged"] for r in self.rows)
        with open(out / f"{name}.json", "w") as fh:
            json.dump(_jsonable(meta), fh, indent=2, sort_keys=True)
        return out / f"{name}.csv", out / f"{name}.json"


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _metadata(cfg: ExperimentConfig, **extra):
    meta = {"experiment": cfg.experiment, "config_hash": cfg.config_hash(),
            "version": __version__, "seed": cfg.seed, "flag_threshold": FLAG_THRESHOLD}
    meta.update(extra)
    return meta


# ------------------------------------------------------------------ helpers
def trace_norm(X):
    return float(np.sum(np.linalg.svd(X, compute_uv=False)))


def operator_distance(Q, S):
    """Max over matrix units E_ij of the trace norm of (Q - S)(E_ij)."""
    d = int(round(np.sqrt(Q.shape[0])))
    Dm = Q - S
    return max(trace_norm(Dm[:, k].reshape(d, d, order="F")) for k in range(d * d))


def fit_slope(x, y):
    """Least-squares slope of log y against log x."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.unique(x).size < 2 or np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def basis_trajectories(model: SpinBosonModel, grid, N_max, vectors, times):
    """Propagate v x Omega for each system vector; returns per-vector snapshot lists."""
    H = fk.build_hamiltonian(model, grid, N_max)
    out = []
    for v in vectors:
        psi0 = fk.vacuum_state(H.space, v)
        out.append(fk.propagate_snapshots(H, psi0, times))
    return H, out


def fock_reduced_map(model: SpinBosonModel, grid, N_max, t):
    """Reduced map Q_t from the truncated field and the largest top-shell mass."""
    d = model.dim
    _, traj = basis_trajectories(model, grid, N_max, list(np.eye(d)), [t])
    states = [tr[-1] for tr in traj]
    return fk.reduced_map(states), max(s.norm_at_cutoff for s in states)


# ------------------------------------------------------------------ experiments
def run_weak_coupling_scaling(cfg: ExperimentConfig) -> ResultTable:
    base = cfg.load_model()
    gen = build_generator_direct(base)
    tasks = [(lam, s) for s in cfg.macro_times for lam in cfg.lambdas]

    def one(task):
        lam, s = task
        model = base.replace(lam=lam)
        t = s / lam ** 2
        grid = cfg.fock.build_grid(model.density, t)
        Q, cut = fock_reduced_map(model, grid, cfg.fock.N_max, t)
        S = semigroup_super(gen, model.system, lam, t)
        return dict(lam=float(lam), macro_time=float(s), t=float(t),
                    error=operator_distance(Q, S), norm_at_cutoff=cut)

    results = _pmap(one, tasks)
    table = ResultTable(["lam", "macro_time", "t", "error", "slope"])
    slopes = {}
    for s in cfg.macro_times:
        sel = [r for r in results if r["macro_time"] == float(s)]
        slopes[float(s)] = fit_slope([r["lam"] for r in sel], [r["error"] for r in sel])
    for r in results:
        table.add(slope=slopes[r["macro_time"]], **r)
    table.metadata = _metadata(cfg, slopes={str(k): v for k, v in slopes.items()},
                               K=cfg.fock.K, N_max=cfg.fock.N_max)
    return table


def _trace_distance(a, b):
    return 0.5 * trace_norm(a - b)


def run_relaxation(cfg: ExperimentConfig) -> ResultTable:
    base = cfg.load_model()
    lam = float(cfg.lambdas[0])
    model = base.replace(lam=lam)
    system = model.system
    d = model.dim
    levels = cfg.params.get("initial_levels", [d - 1, 0])
    if len(levels) != 2 or levels[0] == levels[1]:
        raise ValueError("relaxation compares two distinct initial levels")
    times = [0.0] + [t for t in cfg.time_points(lam) if t > 0]
    grid = cfg.fock.build_grid(model.density, times[-1])
    profile = BoundaryProfiles.scaled_phi(model.density, right=cfg.params.get("weyl_amplitude", 0.3),
                                          phase_right=cfg.params.get("weyl_phase", 0.7))
    vectors = [system.eigenbasis[:, i] for i in levels]
    H = fk.build_hamiltonian(model, grid, cfg.fock.N_max)

    def one(v):
        return fk.propagate_snapshots(H, fk.vacuum_state(H.space, v), times)

    traj = _pmap(one, vectors)
    gen = build_generator_direct(model)
    rep = spectral_analysis(gen)
    P0 = system.projector(0)
    band = BAND_CONSTANT * lam ** 2
    table = ResultTable(["t", "macro_time", "traj_distance", "pop_a", "pop_b", "dev_a", "dev_b",
                         "gs_dist_a", "gs_dist_b", "weyl_a", "weyl_b"])
    for k, t in enumerate(times):
        rhos = [fk.reduced_density(tr[k]) for tr in traj]
        sgs = [evolve_semigroup(gen, system, np.outer(v, v.conj()), lam, t) for v in vectors]
        pops = [np.real(np.diag(system.to_eigenbasis(r))) for r in rhos]
        table.add(t=t, macro_time=lam ** 2 * t,
                  traj_distance=_trace_distance(*rhos),
                  pop_a=" ".join(f"{p:.12g}" for p in pops[0]),
                  pop_b=" ".join(f"{p:.12g}" for p in pops[1]),
                  dev_a=_trace_distance(rhos[0], sgs[0]), dev_b=_trace_distance(rhos[1], sgs[1]),
                  gs_dist_a=_trace_distance(rhos[0], P0), gs_dist_b=_trace_distance(rhos[1], P0),
                  weyl_a=fk.weyl_expectation_fock(traj[0][k], grid, profile),
                  weyl_b=fk.weyl_expectation_fock(traj[1][k], grid, profile),
                  norm_at_cutoff=max(tr[k].norm_at_cutoff for tr in traj))
    dist = table.column("traj_distance")
    max_dev = float(max(table.column("dev_a").max(), table.column("dev_b").max()))
    table.metadata = _metadata(
        cfg, lam=lam, band=band, gap=rep.gap, initial_distance=float(dist[0]),
        final_distance=float(dist[-1]), final_ratio=float(dist[-1] / dist[0]) if dist[0] else None,
        max_semigroup_deviation=max_dev, within_band=bool(max_dev <= band),
        K=grid.K, N_max=cfg.fock.N_max)
    return table


def _photon_model(cfg):
    model = cfg.load_model()
    lam = float(cfg.lambdas[0]) if cfg.lambdas else model.lam
    return model.replace(lam=lam)


def _log_growth_fit(ts, ns):
    """Best a in N ~ a + ln(1 + t^2) and the largest relative residual."""
    ts, ns = np.asarray(ts, float), np.asarray(ns, float)
    g = np.log1p(ts ** 2)
    a = float(np.mean(ns - g))
    res = np.abs(ns - a - g) / np.where(ns > 0, ns, 1.0)
    return a, float(res.max())


def run_photon_bound(cfg: ExperimentConfig) -> ResultTable:
    model = _photon_model(cfg)
    times = cfg.time_points(model.lam or 1.0)
    use_fock = cfg.params.get("fock", True) and not model.density.is_zero
    closed = model.dim == 1
    vm = vh.VanHoveModel(model.density, model.lam * float(np.abs(model.D[0, 0]))) if closed else None
    snaps = None
    grid = None
    if use_fock:
        grid = cfg.fock.build_grid(model.density, max(times))
        H = fk.build_hamiltonian(model, grid, cfg.fock.N_max)
        v0 = model.system.eigenbasis[:, 0]
        snaps = fk.propagate_snapshots(H, fk.vacuum_state(H.space, v0), times)
    table = ResultTable(["t", "kappa", "genfun_fock", "mean_N_fock", "genfun_closed",
                         "mean_N_closed"])
    for k, t in enumerate(times):
        n_closed = vh.mean_photon_number(vm, t) if closed else float("nan")
        for kap in cfg.kappas:
            row = dict(t=t, kappa=float(kap))
            if snaps is not None:
                row.update(genfun_fock=fk.photon_moment(snaps[k], kap).real,
                           mean_N_fock=fk.mean_photon_number(snaps[k]),
                           norm_at_cutoff=snaps[k].norm_at_cutoff)
            else:
                row.update(genfun_fock=float("nan"), mean_N_fock=float("nan"))
            if closed:
                row.update(genfun_closed=float(np.exp(np.expm1(kap) * n_closed)),
                           mean_N_closed=n_closed)
            else:
                row.update(genfun_closed=float("nan"), mean_N_closed=float("nan"))
            table.add(**row)
    extra = {}
    if closed and len(times) > 1:
        ns = [vh.mean_photon_number(vm, t) for t in times]
        a, resid = _log_growth_fit(times, ns)
        extra = {"log_growth_offset": a, "log_growth_residual": resid,
                 "mean_N_final": ns[-1], "mean_N_limit": vm.profile_phi_over_omega_sq_norm * 2}
    table.metadata = _metadata(cfg, lam=model.lam, fock=bool(use_fock), **extra)
    return table


def run_vanhove_crosscheck(cfg: ExperimentConfig) -> ResultTable:
    model = _photon_model(cfg)
    if model.dim != 1:
        raise ValueError("the van Hove cross-check needs a single-level system")
    times = sorted(set([0.0] + cfg.time_points(model.lam or 1.0)))
    coupling = model.lam * float(np.real(model.D[0, 0]))
    vm = vh.VanHoveModel(model.density, coupling)
    kappa = float(cfg.kappas[0]) if cfg.kappas else 0.0
    profile = BoundaryProfiles.scaled_phi(model.density, right=cfg.params.get("weyl_amplitude", 0.3),
                                          phase_right=cfg.params.get("weyl_phase", 0.7))
    static = model.density.is_zero or coupling == 0
    grid = cfg.fock.build_grid(model.density, max(max(times), 1e-9)) if not model.density.is_zero \
        else None
    if grid is not None:
        H = fk.build_hamiltonian(model, grid, cfg.fock.N_max)
        snaps = fk.propagate_snapshots(H, fk.vacuum_state(H.space, [1.0]), times)
    table = ResultTable(["t", "mean_N_fock", "mean_N_closed", "genfun_fock", "genfun_closed",
                         "weyl_fock", "weyl_closed", "rel_dev"])
    worst = 0.0
    for k, t in enumerate(times):
        if grid is None:
            nf, gf, wf, cut = 0.0, 1.0 + 0j, 1.0 + 0j, 0.0
        else:
            s = snaps[k]
            nf, gf, cut = fk.mean_photon_number(s), fk.photon_moment(s, kappa), s.norm_at_cutoff
            wf = fk.weyl_expectation_fock(s, grid, profile)
        if static:
            nc, gc = 0.0, 1.0 + 0j
            wc = vh.weyl_expectation(vm, profile, 0.0) if grid is not None else 1.0 + 0j
        else:
            nc = vh.mean_photon_number(vm, t)
            gc = complex(np.exp(np.expm1(kappa) * nc))
            wc = vh.weyl_expectation(vm, profile, t)
        dev = max(abs(gf - gc) / abs(gc), abs(wf - wc) / abs(wc),
                  abs(nf - nc) / nc if nc > 0 else abs(nf))
        worst = max(worst, dev)
        table.add(t=t, mean_N_fock=nf, mean_N_closed=nc, genfun_fock=complex(gf),
                  genfun_closed=complex(gc), weyl_fock=complex(wf), weyl_closed=complex(wc),
                  rel_dev=float(dev), norm_at_cutoff=cut)
    table.metadata = _metadata(cfg, max_relative_deviation=worst, kappa=kappa,
                               K=grid.K if grid is not None else 0, N_max=cfg.fock.N_max)
    return table


def random_weights(rng, n, max_diameter=2, scale=1e-3):
    """Complex weights on subsets of {1..n} with span at most max_diameter."""
    from itertools import combinations
    w = {}
    for r in range(1, max_diameter + 2):
        for A in combinations(range(1, n + 1), r):
            if A[-1] - A[0] <= max_diameter:
                z = rng.normal() + 1j * rng.normal()
                w[A] = scale * z / np.sqrt(2) * 0.5 ** (r - 1)
    return w


def run_cluster_demo(cfg: ExperimentConfig) -> ResultTable:
    p = cfg.params
    sizes = p.get("sizes", [4, 6, 8])
    draws = int(p.get("draws", 5))
    cap = int(p.get("cluster_size_cap", 5))
    scale = float(p.get("scale", 1e-3))
    tasks = [(n, k) for n in sizes for k in range(draws)]

    def one(task):
        n, k = task
        rng = np.random.default_rng([cfg.seed, n, k])
        sysm = PolymerSystem(n, random_weights(rng, n, scale=scale))
        res = cluster_log_partition(sysm, cap)
        z = brute_force_partition(sysm)
        return dict(n=n, draw=k, worst_ratio=res.kp.worst_ratio, log_partition=complex(res.value),
                    abs_error=abs(np.exp(res.value) - z), tail_bound=res.truncation_bound,
                    flagged=not res.kp.satisfied)

    table = ResultTable(["n", "draw", "worst_ratio", "log_partition", "abs_error", "tail_bound"])
    for r in _pmap(one, tasks):
        table.add(**r)
    # decay of cluster weights for long-range pair weights
    c = float(p.get("decay_strength", 0.01))
    n = int(p.get("decay_n", 16))
    w = {(a, b): c * (b - a + 1) ** -3.0 for a in range(1, n + 1) for b in range(a + 1, n + 1)}
    ms = [2, 4, 8]
    S = cluster_decay_profile(PolymerSystem(n, w), ms, size_cap=int(p.get("decay_size_cap", 3)))
    table.metadata = _metadata(cfg, max_abs_error=float(table.column("abs_error").max()),
                               decay_m=ms, decay_sums=S.tolist(),
                               decay_exponent=fit_decay_exponent(ms, S))
    return table


RUNNERS = {"weak_coupling_scaling": run_weak_coupling_scaling, "relaxation": run_relaxation,
           "photon_bound": run_photon_bound, "vanhove_crosscheck": run_vanhove_crosscheck,
           "cluster_demo": run_cluster_demo}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ResultTable:
    table = RUNNERS[cfg.experiment](cfg)
    if out_dir is not None:
        table.write(out_dir, cfg.experiment)
    return table
