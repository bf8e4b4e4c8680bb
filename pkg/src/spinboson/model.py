"""Spin-boson model data: system Hamiltonian, coupling, spectral density, couplings."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateSpectrum, NegativeDensity, NonHermitianCoupling

RATE_FLOOR = 1e-12
DEFAULT_DEGENERACY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Non-degenerate finite-level Hamiltonian given by its spectral decomposition.

    ``eigenbasis`` holds eigenvectors as columns; the identity is used when
    the energies are given directly in the eigenbasis.
    """

    eigenvalues: np.ndarray
    eigenbasis: Optional[np.ndarray] = None
    degeneracy_tol: float = DEFAULT_DEGENERACY_TOL

    def __post_init__(self):
        e = np.asarray(self.eigenvalues, dtype=float).reshape(-1)
        if e.size == 0:
            raise ValueError("system needs at least one level")
        if self.degeneracy_tol < 0:
            raise ValueError("degeneracy_tol must be nonnegative")
        gaps = np.diff(e)
        if np.any(gaps <= self.degeneracy_tol):
            if np.any(gaps < -self.degeneracy_tol):
                raise ValueError("eigenvalues must be sorted increasingly")
            raise DegenerateSpectrum(
                f"eigenvalues closer than degeneracy_tol={self.degeneracy_tol:g}")
        U = np.eye(e.size, dtype=complex) if self.eigenbasis is None else \
            np.asarray(self.eigenbasis, dtype=complex)
        if U.shape != (e.size, e.size):
            raise ValueError("eigenbasis shape does not match the number of levels")
        if np.max(np.abs(U.conj().T @ U - np.eye(e.size))) > 1e-12:
            raise ValueError("eigenbasis is not unitary to 1e-12")
        e.flags.writeable = False
        U.flags.writeable = False
        object.__setattr__(self, "eigenvalues", e)
        object.__setattr__(self, "eigenbasis", U)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def hamiltonian(self) -> np.ndarray:
        U = self.eigenbasis
        return (U * self.eigenvalues) @ U.conj().T

    def projector(self, i: int) -> np.ndarray:
        u = self.eigenbasis[:, i]
        return np.outer(u, u.conj())

    def to_eigenbasis(self, X):
        U = self.eigenbasis
        return U.conj().T @ X @ U

    def from_eigenbasis(self, X):
        U = self.eigenbasis
        return U @ X @ U.conj().T


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    entries: np.ndarray

    def __post_init__(self):
        D = np.array(self.entries, dtype=complex)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise ValueError("coupling must be a square matrix")
        if np.max(np.abs(D - D.conj().T), initial=0.0) > 1e-12:
            raise NonHermitianCoupling("coupling matrix is not Hermitian to 1e-12")
        D.flags.writeable = False
        object.__setattr__(self, "entries", D)

    @property
    def dim(self):
        return self.entries.shape[0]


class SpectralDensity:
    """Radial spectral density J(omega) on (0, omega_max].

    Use the constructors :meth:`analytic`, :meth:`tabulated`, :meth:`callback`
    or :meth:`zero`. Densities add pointwise with ``+``.
    """

    def __init__(self, kind, omega_max, gamma=None, omega_c=None, amplitude=None,
                 grid=None, values=None, func=None):
        self.kind = kind
        self.omega_max = float(omega_max)
        self.gamma = gamma
        self.omega_c = omega_c
        self.amplitude = amplitude
        self.grid = grid
        self.values = values
        self.func = func
        if not self.omega_max > 0:
            raise ValueError("omega_max must be positive")

    # constructors -----------------------------------------------------
    @classmethod
    def analytic(cls, gamma, omega_c=1.0, amplitude=1.0, omega_max=None):
        """J(w) = amplitude * w**gamma * exp(-w / omega_c), cut at omega_max (default 40 omega_c)."""
        if not gamma > 0 or not omega_c > 0:
            raise ValueError("gamma and omega_c must be positive")
        if amplitude < 0:
            raise NegativeDensity("amplitude must be nonnegative")
        wmax = 40.0 * omega_c if omega_max is None else omega_max
        return cls("analytic", wmax, gamma=float(gamma), omega_c=float(omega_c),
                   amplitude=float(amplitude))

    @classmethod
    def tabulated(cls, grid, values):
        """Piecewise-linear interpolation of tabulated values, zero outside the grid."""
        g = np.asarray(grid, dtype=float)
        v = np.asarray(values, dtype=float)
        if g.ndim != 1 or g.shape != v.shape or g.size < 2:
            raise ValueError("grid and values must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(g) <= 0) or g[0] < 0:
            raise ValueError("grid must be increasing and nonnegative")
        if np.any(v < 0):
            raise NegativeDensity("tabulated density has negative entries")
        return cls("tabulated", g[-1], grid=g, values=v)

    @classmethod
    def callback(cls, func: Callable, omega_max: float, check_points: int = 2001):
        """Arbitrary vectorised callable; sampled once to reject negative values."""
        dens = cls("callback", omega_max, func=func)
        w = np.linspace(0, omega_max, check_points)[1:]
        vals = np.asarray(func(w), dtype=float)
        if np.any(vals < -1e-14 * max(1.0, np.max(np.abs(vals), initial=0.0))):
            raise NegativeDensity("callback density is negative somewhere on its grid")
        return dens

    @classmethod
    def zero(cls, omega_max=1.0):
        return cls.tabulated([0.0, omega_max], [0.0, 0.0])

    # evaluation -------------------------------------------------------
    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        inside = (w > 0) & (w <= self.omega_max)
        ws = np.where(inside, w, 1.0)
        if self.kind == "analytic":
            vals = self.amplitude * ws ** self.gamma * np.exp(-ws / self.omega_c)
        elif self.kind == "tabulated":
            vals = np.interp(ws, self.grid, self.values, left=0.0, right=0.0)
        else:
            vals = np.asarray(self.func(ws), dtype=float)
        return np.where(inside, vals, 0.0)

    def __add__(self, other):
        if not isinstance(other, SpectralDensity):
            return NotImplemented
        a, b = self, other
        out = SpectralDensity.callback(lambda w: a(w) + b(w), max(a.omega_max, b.omega_max))
        out._breaks = tuple(sorted(set(a.breakpoints) | set(b.breakpoints)))
        return out

    @property
    def breakpoints(self):
        """Points where J is not smooth (used as quadrature panel edges)."""
        if self.kind == "tabulated":
            return tuple(self.grid)
        return getattr(self, "_breaks", ())

    @property
    def is_zero(self):
        if self.kind == "analytic":
            return self.amplitude == 0
        if self.kind == "tabulated":
            return not np.any(self.values)
        return False

    @property
    def has_closed_form(self):
        """True when the Gamma-function correlation is exact to double precision."""
        return self.kind == "analytic" and self.omega_max >= 40.0 * self.omega_c

    def total_weight(self):
        """Integral of J over (0, omega_max]."""
        from scipy.special import gamma as G
        if self.has_closed_form:
            return self.amplitude * G(self.gamma + 1) * self.omega_c ** (self.gamma + 1)
        from .quadrature import gauss_panels, oscillatory_edges
        edges = oscillatory_edges(0.0, self.omega_max, 0.0, breaks=self.breakpoints,
                                  min_panels=64)
        return float(gauss_panels(self, edges))

    def small_omega_exponent(self):
        """Local power-law exponent of J near zero (inf if J vanishes identically there)."""
        if self.kind == "analytic":
            return self.gamma if self.amplitude > 0 else np.inf
        w1, w2 = 1e-8 * self.omega_max, 1e-6 * self.omega_max
        j1, j2 = float(self(w1)), float(self(w2))
        if j1 <= 0 or j2 <= 0:
            return np.inf
        return np.log(j2 / j1) / np.log(w2 / w1)

    def to_config(self):
        if self.kind == "analytic":
            return {"kind": "analytic", "gamma": self.gamma, "omega_c": self.omega_c,
                    "amplitude": self.amplitude, "omega_max": self.omega_max}
        if self.kind == "tabulated":
            return {"kind": "tabulated", "grid": [float(x) for x in self.grid],
                    "values": [float(x) for x in self.values]}
        raise ValueError("callback densities cannot be serialised")

    def __repr__(self):
        if self.kind == "analytic":
            return (f"SpectralDensity.analytic(gamma={self.gamma}, omega_c={self.omega_c}, "
                    f"amplitude={self.amplitude}, omega_max={self.omega_max})")
        return f"SpectralDensity({self.kind}, omega_max={self.omega_max})"


@dataclass(frozen=True, eq=False)
class BohrFrequencySet:
    frequencies: np.ndarray
    pair_lists: dict

    @classmethod
    def from_energies(cls, energies, tol=DEFAULT_DEGENERACY_TOL):
        """Cluster all differences e_i - e_j (single linkage at ``tol``).

        Pairs are stored as level indices (i, j).  Representatives of mirrored
        clusters are exact negatives of each other and the zero cluster is 0.
        """
        e = np.asarray(energies, dtype=float)
        d = e.size
        diffs = [(e[i] - e[j], i, j) for i in range(d) for j in range(d)]
        diffs.sort(key=lambda x: x[0])
        groups = [[diffs[0]]]
        for item in diffs[1:]:
            if item[0] - groups[-1][-1][0] <= tol:
                groups[-1].append(item)
            else:
                groups.append([item])
        group_of = {}
        for k, g in enumerate(groups):
            for _, i, j in g:
                group_of[(i, j)] = k
        reps = [float(np.mean([x[0] for x in g])) for g in groups]
        pair_lists = {}
        for k, g in enumerate(groups):
            vals = [x[0] for x in g]
            if min(vals) <= 0 <= max(vals):
                r = 0.0
            elif vals[0] > 0:
                r = reps[k]
            else:
                _, i, j = g[0]
                r = -reps[group_of[(j, i)]]
            pair_lists[r] = sorted((i, j) for _, i, j in g)
        freqs = np.array(sorted(pair_lists))
        return cls(freqs, pair_lists)

    def components(self, system: SystemSpec, D: np.ndarray):
        """D_eps = sum of P_e D P_e' over pairs realising eps (computational basis)."""
        De = system.to_eigenbasis(np.asarray(D, dtype=complex))
        out = {}
        for eps, pairs in self.pair_lists.items():
            block = np.zeros_like(De)
            for i, j in pairs:
                block[i, j] = De[i, j]
            out[eps] = system.from_eigenbasis(block)
        return out


@dataclass(frozen=True, eq=False)
class SpinBosonModel:
    system: SystemSpec
    coupling: CouplingMatrix
    density: SpectralDensity
    lam: float = 0.0
    kappa: complex = 0.0
    alpha: float = 1.0
    bohr: BohrFrequencySet = field(init=False, repr=False)

    def __post_init__(self):
        if self.coupling.dim != self.system.dim:
            raise ValueError("coupling and system dimensions differ")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "kappa", complex(self.kappa))
        object.__setattr__(self, "bohr", BohrFrequencySet.from_energies(
            self.system.eigenvalues, self.system.degeneracy_tol))

    @property
    def dim(self):
        return self.system.dim

    @property
    def D(self):
        return self.coupling.entries

    @property
    def eps(self):
        return abs(self.lam) ** (2 * min(self.alpha, 1.0))

    @property
    def eps_breve(self):
        return max(abs(self.lam), self.eps)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def bohr_components(self):
        return self.bohr.components(self.system, self.D)

    def to_config(self):
        U = self.system.eigenbasis
        cfg = {
            "system": {"eigenvalues": [float(x) for x in self.system.eigenvalues],
                       "degeneracy_tol": self.system.degeneracy_tol},
            "coupling": {"matrix": _matrix_to_pairs(self.D)},
            "density": self.density.to_config(),
            "dynamics": {"lambda": float(self.lam), "kappa_re": self.kappa.real,
                         "kappa_im": self.kappa.imag, "alpha": float(self.alpha)},
        }
        if not np.allclose(U, np.eye(self.dim), atol=0, rtol=0):
            cfg["system"]["eigenbasis"] = _matrix_to_pairs(U)
        return cfg


def build_model(system, coupling, density, lam, kappa=0.0, alpha=1.0) -> SpinBosonModel:
    """Assemble a validated model; components validate themselves on construction."""
    if not isinstance(coupling, CouplingMatrix):
        coupling = CouplingMatrix(coupling)
    if not isinstance(system, SystemSpec):
        system = SystemSpec(system)
    return SpinBosonModel(system, coupling, density, float(lam), complex(kappa), float(alpha))


@dataclass
class FGRReport:
    connected: bool
    chains: dict


def check_fgr_connectivity(model: SpinBosonModel, jhat, rate_floor=RATE_FLOOR) -> FGRReport:
    """Check that every level decays to the ground level along positive rates.

    ``jhat`` is a JumpRates object or a d x d array with jhat[i, j] = j(e_i, e_j).
    Chains list level indices from the level down to 0.
    """
    rates = np.asarray(getattr(jhat, "matrix", jhat), dtype=float)
    d = model.dim
    pred = {0: None}
    for i in range(1, d):
        for k in range(i):
            if k in pred and rates[i, k] > rate_floor:
                pred[i] = k
                break
    chains = {}
    for i in range(d):
        if i not in pred:
            continue
        path, k = [i], pred[i]
        while k is not None:
            path.append(k)
            k = pred[k]
        chains[i] = path
    return FGRReport(len(pred) == d, chains)


# ---------------------------------------------------------------- config io
def _matrix_to_pairs(M):
    M = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def _matrix_from_literal(lit):
    arr = np.asarray(lit)
    if arr.ndim == 3 and arr.shape[-1] == 2:
        return arr[..., 0].astype(float) + 1j * arr[..., 1].astype(float)
    return arr.astype(complex)


def write_matrix_csv(path, M):
    """Row-major CSV, each row holding alternating real and imaginary parts."""
    M = np.asarray(M, dtype=complex)
    with open(path, "w") as fh:
        for row in M:
            fh.write(",".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row) + "\n")


def read_matrix_csv(path):
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        vals = [float(x) for x in line.split(",")]
        rows.append(np.array(vals[0::2]) + 1j * np.array(vals[1::2]))
    return np.array(rows)


def model_from_config(cfg: dict, base_dir=".") -> SpinBosonModel:
    base = Path(base_dir)
    sysc = cfg["system"]
    U = None
    if "eigenbasis" in sysc:
        eb = sysc["eigenbasis"]
        U = read_matrix_csv(base / eb) if isinstance(eb, str) else _matrix_from_literal(eb)
    system = SystemSpec(np.asarray(sysc["eigenvalues"], dtype=float), U,
                        sysc.get("degeneracy_tol", DEFAULT_DEGENERACY_TOL))
    cc = cfg["coupling"]
    if "matrix" in cc and not isinstance(cc["matrix"], str):
        D = _matrix_from_literal(cc["matrix"])
    else:
        D = read_matrix_csv(base / cc.get("matrix", cc.get("path")))
    dc = cfg["density"]
    kind = dc.get("kind", "analytic")
    if kind == "analytic":
        density = SpectralDensity.analytic(dc.get("gamma", 1.0), dc.get("omega_c", 1.0),
                                           dc.get("amplitude", 1.0), dc.get("omega_max"))
    elif kind == "tabulated":
        if "table" in dc:
            tab = np.loadtxt(base / dc["table"], delimiter=",", ndmin=2)
            density = SpectralDensity.tabulated(tab[:, 0], tab[:, 1])
        else:
            density = SpectralDensity.tabulated(dc["grid"], dc["values"])
    else:
        raise ValueError(f"unsupported density kind in config: {kind!r}")
    dyn = cfg.get("dynamics", {})
    kappa = complex(dyn.get("kappa_re", 0.0), dyn.get("kappa_im", 0.0))
    return build_model(system, CouplingMatrix(D), density, dyn.get("lambda", 0.0),
                       kappa, dyn.get("alpha", 1.0))


def load_model(path) -> SpinBosonModel:
    import toml
    path = Path(path)
    return model_from_config(toml.loads(path.read_text()), path.parent)


def dump_model(model: SpinBosonModel, path=None) -> str:
    import toml
    text = toml.dumps(model.to_config())
    if path is not None:
        Path(path).write_text(text)
    return text
