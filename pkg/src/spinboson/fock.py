"""Truncated Fock-space simulation of the spin-boson Hamiltonian with discrete modes."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

from .correlations import BoundaryProfiles
from .errors import DimensionBudgetExceeded, PropagationToleranceFailure, TailTooHeavy
from .model import SpectralDensity, SpinBosonModel

DEFAULT_MAX_DIM = 4_000_000
CUTOFF_MASS_LIMIT = 0.01


# ------------------------------------------------------------------ modes
@dataclass(frozen=True, eq=False)
class ModeGrid:
    frequencies: np.ndarray
    couplings: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.frequencies, float)
        if np.any(np.diff(w) <= 0) or np.any(w <= 0):
            raise ValueError("mode frequencies must be positive and strictly increasing")

    @property
    def K(self):
        return self.frequencies.size

    def h(self, t):
        """Discrete correlation sum_k |c_k|^2 exp(-i w_k t)."""
        t = np.asarray(t, float)
        return np.exp(-1j * np.multiply.outer(t, self.frequencies)) @ np.abs(self.couplings) ** 2

    def discretize(self, profile):
        """Per-mode amplitudes psi(w_k) sqrt(dw_k) of a radial profile."""
        if isinstance(profile, BoundaryProfiles):
            f = profile.right
        elif callable(profile):
            f = profile
        else:
            return np.asarray(profile, dtype=complex)
        return np.asarray(f(self.frequencies), dtype=complex) * np.sqrt(self.weights)


def default_mode_cutoff(density: SpectralDensity):
    """Upper frequency used for mode grids: 10 omega_c for the analytic family."""
    if density.kind == "analytic":
        return min(density.omega_max, 10.0 * density.omega_c)
    return density.omega_max


def _rule(scheme, a, b, K):
    if scheme == "gauss_legendre":
        x, w = np.polynomial.legendre.leggauss(K)
        return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w
    if scheme == "midpoint":
        h = (b - a) / K
        return a + h * (np.arange(K) + 0.5), np.full(K, h)
    raise ValueError(f"unknown scheme {scheme!r}")


def build_mode_grid(density: SpectralDensity, K: int, scheme="gauss_legendre",
                    omega_max=None) -> ModeGrid:
    """K modes on (0, omega_max] with |c_k|^2 = J(w_k) dw_k."""
    if K < 1:
        raise ValueError("K must be positive")
    wmax = default_mode_cutoff(density) if omega_max is None else omega_max
    x, w = _rule(scheme, 0.0, wmax, K)
    c = np.sqrt(density(x) * w).astype(complex)
    return ModeGrid(x, c, w)


def horizon_mode_grid(density: SpectralDensity, K: int, t_max, scheme="midpoint",
                      n_trials=81) -> ModeGrid:
    """K-mode grid whose cutoff is tuned to a time horizon.

    A finite grid trades two errors: modes above the cutoff are lost, while a
    coarse spacing makes the discrete field recur early.  The cutoff is
    picked to minimise the largest relative error of the free-field photon
    number ||phi_t||^2 on (0, t_max] against its continuum value.
    """
    from .vanhove import VanHoveModel, mean_photon_number
    vm = VanHoveModel(density)
    t = np.linspace(t_max / 50, t_max, 200)
    ref = np.array([mean_photon_number(vm, x) for x in t])
    best = None
    for L in np.linspace(0.2, 1.5, n_trials) * default_mode_cutoff(density):
        g = build_mode_grid(density, K, scheme, L)
        w, c2 = g.frequencies, np.abs(g.couplings) ** 2
        nk = (c2 * 4 * np.sin(0.5 * np.outer(t, w)) ** 2 / w ** 2).sum(axis=1)
        err = float(np.max(np.abs(nk - ref) / np.where(ref > 0, ref, 1.0)))
        if best is None or err < best[0]:
            best = (err, g)
    return best[1]


def build_composite_grid(density: SpectralDensity, segments) -> ModeGrid:
    """Concatenate rules over disjoint intervals; segments are (a, b, K, scheme)."""
    xs, ws = [], []
    for a, b, K, scheme in sorted(segments, key=lambda s: s[0]):
        x, w = _rule(scheme, float(a), float(b), int(K))
        xs.append(x)
        ws.append(w)
    x, w = np.concatenate(xs), np.concatenate(ws)
    return ModeGrid(x, np.sqrt(density(x) * w).astype(complex), w)


# ------------------------------------------------------------------ basis
@lru_cache(maxsize=None)
def _occupations(K, N):
    """All multi-indices of length K with sum <= N in lexicographic order."""
    if K == 0:
        return np.zeros((1, 0), dtype=np.int16)
    blocks = []
    for n0 in range(N + 1):
        rest = _occupations(K - 1, N - n0)
        blocks.append(np.hstack([np.full((rest.shape[0], 1), n0, np.int16), rest]))
    return np.vstack(blocks)


class FockSpace:
    """Occupation basis of K modes truncated at total number N_max."""

    def __init__(self, K, N_max):
        self.K, self.N_max = int(K), int(N_max)
        self.occupations = _occupations(self.K, self.N_max)
        self.occupations.flags.writeable = False
        self.total = self.occupations.sum(axis=1)
        # count[k, r] = number of multi-indices on modes k.. with sum <= r
        count = np.array([[comb(self.K - k + r, r) for r in range(self.N_max + 1)]
                          for k in range(self.K + 1)], dtype=np.int64)
        pre = np.zeros((self.K, self.N_max + 1, self.N_max + 2), dtype=np.int64)
        for k in range(self.K):
            for R in range(self.N_max + 1):
                for n in range(1, R + 2):
                    pre[k, R, n] = pre[k, R, n - 1] + count[k + 1, R - (n - 1)]
        self._pre = pre
        self._ladders = {}

    @property
    def dim(self):
        return self.occupations.shape[0]

    def rank(self, occ):
        """Index of each multi-index row (vectorised)."""
        occ = np.atleast_2d(np.asarray(occ, dtype=np.int64))
        R = np.full(occ.shape[0], self.N_max, dtype=np.int64)
        idx = np.zeros(occ.shape[0], dtype=np.int64)
        for k in range(self.K):
            idx += self._pre[k, R, occ[:, k]]
            R -= occ[:, k]
        return idx

    def creation(self, k):
        """Sparse a_k^dagger on the truncated space."""
        if k not in self._ladders:
            occ = self.occupations
            src = np.flatnonzero(self.total < self.N_max)
            tgt_occ = occ[src].astype(np.int64)
            tgt_occ[:, k] += 1
            tgt = self.rank(tgt_occ)
            data = np.sqrt(tgt_occ[:, k].astype(float))
            self._ladders[k] = sp.csr_matrix((data, (tgt, src)), shape=(self.dim, self.dim))
        return self._ladders[k]

    def field_operator(self, amplitudes):
        """Phi(psi) = sum_k psi_k a_k^dagger + conj(psi_k) a_k."""
        A = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for k, a in enumerate(np.asarray(amplitudes, complex)):
            if a != 0:
                A = A + a * self.creation(k)
        return (A + A.conj().T).tocsr()

    def number_energies(self, frequencies):
        return self.occupations @ np.asarray(frequencies, float)


@lru_cache(maxsize=8)
def fock_space(K, N_max):
    return FockSpace(K, N_max)


# ------------------------------------------------------------------ states
@dataclass(eq=False)
class FockState:
    """Amplitudes indexed by (system level, occupation index)."""

    amplitudes: np.ndarray
    space: FockSpace
    time: float = 0.0

    @property
    def N_max(self):
        return self.space.N_max

    @property
    def vector(self):
        return self.amplitudes.reshape(-1)

    @property
    def norm_at_cutoff(self):
        """Probability mass on the top occupation shell."""
        top = self.space.total == self.space.N_max
        return float(np.sum(np.abs(self.amplitudes[:, top]) ** 2))

    norm_deficit = norm_at_cutoff

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def to_rows(self, threshold=0.0):
        """(level, occupation string, re, im) for amplitudes above threshold."""
        rows = []
        for s in range(self.amplitudes.shape[0]):
            for m in np.flatnonzero(np.abs(self.amplitudes[s]) > threshold):
                occ = "".join(str(int(x)) for x in self.space.occupations[m])
                a = self.amplitudes[s, m]
                rows.append((s, occ, float(a.real), float(a.imag)))
        return rows

    def to_json(self, threshold=0.0):
        return json.dumps({"N_max": self.N_max, "K": self.space.K,
                           "amplitudes": self.to_rows(threshold)})


def vacuum_state(space: FockSpace, system_vector) -> FockState:
    v = np.asarray(system_vector, dtype=complex)
    A = np.zeros((v.size, space.dim), dtype=complex)
    A[:, 0] = v
    return FockState(A, space)


def product_state(system_vector, field_state: FockState) -> FockState:
    v = np.asarray(system_vector, dtype=complex)
    f = field_state.amplitudes.reshape(-1)
    return FockState(np.outer(v, f), field_state.space)


def reduced_density(psi: FockState):
    A = psi.amplitudes
    return A @ A.conj().T


def photon_moment(psi: FockState, kappa):
    """<exp(kappa N)> on the truncated space (unnormalised)."""
    w = np.sum(np.abs(psi.amplitudes) ** 2, axis=0)
    return complex(np.sum(w * np.exp(complex(kappa) * psi.space.total)))


def mean_photon_number(psi: FockState):
    w = np.sum(np.abs(psi.amplitudes) ** 2, axis=0)
    return float(np.sum(w * psi.space.total))


def weyl_vacuum_state(grid: ModeGrid, profile, space: Optional[FockSpace] = None,
                      N_max=None, mass_limit=CUTOFF_MASS_LIMIT) -> FockState:
    """Truncated, renormalised coherent state exp(i Phi(psi)) Omega.

    Mode k carries coherent amplitude i psi_k.  Raises TailTooHeavy when the
    discarded mass above N_max exceeds ``mass_limit``.
    """
    if space is None:
        space = fock_space(grid.K, N_max)
    alpha = 1j * grid.discretize(profile)
    occ = space.occupations
    from scipy.special import gammaln
    logs = -0.5 * np.sum(np.abs(alpha) ** 2) - 0.5 * gammaln(occ + 1.0).sum(axis=1)
    amp = np.exp(logs).astype(complex)
    for k, a in enumerate(alpha):
        n = occ[:, k]
        if a == 0:
            amp = np.where(n > 0, 0, amp)
        else:
            amp = amp * a ** n
    kept = float(np.sum(np.abs(amp) ** 2))
    if 1 - kept > mass_limit:
        raise TailTooHeavy(f"coherent state loses {1 - kept:.3%} of its mass above N_max")
    return FockState((amp / np.sqrt(kept))[None, :], space)


# ------------------------------------------------------------------ Hamiltonian
@dataclass(eq=False)
class TruncatedHamiltonian:
    matrix: sp.csr_matrix
    dims: tuple
    space: FockSpace
    grid: ModeGrid
    norm_estimate: float = field(default=0.0)

    def energy(self, psi: FockState):
        v = psi.vector
        return float(np.vdot(v, self.matrix @ v).real)


def build_hamiltonian(model: SpinBosonModel, grid: ModeGrid, N_max: int,
                      max_dim=DEFAULT_MAX_DIM) -> TruncatedHamiltonian:
    """H_S x 1 + 1 x sum w_k a_k^* a_k + lam D x sum (c_k a_k^* + conj(c_k) a_k)."""
    d, K = model.dim, grid.K
    dim = d * comb(K + N_max, N_max)
    if dim > max_dim:
        raise DimensionBudgetExceeded(f"truncated dimension {dim} exceeds budget {max_dim}")
    space = fock_space(K, N_max)
    HS = sp.csr_matrix(model.system.hamiltonian)
    HF = sp.diags(space.number_energies(grid.frequencies))
    I_f = sp.identity(space.dim, format="csr")
    H = sp.kron(HS, I_f) + sp.kron(sp.identity(d), HF)
    if model.lam != 0:
        B = space.field_operator(grid.couplings)
        H = H + model.lam * sp.kron(sp.csr_matrix(model.D), B)
    H = sp.csr_matrix(H, dtype=complex)
    H.eliminate_zeros()
    nrm = float(abs(H).sum(axis=1).max())
    return TruncatedHamiltonian(H, (d, K, N_max), space, grid, nrm)


# ------------------------------------------------------------------ propagation
def _lanczos(A, v, m):
    n = v.size
    V = np.zeros((m, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v
    k = m
    for j in range(m):
        w = A @ V[j]
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j]
        if j > 0:
            w = w - beta[j - 1] * V[j - 1]
        # full reorthogonalisation keeps V orthonormal to rounding
        w = w - V[:j + 1].T @ (V[:j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        if j + 1 < m:
            if beta[j] < 1e-12 * max(1.0, abs(alpha[j])):
                k = j + 1
                break
            V[j + 1] = w / beta[j]
    return V[:k], alpha[:k], beta[:k], k < m or beta[k - 1] < 1e-12


def expi_krylov(A, v, t, m=30, tol=1e-10):
    """exp(-i t A) v for Hermitian sparse A by restarted Lanczos with adaptive substeps.

    Each substep keeps the a posteriori estimate beta_m |[exp(-i tau T)]_{m,1}|
    (scaled by |v|) below ``tol``.
    """
    w = np.array(v, dtype=complex)
    nrm = np.linalg.norm(w)
    if t == 0 or nrm == 0:
        return w
    sgn = np.sign(t)
    total = abs(t)
    done = 0.0
    tau = total
    m = min(m, w.size)
    while done < total * (1 - 1e-15):
        V, a, b, happy = _lanczos(A, w / nrm, m)
        k = len(a)
        if k == 1:
            ev, U = a.copy(), np.ones((1, 1))
        else:
            ev, U = eigh_tridiagonal(a, b[:k - 1])
        tau = min(tau * 2, total - done)
        while True:
            y = U @ (np.exp(-1j * sgn * tau * ev) * U[0].conj())
            err = 0.0 if happy else nrm * b[k - 1] * abs(y[k - 1])
            if err <= tol:
                break
            tau *= 0.5
            if tau < total * 1e-13:
                raise PropagationToleranceFailure("Krylov step size underflow")
        w = nrm * (y @ V)
        done += tau
    return w


def propagate(H: TruncatedHamiltonian, psi0: FockState, t, tol=1e-10) -> FockState:
    """exp(-i t H) psi0."""
    if t == 0:
        return FockState(psi0.amplitudes.copy(), psi0.space, psi0.time)
    v = expi_krylov(H.matrix, psi0.vector, t, tol=tol)
    return FockState(v.reshape(psi0.amplitudes.shape), psi0.space, psi0.time + t)


def propagate_snapshots(H: TruncatedHamiltonian, psi0: FockState, times, tol=1e-10):
    """States at increasing times, propagated segment by segment."""
    out, cur, tcur = [], psi0, 0.0
    for t in times:
        cur = propagate(H, cur, t - tcur, tol)
        cur.time = t
        tcur = t
        out.append(cur)
    return out


def weyl_expectation_fock(psi: FockState, grid: ModeGrid, profile):
    """<psi, (1 x exp(i Phi(psi_W))) psi> on the truncated space."""
    space = psi.space
    Phi = space.field_operator(grid.discretize(profile))
    d = psi.amplitudes.shape[0]
    Wf = sp.kron(sp.identity(d), Phi, format="csr")
    v = psi.vector
    return complex(np.vdot(v, expi_krylov(-Wf, v, 1.0)))


def reduced_map(states):
    """Superoperator of rho -> Tr_F from propagated basis states.

    ``states[i]`` is the evolution of |i> x Omega; column i + d j of the
    result is vec(Tr_F |Psi_i><Psi_j|) in column-major order.
    """
    d = len(states)
    Q = np.zeros((d * d, d * d), dtype=complex)
    for j in range(d):
        for i in range(d):
            Q[:, i + d * j] = (states[i].amplitudes @ states[j].amplitudes.conj().T).reshape(-1, order="F")
    return Q
