"""Davies (weak-coupling) generator: two assembly routes, spectrum and evolution.

Density matrices are vectorised column-major, vec(A X B) = (B^T kron A) vec(X).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eig, expm

from .correlations import _closed_form_tail, correlation_h, fourier_jhat, half_fourier
from .errors import DegenerateLeadingEigenvalue, SeriesNotConverged, TailTooHeavy
from .model import SpinBosonModel, SystemSpec
from .quadrature import gauss_panels, graded_edges


def vec(X):
    return np.asarray(X).reshape(-1, order="F")


def unvec(v, d):
    return np.asarray(v).reshape(d, d, order="F")


def left_mul(A):
    A = np.asarray(A)
    return np.kron(np.eye(A.shape[0]), A)


def right_mul(B):
    B = np.asarray(B)
    return np.kron(B.T, np.eye(B.shape[0]))


def commutator_super(H):
    return left_mul(H) - right_mul(H)


def basis_super(U):
    """Superoperator of X -> U X U^dagger."""
    return np.kron(U.conj(), U)


@dataclass(frozen=True, eq=False)
class JumpRates:
    """Fermi Golden Rule rates per unit lambda^2.

    ``matrix[i, j]`` is j(e_i, e_j), the rate for a jump from level i down to
    level j; it vanishes unless e_i > e_j.
    """

    matrix: np.ndarray
    energies: np.ndarray

    def __getitem__(self, ij):
        return float(self.matrix[ij])

    def as_dict(self):
        d = len(self.energies)
        return {(float(self.energies[i]), float(self.energies[j])): float(self.matrix[i, j])
                for i in range(d) for j in range(d) if i != j}


def jump_rates(model: SpinBosonModel) -> JumpRates:
    """j(e, e') = Tr[P_e D P_e' D P_e] * jhat(e - e'); nonzero only for e > e'."""
    sysm, D = model.system, model.D
    d = model.dim
    e = sysm.eigenvalues
    R = np.zeros((d, d))
    for i in range(d):
        Pi = sysm.projector(i)
        for j in range(d):
            if i == j:
                continue
            Pj = sysm.projector(j)
            tr = np.trace(Pi @ D @ Pj @ D @ Pi).real
            R[i, j] = tr * fourier_jhat(model.density, e[i] - e[j])
    R[R < 0] = 0.0
    return JumpRates(R, e.copy())


@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    superoperator: np.ndarray
    lamb_shift: np.ndarray
    diagonal_block: np.ndarray
    kappa: complex
    eigenbasis: np.ndarray
    energies: np.ndarray
    route: str = "direct"

    @property
    def dim(self):
        return self.lamb_shift.shape[0]

    def apply(self, rho):
        d = self.dim
        return unvec(self.superoperator @ vec(rho), d)

    def to_dict(self, report=None):
        pairs = lambda M: [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(M, complex)]
        out = {"route": self.route, "dim": self.dim,
               "kappa": [self.kappa.real, self.kappa.imag],
               "energies": [float(x) for x in self.energies],
               "eigenbasis": pairs(self.eigenbasis),
               "superoperator": pairs(self.superoperator),
               "lamb_shift": pairs(self.lamb_shift),
               "diagonal_block": pairs(self.diagonal_block)}
        if report is not None:
            out["eigenvalues"] = [[float(z.real), float(z.imag)] for z in report.eigenvalues]
            out["gap"] = report.gap
        return out

    @classmethod
    def from_dict(cls, data):
        arr = lambda x: np.asarray(x, float)[..., 0] + 1j * np.asarray(x, float)[..., 1]
        db = arr(data["diagonal_block"])
        kappa = complex(*data["kappa"])
        if kappa.imag == 0:
            db = db.real
        return cls(arr(data["superoperator"]), arr(data["lamb_shift"]), db, kappa,
                   arr(data["eigenbasis"]), np.asarray(data["energies"], float),
                   data.get("route", "direct"))


def _diagonal_block(M, system: SystemSpec, kappa):
    d = system.dim
    out = np.zeros((d, d), dtype=complex)
    for j in range(d):
        Pj = system.projector(j)
        image = unvec(M @ vec(Pj), d)
        for i in range(d):
            out[i, j] = np.trace(system.projector(i) @ image)
    return out.real if complex(kappa).imag == 0 else out


def lamb_shift_operator(model: SpinBosonModel, include_zero=True):
    """H_L = sum over Bohr frequencies eps of S(-eps) D_eps^dagger D_eps.

    S is the imaginary part of the half-line transform of h.  With this sign
    a level e is shifted by sum over e' of S(e - e') |<e'|D|e>|^2, which is
    the second-order energy shift.  The eps = 0 term only matters when D has
    diagonal entries in the eigenbasis.
    """
    d = model.dim
    H = np.zeros((d, d), dtype=complex)
    for eps, De in model.bohr_components().items():
        if eps == 0 and not include_zero:
            continue
        if not np.any(De):
            continue
        S = half_fourier(model.density, -eps).imag
        H += S * (De.conj().T @ De)
    return 0.5 * (H + H.conj().T)


def build_generator_direct(model: SpinBosonModel, include_zero_lamb=True) -> LindbladGenerator:
    """Assemble M = -i[H_L, .] + sum_{eps<0} jhat(-eps) (e^kappa D rho D^* - {D^*D, rho}/2)."""
    d = model.dim
    ek = np.exp(model.kappa)
    HL = lamb_shift_operator(model, include_zero_lamb)
    M = -1j * commutator_super(HL)
    for eps, De in model.bohr_components().items():
        if eps >= 0:
            continue
        rate = fourier_jhat(model.density, -eps)
        if rate == 0 or not np.any(De):
            continue
        DD = De.conj().T @ De
        M = M + rate * (ek * left_mul(De) @ right_mul(De.conj().T)
                        - 0.5 * (left_mul(DD) + right_mul(DD)))
    db = _diagonal_block(M, model.system, model.kappa)
    return LindbladGenerator(M, HL, db, model.kappa, model.system.eigenbasis,
                             model.system.eigenvalues, "direct")


# ---------------------------------------------------------------- F_s route
def _liouvillian_eigen(system: SystemSpec):
    """Bohr frequency of each vectorised matrix unit |i><j| in the eigenbasis."""
    e = system.eigenvalues
    d = e.size
    idx = np.arange(d * d)
    i, j = idx % d, idx // d
    return e[i] - e[j]


def _four_term_parts(model: SpinBosonModel):
    """Eigenbasis superoperators (X, Y) with F_s = sum c(s) X E(s) Y, E(s) = exp(-is ad H_S).

    Returns a list of (coefficient sign, uses h(-s), X, Y).
    """
    U = model.system.eigenbasis
    De = U.conj().T @ model.D @ U
    L, R = left_mul(De), right_mul(De)
    ek = np.exp(model.kappa)
    return [(ek, False, R, L), (ek, True, L, R), (-1.0, False, L, L), (-1.0, True, R, R)]


def _projector_masks(model: SpinBosonModel):
    """Boolean masks over vectorised matrix units for each Bohr frequency."""
    d = model.dim
    masks = {}
    for eps, pairs in model.bohr.pair_lists.items():
        m = np.zeros(d * d, dtype=bool)
        for i, j in pairs:
            m[i + d * j] = True
        masks[eps] = m
    return masks


def _tail_estimate(corr, s_max):
    """Power-law extrapolation of the integral of |h| beyond s_max."""
    a, b = abs(corr(np.array(s_max / 2))), abs(corr(np.array(s_max)))
    if b == 0:
        return 0.0
    if a <= b:
        return float("inf")
    p = np.log(a / b) / np.log(2.0)
    if p <= 1:
        return float("inf")
    return float(b * s_max / (p - 1))


def build_generator_quadrature(model: SpinBosonModel, s_max=200.0, tail="analytic",
                               tail_tol=1e-8) -> LindbladGenerator:
    """M = sum_eps P_eps (integral over s >= 0 of e^{i s eps} F_s) P_eps.

    F_s is assembled as a dense superoperator from its four terms and
    integrated on [0, s_max] by panel Gauss-Legendre.  For the analytic
    family the remainder beyond s_max is added exactly per Bohr term by
    contour rotation; otherwise a power-law estimate of the remainder must
    stay below ``tail_tol`` or TailTooHeavy is raised.
    """
    d = model.dim
    n = d * d
    dens = model.density
    corr = correlation_h(dens)
    omega = _liouvillian_eigen(model.system)
    masks = _projector_masks(model)
    parts = _four_term_parts(model)
    use_analytic_tail = tail == "analytic" and dens.has_closed_form
    if not use_analytic_tail and not dens.is_zero:
        est = _tail_estimate(corr, s_max)
        if est > tail_tol:
            raise TailTooHeavy(f"|h| tail beyond s_max={s_max:g} estimated at {est:.3e}")

    spread = max(np.ptp(omega), 1e-12)
    width = min(np.pi / (2 * spread), 0.5)
    scale = dens.omega_c if dens.omega_c else 1.0
    edges = np.union1d(np.linspace(0, s_max, int(np.ceil(s_max / width)) + 1),
                       graded_edges(0.0, min(1.0 / scale, s_max), levels=20))
    x0, w0 = np.polynomial.legendre.leggauss(16)
    mid, half = 0.5 * (edges[1:] + edges[:-1]), 0.5 * (edges[1:] - edges[:-1])
    s = (mid[:, None] + half[:, None] * x0).ravel()
    w = (half[:, None] * w0).ravel()
    hs = corr(s)

    Mtot = np.zeros((n, n), dtype=complex)
    for eps, mask in masks.items():
        rows = np.flatnonzero(mask)
        phase = w * np.exp(1j * eps * s)
        for coef, minus, X, Y in parts:
            hv = np.conj(hs) if minus else hs
            # integral of e^{i s eps} h(+-s) e^{-i s omega_k} for every intermediate k
            weights = np.exp(-1j * np.outer(omega, s)) @ (phase * hv)
            if use_analytic_tail:
                sign = -1 if minus else 1
                weights = weights + np.array(
                    [_closed_form_tail(dens, eps - om, s_max, sign) for om in omega])
            block = (X[rows, :] * weights[None, :]) @ Y[:, rows]
            Mtot[np.ix_(rows, rows)] += coef * block
    B = basis_super(model.system.eigenbasis)
    M = B @ Mtot @ B.conj().T
    HL = hamiltonian_part(M, d)
    db = _diagonal_block(M, model.system, model.kappa)
    return LindbladGenerator(M, 0.5 * (HL + HL.conj().T), db, model.kappa,
                             model.system.eigenbasis, model.system.eigenvalues, "quadrature")


def hamiltonian_part(M, d):
    """Traceless Hermitian H with M = -i[H, .] + (terms of the form K rho + rho K^* + sum L rho L^*).

    Uses the canonical split in which jump operators are traceless; for a
    Davies generator this returns the Lamb shift minus its trace part.
    """
    M = np.asarray(M)
    X = np.empty((d, d), dtype=complex)
    for i in range(d):
        for j in range(d):
            E = np.zeros((d, d))
            E[i, j] = 1.0
            X[i, j] = np.vdot(np.kron(np.eye(d), E), M) / d
    F = X - np.trace(X) / d * np.eye(d)
    return (F.conj().T - F) / 2j


# ---------------------------------------------------------------- spectrum
@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    gap: float
    stationary: np.ndarray
    left: np.ndarray
    simple_zero: bool
    leading: complex


def spectral_analysis(gen: LindbladGenerator, tol=1e-9) -> SpectralReport:
    """Eigendecomposition of M with a simplicity check on the leading eigenvalue.

    ``gap`` is Re(leading) - max Re(other eigenvalues); at kappa = 0 the
    leading eigenvalue is 0 and this is minus the largest real part of the rest.
    """
    M = gen.superoperator
    d = gen.dim
    mu, vl, vr = eig(M, left=True, right=True)
    order = np.argsort(-mu.real, kind="stable")
    mu, vl, vr = mu[order], vl[:, order], vr[:, order]
    diam = float(np.max(np.abs(mu[:, None] - mu[None, :]))) if mu.size > 1 else 0.0
    atol = tol * diam if diam > 0 else tol
    lead = mu[0]
    cluster = np.abs(mu.real - lead.real) <= atol
    if np.count_nonzero(cluster) > 1:
        raise DegenerateLeadingEigenvalue(
            f"{np.count_nonzero(cluster)} eigenvalues share the leading real part {lead.real:.3e}")
    gap = float(lead.real - np.max(mu[1:].real)) if mu.size > 1 else float("inf")
    eta = unvec(vr[:, 0], d)
    tr = np.trace(eta)
    eta = eta / tr if abs(tr) > 1e-12 else eta / np.linalg.norm(eta)
    etl = unvec(vl[:, 0], d)
    pairing = np.vdot(vec(etl), vec(eta))
    etl = etl / np.conj(pairing)
    simple_zero = bool(abs(lead) <= max(atol, tol))
    return SpectralReport(mu, gap, eta, etl, simple_zero, complex(lead))


def evolve_semigroup(gen: LindbladGenerator, system: SystemSpec, rho0, lam, t):
    """exp(-i t ad(H_S) + lam^2 t M) applied to rho0."""
    rho0 = np.asarray(rho0, dtype=complex)
    if t == 0:
        return rho0.copy()
    d = system.dim
    G = -1j * t * commutator_super(system.hamiltonian) + lam ** 2 * t * gen.superoperator
    return unvec(expm(G) @ vec(rho0), d)


def semigroup_super(gen: LindbladGenerator, system: SystemSpec, lam, t):
    G = -1j * t * commutator_super(system.hamiltonian) + lam ** 2 * t * gen.superoperator
    return expm(G)


# ---------------------------------------------------------------- Dyson
def _F_kernel(model: SpinBosonModel, s, hs):
    """F_s in the computational basis for an array of times s >= 0."""
    d = model.dim
    D = model.D
    L, R = left_mul(D), right_mul(D)
    H = model.system.hamiltonian
    ek = np.exp(model.kappa)
    LS = commutator_super(H)
    w, V = np.linalg.eig(LS)
    Vi = np.linalg.inv(V)
    out = np.empty((len(s), d * d, d * d), dtype=complex)
    for k, (sk, hk) in enumerate(zip(s, hs)):
        E = (V * np.exp(-1j * sk * w)) @ Vi
        hm = np.conj(hk)
        out[k] = (ek * hk * R @ E @ L + ek * hm * L @ E @ R
                  - hk * L @ E @ L - hm * R @ E @ R)
    return out


def dyson_leading_propagator(model: SpinBosonModel, t, m_max, n_steps=None, tol=1e-6,
                             return_orders=False):
    """Leading-pair Dyson series of the reduced dynamics up to order lam^(2 m_max).

    Solves Q(t) = U(t) + lam^2 int_0^t dv U(t - v) int_0^v du F_{v-u} Q(u) by
    Picard iteration on a uniform grid (trapezoid rule); iterate m equals the
    series truncated after m pairings.  Raises SeriesNotConverged when the
    last order changes the result by ``tol`` or more (max superoperator entry).
    """
    d = model.dim
    H = model.system.hamiltonian
    LS = commutator_super(H)
    if m_max == 0 or model.lam == 0 or t == 0:
        return expm(-1j * t * LS)
    if n_steps is None:
        n_steps = max(200, int(np.ceil(20 * t)))
    grid = np.linspace(0.0, t, n_steps + 1)
    dt = grid[1] - grid[0]
    corr = correlation_h(model.density)
    hs = corr(grid)
    F = _F_kernel(model, grid, hs)
    w, V = np.linalg.eig(LS)
    Vi = np.linalg.inv(V)
    U = np.stack([(V * np.exp(-1j * g * w)) @ Vi for g in grid])
    lam2 = model.lam ** 2
    N = n_steps + 1

    def trap(k):
        wt = np.full(k + 1, dt)
        wt[0] = wt[-1] = dt / 2
        return wt if k > 0 else np.zeros(1)

    Q = U.copy()
    history = [Q[-1].copy()]
    for _ in range(m_max):
        G = np.empty_like(Q)
        for k in range(N):
            wt = trap(k)
            G[k] = np.einsum("j,jab,jbc->ac", wt, F[k::-1][:k + 1], Q[:k + 1])
        Qn = np.empty_like(Q)
        for k in range(N):
            wt = trap(k)
            Qn[k] = U[k] + lam2 * np.einsum("j,jab,jbc->ac", wt, U[k::-1][:k + 1], G[:k + 1])
        Q = Qn
        history.append(Q[-1].copy())
    change = float(np.max(np.abs(history[-1] - history[-2])))
    if change >= tol:
        raise SeriesNotConverged(
            f"order {m_max} still changes the propagator by {change:.3e} (tol {tol:g})")
    if return_orders:
        return Q[-1], history
    return Q[-1]


def dump_generator(gen: LindbladGenerator, path, report=None):
    with open(path, "w") as fh:
        json.dump(gen.to_dict(report), fh, indent=1)


def load_generator(path) -> LindbladGenerator:
    with open(path) as fh:
        return LindbladGenerator.from_dict(json.load(fh))
