"""Closed forms for the exactly solvable single-level (van Hove) model.

The Hamiltonian H_F + lam * Phi(phi), with Phi(f) = a*(f) + a(f), is a
shifted free field: the vacuum evolves into a coherent state with mode
amplitudes lam * phi(w) * (exp(-i w t) - 1) / w.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .correlations import BoundaryProfiles
from .errors import DivergentIntegral
from .model import SpectralDensity
from .quadrature import gauss_panels, graded_edges, integrate_oscillatory

# Vacuum expectation of exp(i Phi(psi)) has modulus exp(-WEYL_MODULUS_EXPONENT * ||psi||^2).
WEYL_MODULUS_EXPONENT = 0.5


def _inverse_moment(density: SpectralDensity, p):
    """Integral of J(w) / w**p over (0, omega_max]; inf when it diverges at 0."""
    if density.is_zero:
        return 0.0
    g = density.small_omega_exponent()
    if g <= p - 1 + 1e-9:
        return float("inf")
    if density.has_closed_form:
        A, gam, c = density.amplitude, density.gamma, density.omega_c
        return A * gamma_fn(gam + 1 - p) * c ** (gam + 1 - p)
    wmax = density.omega_max
    edges = np.union1d(graded_edges(0.0, wmax / 64, levels=60), np.linspace(0, wmax, 257))
    edges = np.union1d(edges, [b for b in density.breakpoints if 0 < b < wmax])
    return float(gauss_panels(lambda w: density(w) / w ** p, edges))


@dataclass(frozen=True, eq=False)
class VanHoveModel:
    density: SpectralDensity
    lam: float = 1.0
    profile_phi_over_omega_sq_norm: float = field(init=False)
    E_gs: float = field(init=False)

    def __post_init__(self):
        l2 = self.lam ** 2
        object.__setattr__(self, "profile_phi_over_omega_sq_norm",
                           l2 * _inverse_moment(self.density, 2))
        m1 = _inverse_moment(self.density, 1)
        object.__setattr__(self, "E_gs", -l2 * m1 if np.isfinite(m1) else float("-inf"))

    @property
    def has_ground_state(self):
        return bool(np.isfinite(self.profile_phi_over_omega_sq_norm))


def ground_state_energy(m: VanHoveModel):
    """-lam^2 times the integral of J(w)/w."""
    if not np.isfinite(m.E_gs):
        raise DivergentIntegral("J(w)/w is not integrable at w = 0")
    return m.E_gs


def mean_photon_number(m: VanHoveModel, t, method="auto"):
    """||phi_t||^2 = 2 lam^2 int J(w) (1 - cos wt) / w^2 dw.

    ``method``: ``"closed"`` (analytic family), ``"quadrature"`` or ``"auto"``.
    """
    dens = m.density
    t = float(t)
    if dens.is_zero or t == 0:
        return 0.0
    if method == "auto":
        method = "closed" if dens.has_closed_form else "quadrature"
    l2 = m.lam ** 2
    if method == "closed":
        A, g, c = dens.amplitude, dens.gamma, dens.omega_c
        if abs(g - 1) < 1e-12:
            return l2 * A * np.log1p((c * t) ** 2)
        z = (1 + 1j * c * t) ** (1 - g)
        return float(l2 * 2 * A * gamma_fn(g - 1) * c ** (g - 1) * (1 - z.real))
    f = lambda w: 4 * dens(w) * np.sin(0.5 * w * t) ** 2 / w ** 2
    val, _ = integrate_oscillatory(f, 0.0, dens.omega_max, t, breaks=dens.breakpoints,
                                   rtol=1e-10)
    return float(l2 * val.real)


def photon_generating_function(m: VanHoveModel, kappa, t, method="auto"):
    """<exp(kappa N)> in the evolved vacuum: exp((e^kappa - 1) ||phi_t||^2)."""
    kappa = complex(kappa)
    return complex(np.exp(np.expm1(kappa) * mean_photon_number(m, t, method)))


def truncation_bound(m: VanHoveModel):
    """Upper bound on the change of ||phi_t||^2 from cutting the density at omega_max.

    Uses 2(1 - cos) <= 4; only defined for the analytic family.
    """
    d = m.density
    if d.kind != "analytic" or d.is_zero:
        return 0.0
    f = lambda w: d.amplitude * w ** (d.gamma - 2) * np.exp(-w / d.omega_c)
    val, _ = integrate.quad(f, d.omega_max, np.inf)
    return 4 * m.lam ** 2 * val


def weyl_phase_integral(m: VanHoveModel, profiles: BoundaryProfiles, t):
    """Integral of J_right(w) (exp(iwt) - 1) / w, with J_right = lam conj(phi) psi_right."""
    _, jr, _ = profiles.cross_densities(m.density)
    wmax = min(m.density.omega_max, profiles.omega_max)
    lam = m.lam
    t = float(t)
    if t == 0:
        return 0j
    tiny = np.array([1e-9 * wmax, 1e-7 * wmax])
    vals = np.abs(jr(tiny))
    if vals[0] > 0 and np.log(vals[1] / vals[0]) / np.log(100.0) <= 1e-9:
        raise DivergentIntegral("cross density J_right(w)/w is not integrable at 0")

    def f(w):
        # (exp(iwt) - 1)/w written without cancellation
        k = 2j * np.sin(0.5 * w * t) * np.exp(0.5j * w * t) / w
        return lam * jr(w) * k
    val, _ = integrate_oscillatory(f, 0.0, wmax, t, breaks=m.density.breakpoints,
                                   rtol=1e-10, atol=1e-15)
    return complex(val)


def weyl_expectation(m: VanHoveModel, psi_right: BoundaryProfiles, t,
                     modulus_exponent=WEYL_MODULUS_EXPONENT):
    """<Omega, e^{itH} W(psi) e^{-itH} Omega> for W(psi) = exp(i Phi(psi))."""
    _, norm_r = psi_right.norms()
    if norm_r == 0:
        return 1.0 + 0j
    phase = 2 * weyl_phase_integral(m, psi_right, t).real
    return complex(np.exp(-modulus_exponent * norm_r + 1j * phase))


def scan(m: VanHoveModel, kappa, times, profiles=None):
    """Rows (t, mean_N, genfun, weyl) over a time grid."""
    rows = []
    for t in times:
        n = mean_photon_number(m, t)
        gf = complex(np.exp(np.expm1(complex(kappa)) * n))
        w = weyl_expectation(m, profiles, t) if profiles is not None else 1.0 + 0j
        rows.append((float(t), n, gf, w))
    return rows


def write_scan_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mean_N", "genfun_re", "genfun_im", "weyl_re", "weyl_im"])
        for t, n, gf, wy in rows:
            w.writerow([repr(float(t)), repr(float(n)), repr(float(gf.real)), repr(float(gf.imag)),
                        repr(float(wy.real)), repr(float(wy.imag))])
