"""Field correlation functions, their Fourier data and decay diagnostics."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn

from .model import SpectralDensity
from .quadrature import gauss_panels, graded_edges, integrate_oscillatory

LAMB_T_TAIL = 1e3


class CorrelationFunction:
    """Callable t -> h(t) with provenance.

    ``source`` is ``"analytic_closed_form"`` or ``"quadrature"``.
    """

    def __init__(self, evaluator, source, density=None, decay_alpha_estimate=None):
        self.evaluator = evaluator
        self.source = source
        self.density = density
        self.decay_alpha_estimate = decay_alpha_estimate

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.evaluator(t)

    @property
    def is_zero(self):
        return self.density is not None and self.density.is_zero


def _closed_form_evaluator(density: SpectralDensity):
    A, g, c = density.amplitude, density.gamma, density.omega_c
    pref = A * gamma_fn(g + 1) * c ** (g + 1)

    def h(t):
        return pref * (1.0 + 1j * c * np.asarray(t, dtype=float)) ** (-(g + 1))
    return h


def _fourier_evaluator(jfun, omega_max, breaks=(), sign=-1, rtol=1e-8):
    """t -> integral over (0, omega_max] of jfun(w) exp(sign i w t)."""
    scale = [None]

    def atol():
        if scale[0] is None:
            edges = np.union1d(graded_edges(0.0, omega_max),
                               np.linspace(0, omega_max, 257))
            edges = np.union1d(edges, [b for b in breaks if 0 < b < omega_max])
            scale[0] = float(abs(gauss_panels(lambda w: np.abs(jfun(w)), edges)))
        return 1e-14 * scale[0]

    def one(t):
        f = lambda w: jfun(w) * np.exp(sign * 1j * w * t)
        val, _ = integrate_oscillatory(f, 0.0, omega_max, t, breaks=breaks,
                                       rtol=rtol, atol=atol())
        return val

    def h(t):
        t = np.asarray(t, dtype=float)
        flat = np.array([one(x) for x in t.reshape(-1)], dtype=complex)
        return flat.reshape(t.shape)
    return h


def correlation_h(density: SpectralDensity, method="auto", rtol=1e-8) -> CorrelationFunction:
    """h(t) = integral of J(w) exp(-i w t) over (0, omega_max].

    ``method`` is ``"auto"`` (closed form when exact), ``"closed"`` or ``"quadrature"``.
    """
    if method == "closed" and density.kind != "analytic":
        raise ValueError("closed form only exists for the analytic family")
    if method == "closed" or (method == "auto" and density.has_closed_form):
        alpha = density.gamma if density.amplitude > 0 else np.inf
        return CorrelationFunction(_closed_form_evaluator(density), "analytic_closed_form",
                                   density, alpha)
    ev = _fourier_evaluator(density, density.omega_max, density.breakpoints, -1, rtol)
    return CorrelationFunction(ev, "quadrature", density)


def fourier_jhat(density: SpectralDensity, eps):
    """Fourier transform of h at eps: 2 pi J(eps) for eps > 0, zero otherwise."""
    e = np.asarray(eps, dtype=float)
    out = np.where(e > 0, 2 * np.pi * density(np.where(e > 0, e, 1.0)), 0.0)
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------ half transforms
def _rotated_tail(g, nu, T):
    """Integral of exp(i nu s) g(s) over [T, inf), rotating the contour off the axis.

    ``g`` must accept complex arguments and be analytic in the half plane the
    contour enters (upper for nu > 0, lower for nu < 0).
    """
    direction = 1j if nu > 0 else -1j
    Y = 60.0 / abs(nu)
    edges = np.concatenate([[0.0], np.geomspace(min(1e-6, Y * 1e-8), Y, 160)])

    def f(y):
        s = T + direction * y
        return np.exp(1j * nu * s) * g(s) * direction
    return complex(gauss_panels(f, edges))


def _closed_form_tail(density, nu, T, sign=1):
    """Integral over [T, inf) of exp(i nu s) h(sign s) for the analytic family."""
    A, gam, c = density.amplitude, density.gamma, density.omega_c
    p = gam + 1
    pref = A * gamma_fn(p) * c ** p
    if nu == 0:
        return complex(pref * (1 + 1j * sign * c * T) ** (1 - p) / ((p - 1) * 1j * sign * c))
    g = lambda s: pref * (1 + 1j * sign * c * s) ** (-p)
    return _rotated_tail(g, nu, T)


def _time_edges(T, nu, c):
    osc = np.linspace(0, T, int(np.ceil(T / min(np.pi / abs(nu), T) if nu else 1)) + 1)
    logs = np.concatenate([[0.0], np.geomspace(1e-4 / c, T, 240)])
    return np.union1d(osc, logs)


def half_fourier(density: SpectralDensity, nu, method="auto", t_tail=LAMB_T_TAIL):
    """Integral of exp(i nu s) h(s) over s in [0, inf).

    Real part equals pi J(nu) (half the Fourier transform of h); the imaginary
    part is the principal-value Lamb coefficient.  ``method`` selects the
    time-domain route (analytic family: panels on [0, t_tail] plus a
    contour-rotated tail) or the frequency-domain principal value.
    """
    nu = float(nu)
    if method == "auto":
        method = "time" if density.has_closed_form else "frequency"
    if density.is_zero:
        return 0j
    if method == "time":
        if not density.has_closed_form:
            raise ValueError("time route requires the closed-form correlation")
        h = _closed_form_evaluator(density)
        edges = _time_edges(t_tail, nu, density.omega_c)
        bulk = gauss_panels(lambda s: np.exp(1j * nu * s) * h(s), edges)
        return complex(bulk + _closed_form_tail(density, nu, t_tail))
    if method == "frequency":
        return complex(np.pi * density(nu), principal_value(density, nu))
    raise ValueError(f"unknown method {method!r}")


def principal_value(density: SpectralDensity, nu):
    """P-integral of J(w) / (nu - w) over (0, omega_max]."""
    wmax = density.omega_max
    pts = sorted({0.0, wmax, *[b for b in density.breakpoints if 0 < b < wmax]})
    # merge the two intervals around nu if nu sits on a breakpoint
    if 0 < nu < wmax and nu in pts:
        k = pts.index(nu)
        pts.pop(k)
    kw = dict(limit=500, epsabs=1e-14, epsrel=1e-11)
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if a < nu < b:
            val, _ = integrate.quad(density, a, b, weight="cauchy", wvar=nu, **kw)
            total -= val
        else:
            val, _ = integrate.quad(lambda w: density(w) / (nu - w), a, b, **kw)
            total += val
    return total


def lamb_coefficient(density: SpectralDensity, nu, method="auto"):
    return half_fourier(density, nu, method).imag


def numeric_fourier(corr: CorrelationFunction, eps, T):
    """Integral of exp(i eps t) h(t) over [-T, T] by panel quadrature of h."""
    c = corr.density.omega_c if corr.density is not None and corr.density.omega_c else 1.0
    edges = _time_edges(T, eps if eps else 1.0, c)
    val = gauss_panels(lambda s: np.exp(1j * eps * s) * corr(s), edges)
    return 2.0 * float(np.real(val))


# ------------------------------------------------------------ boundary data
@dataclass(frozen=True)
class BoundaryProfiles:
    """Radial profiles of the boundary vectors, given as amplitudes in omega.

    The coupling profile has radial amplitude sqrt(J), so cross densities are
    conj(sqrt(J)) * psi.  Profiles vanish outside (0, omega_max].
    """

    psi_left: Optional[Callable] = None
    psi_right: Optional[Callable] = None
    omega_max: float = 40.0

    @classmethod
    def scaled_phi(cls, density, left=0.0, right=0.0, phase_left=0.0, phase_right=0.0):
        """psi = c * sqrt(J(w)) * exp(i phase * w) for each side."""
        def make(c, ph):
            if c == 0:
                return None
            return lambda w: c * np.sqrt(density(w)) * np.exp(1j * ph * np.asarray(w))
        return cls(make(left, phase_left), make(right, phase_right), density.omega_max)

    def _eval(self, f, w):
        w = np.asarray(w, dtype=float)
        if f is None:
            return np.zeros(w.shape, dtype=complex)
        inside = (w > 0) & (w <= self.omega_max)
        return np.where(inside, f(np.where(inside, w, 1.0)), 0.0).astype(complex)

    def left(self, w):
        return self._eval(self.psi_left, w)

    def right(self, w):
        return self._eval(self.psi_right, w)

    def cross_densities(self, density: SpectralDensity):
        phi = lambda w: np.sqrt(density(w))
        return (lambda w: phi(w) * self.left(w),
                lambda w: phi(w) * self.right(w),
                lambda w: np.conj(self.left(w)) * self.right(w))

    def norms(self):
        edges = np.union1d(graded_edges(0.0, self.omega_max),
                           np.linspace(0, self.omega_max, 513))
        nl = gauss_panels(lambda w: np.abs(self.left(w)) ** 2, edges)
        nr = gauss_panels(lambda w: np.abs(self.right(w)) ** 2, edges)
        return float(nl), float(nr)


def boundary_correlations(density: SpectralDensity, profiles: BoundaryProfiles, rtol=1e-8):
    """Return h_left, h_right, h_join as CorrelationFunction objects.

    h_left(t) = int J_left e^{-iwt}, h_right(t) = int J_right e^{+iwt},
    h_join(t) = int J_join e^{+iwt}.
    """
    jl, jr, jj = profiles.cross_densities(density)
    wmax = min(density.omega_max, profiles.omega_max)
    br = density.breakpoints
    return {
        "h_left": CorrelationFunction(_fourier_evaluator(jl, wmax, br, -1, rtol), "quadrature", density),
        "h_right": CorrelationFunction(_fourier_evaluator(jr, wmax, br, +1, rtol), "quadrature", density),
        "h_join": CorrelationFunction(_fourier_evaluator(jj, profiles.omega_max, br, +1, rtol),
                                      "quadrature", density),
    }


# ------------------------------------------------------------ decay norms
def _log_edges(a, b, per_decade=24):
    if a == 0:
        lo = min(1e-3, b / 10)
        n = max(2, int(np.ceil(per_decade * np.log10(b / lo))))
        return np.concatenate([[0.0], np.geomspace(lo, b, n)])
    n = max(2, int(np.ceil(per_decade * np.log10(b / a))))
    return np.geomspace(a, b, n)


class _DecaySampler:
    """|h| sampled once on quadrature nodes so many alpha values are cheap."""

    def __init__(self, corr, t_max, order=8):
        x0, w0 = np.polynomial.legendre.leggauss(order)
        self.parts = {}
        for name, (a, b) in {"full": (0.0, t_max), "upper": (t_max / 2, t_max),
                             "lower": (t_max / 4, t_max / 2)}.items():
            e = _log_edges(a, b)
            mid, half = 0.5 * (e[1:] + e[:-1]), 0.5 * (e[1:] - e[:-1])
            x = (mid[:, None] + half[:, None] * x0).ravel()
            w = (half[:, None] * w0).ravel()
            self.parts[name] = (x, w, np.abs(corr(x)))

    def integral(self, name, alpha):
        x, w, a = self.parts[name]
        return float(np.sum(w * (1 + x) ** alpha * a))


@dataclass
class WeightedNorm:
    value: float
    converged: bool
    tail_fraction: float = 0.0
    shell_ratio: float = 0.0


def _norm_from_sampler(sm, alpha):
    value = sm.integral("full", alpha)
    upper = sm.integral("upper", alpha)
    lower = sm.integral("lower", alpha)
    if value == 0:
        return WeightedNorm(0.0, True, 0.0, 0.0)
    frac = upper / value
    ratio = upper / lower if lower > 0 else 0.0
    return WeightedNorm(value, frac < 0.01, frac, ratio)


def weighted_decay_norm(corr: CorrelationFunction, alpha, t_max) -> WeightedNorm:
    """Integral of (1 + t)**alpha |h(t)| over [0, t_max].

    Converged when the slice [t_max/2, t_max] holds under 1% of the value.
    ``shell_ratio`` compares that slice to [t_max/4, t_max/2]; it tends to
    2**(alpha - a) when |h| ~ t**-(a + 1).
    """
    if alpha < 0 or t_max <= 0:
        raise ValueError("need alpha >= 0 and t_max > 0")
    if corr.is_zero:
        return WeightedNorm(0.0, True)
    return _norm_from_sampler(_DecaySampler(corr, t_max), alpha)


def sup_weighted_norm(corr: CorrelationFunction, alpha, t_max, n=4000):
    """sup of (1 + t)**alpha |h(t)| on a log grid in [0, t_max]."""
    t = np.concatenate([[0.0], np.geomspace(1e-3, t_max, n)])
    return float(np.max((1 + t) ** alpha * np.abs(corr(t))))


@dataclass
class RegularityReport:
    max_alpha: float
    derivative_bounds_ok: bool
    samples: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({"max_alpha": self.max_alpha,
                           "derivative_bounds_ok": self.derivative_bounds_ok,
                           "samples": self.samples}, indent=2)


def _derivative_check(density, gamma_hint, n_points=121):
    """Check |d^n J| <= C w**(gamma - n), n = 0, 1, on (0, 2] by finite differences.

    The bound is judged by comparing the largest ratio on (0, 1e-3] with the
    largest on [1e-3, 2]; a blow-up towards zero by more than 10x fails.
    """
    w = np.geomspace(1e-6, min(2.0, density.omega_max), n_points)
    step = 1e-4 * w
    j0 = density(w)
    j1 = (density(w + step) - density(w - step)) / (2 * step)
    ok, consts = True, []
    for n, jn in ((0, j0), (1, j1)):
        r = np.abs(jn) / w ** (gamma_hint - n)
        small, big = r[w <= 1e-3], r[w >= 1e-3]
        C = float(np.max(r))
        consts.append(C)
        ref = float(np.max(big))
        if ref == 0:
            ok &= bool(np.max(small) == 0)
        else:
            ok &= bool(np.max(small) <= 10 * ref)
    return ok, consts


def infrared_regularity_report(density: SpectralDensity, gamma_hint, t_max=None,
                               iterations=40) -> RegularityReport:
    """Estimate the largest alpha with finite weighted decay norm and check J's small-w bounds.

    The finiteness decision uses the dyadic shell ratio of weighted_decay_norm
    at large ``t_max`` (1e6 for closed-form correlations, 2e3 otherwise):
    the norm is finite when consecutive shells shrink.
    """
    if density.is_zero:
        return RegularityReport(float("inf"), True, {"alpha": [], "shell_ratio": []})
    corr = correlation_h(density)
    if t_max is None:
        t_max = 1e6 if corr.source == "analytic_closed_form" else 2e3
    sm = _DecaySampler(corr, t_max)
    trace_a, trace_r = [], []

    def finite(a):
        r = _norm_from_sampler(sm, a).shell_ratio
        trace_a.append(a)
        trace_r.append(r)
        return r < 1.0

    lo, hi = 0.0, max(4.0, 2 * gamma_hint + 2)
    if not finite(lo):
        max_alpha = 0.0
    else:
        while finite(hi) and hi < 64:
            lo, hi = hi, 2 * hi
        if hi >= 64 and finite(hi):
            max_alpha = float("inf")
        else:
            for _ in range(iterations):
                mid = 0.5 * (lo + hi)
                if finite(mid):
                    lo = mid
                else:
                    hi = mid
            max_alpha = 0.5 * (lo + hi)
    ok, consts = _derivative_check(density, gamma_hint)
    samples = {"alpha": trace_a, "shell_ratio": trace_r, "t_max": t_max,
               "derivative_constants": consts}
    return RegularityReport(max_alpha, ok, samples)


# ------------------------------------------------------------ dumps
def write_correlation_csv(corr: CorrelationFunction, times, path):
    t = np.asarray(times, dtype=float)
    h = corr(t)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "re_h", "im_h", "abs_h"])
        for ti, hi in zip(t, h):
            w.writerow([repr(float(ti)), repr(float(hi.real)), repr(float(hi.imag)),
                        repr(float(abs(hi)))])


def write_regularity_json(report: RegularityReport, path):
    with open(path, "w") as fh:
        fh.write(report.to_json())
