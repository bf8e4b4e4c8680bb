import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from spinboson.correlations import (BoundaryProfiles, boundary_correlations, correlation_h,
                                    fourier_jhat, half_fourier, infrared_regularity_report,
                                    numeric_fourier, principal_value, sup_weighted_norm,
                                    weighted_decay_norm, write_correlation_csv,
                                    write_regularity_json)
from spinboson.model import SpectralDensity


def quad_h(J, t, wmax=60.0):
    """Independent oracle: QUADPACK Fourier integrals of J."""
    re = integrate.quad(J, 0, wmax, weight="cos", wvar=t, limit=400)[0]
    im = -integrate.quad(J, 0, wmax, weight="sin", wvar=t, limit=400)[0]
    return re + 1j * im


def test_closed_form_examples():
    h1 = correlation_h(SpectralDensity.analytic(1))
    assert h1.source == "analytic_closed_form"
    t = np.linspace(-5, 5, 21)
    assert np.allclose(h1(t), 1 / (1 + 1j * t) ** 2, rtol=1e-14)
    assert h1(0.0) == pytest.approx(1.0)
    h2 = correlation_h(SpectralDensity.analytic(2))
    assert np.allclose(np.abs(h2(t)), 2 / (1 + t ** 2) ** 1.5, rtol=1e-13)
    for tt in (0.3, 2.0, 7.5):
        assert abs(h1(tt) - quad_h(lambda w: w * np.exp(-w), tt)) < 1e-9


def test_zero_density():
    h = correlation_h(SpectralDensity.zero())
    assert np.all(h(np.linspace(0, 10, 5)) == 0)


def test_quadrature_matches_closed_form():
    dens = SpectralDensity.analytic(1.5, 0.7)
    hq = correlation_h(dens, method="quadrature")
    hc = correlation_h(dens, method="closed")
    t = np.array([0.0, 0.5, 3.0, 17.0, 55.0, 100.0])
    rel = np.abs(hq(t) - hc(t)) / np.abs(hc(t))
    assert np.max(rel) < 1e-8


def test_linearity_and_tabulated():
    a, b = SpectralDensity.analytic(1), SpectralDensity.tabulated([0, 1, 3], [0, 2, 0])
    hs = correlation_h(a + b)
    ha, hb = correlation_h(a, method="quadrature"), correlation_h(b)
    t = np.array([0.2, 1.0, 4.0, 9.0])
    assert np.max(np.abs(hs(t) - ha(t) - hb(t))) < 1e-10
    for tt in t:
        oracle = (integrate.quad(lambda w: b(w) * np.cos(w * tt), 0, 3, points=[1])[0]
                  - 1j * integrate.quad(lambda w: b(w) * np.sin(w * tt), 0, 3, points=[1])[0])
        assert abs(hb(tt) - oracle) < 1e-10


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50))
def test_conjugate_symmetry(t):
    for h in (correlation_h(SpectralDensity.analytic(1.3)),
              correlation_h(SpectralDensity.tabulated([0, 1, 2], [0, 1, 0]))):
        assert abs(h(-t) - np.conj(h(t))) < 1e-10


def test_fourier_jhat_examples():
    J = SpectralDensity.analytic(1)
    assert fourier_jhat(J, 1.0) == pytest.approx(2 * np.pi / np.e)
    assert fourier_jhat(J, -0.5) == 0 and fourier_jhat(J, 0.0) == 0


def test_fourier_consistency_grows_with_T():
    dens = SpectralDensity.analytic(2)
    h = correlation_h(dens)
    for eps in (0.3, 1.0, 2.7):
        errs = [abs(numeric_fourier(h, eps, T) - fourier_jhat(dens, eps)) for T in (30, 1e3)]
        assert errs[1] < errs[0]
        assert errs[1] / fourier_jhat(dens, eps) < 1e-4


def test_half_fourier_routes_agree():
    dens = SpectralDensity.analytic(2)
    for nu in (-1.3, -0.4, 0.0, 0.6, 1.0):
        t_route = half_fourier(dens, nu, method="time")
        f_route = half_fourier(dens, nu, method="frequency")
        assert abs(t_route - f_route) < 1e-10
        assert t_route.real == pytest.approx(np.pi * dens(nu), abs=1e-10)
    # principal value against an independent Cauchy-weighted quad of J/(nu - w)
    pv = integrate.quad(dens, 0, 40, weight="cauchy", wvar=1.0, limit=400)[0]
    assert principal_value(dens, 1.0) == pytest.approx(-pv, rel=1e-8)


def test_boundary_correlations():
    dens = SpectralDensity.analytic(1)
    same = BoundaryProfiles(lambda w: np.sqrt(dens(w)), None, dens.omega_max)
    out = boundary_correlations(dens, same)
    t = np.array([0.0, 0.7, 4.0])
    assert np.max(np.abs(out["h_left"](t) - 1 / (1 + 1j * t) ** 2)) < 1e-8
    assert np.all(out["h_right"](t) == 0)
    assert np.all(out["h_join"](t) == 0)
    prof = BoundaryProfiles.scaled_phi(dens, left=1.0, right=1.0)
    out = boundary_correlations(dens, prof)
    assert np.max(np.abs(out["h_right"](t) - np.conj(1 / (1 + 1j * t) ** 2))) < 1e-8


def test_weighted_decay_norm_examples():
    g2 = weighted_decay_norm(correlation_h(SpectralDensity.analytic(2)), 1.0, 1e4)
    g1 = weighted_decay_norm(correlation_h(SpectralDensity.analytic(1)), 1.0, 1e4)
    assert g2.converged and not g1.converged
    # oracle: integral of (1+t) * 2 (1+t^2)^-3/2 over [0, 1e4]
    oracle = integrate.quad(lambda t: (1 + t) * 2 / (1 + t * t) ** 1.5, 0, 1e4, limit=400)[0]
    assert g2.value == pytest.approx(oracle, rel=1e-6)
    z = weighted_decay_norm(correlation_h(SpectralDensity.zero()), 1.0, 10.0)
    assert z.value == 0 and z.converged
    assert sup_weighted_norm(correlation_h(SpectralDensity.analytic(2)), 3.0, 1e3) > 1.0


def test_regularity_report(tmp_path):
    for gamma in (1.0, 2.0):
        rep = infrared_regularity_report(SpectralDensity.analytic(gamma), gamma)
        assert abs(rep.max_alpha - gamma) < 0.1
        assert rep.derivative_bounds_ok
    zero = infrared_regularity_report(SpectralDensity.zero(), 1.0)
    assert zero.max_alpha == float("inf") and zero.derivative_bounds_ok
    write_regularity_json(rep, tmp_path / "r.json")
    data = json.loads((tmp_path / "r.json").read_text())
    assert set(data) == {"max_alpha", "derivative_bounds_ok", "samples"}
    # J ~ w^0.5 near zero violates a gamma_hint = 2 bound
    bad = SpectralDensity.callback(lambda w: np.sqrt(w) * np.exp(-w), 40.0)
    assert not infrared_regularity_report(bad, 2.0, t_max=200).derivative_bounds_ok


def test_correlation_csv(tmp_path):
    write_correlation_csv(correlation_h(SpectralDensity.analytic(1)), [0, 1, 2], tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "t,re_h,im_h,abs_h" and len(lines) == 4
