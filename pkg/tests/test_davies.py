import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from spinboson.davies import (LindbladGenerator, build_generator_direct,
                              build_generator_quadrature, commutator_super, dump_generator,
                              dyson_leading_propagator, evolve_semigroup, jump_rates,
                              load_generator, spectral_analysis, unvec, vec)
from spinboson.errors import DegenerateLeadingEigenvalue, SeriesNotConverged, TailTooHeavy
from spinboson.model import CouplingMatrix, SpectralDensity, SystemSpec, build_model

from conftest import PAULI_X, random_density_matrix, random_model

J_RATE = 2 * np.pi / np.e


def two_level(kappa=0.0, lam=0.2, density=None, D=PAULI_X):
    return build_model(SystemSpec([0.0, 1.0]), CouplingMatrix(D),
                       density or SpectralDensity.analytic(1.0), lam, kappa)


def brute_force_generator(model, HL, rates):
    """Plain 2x2 assembly: -i[H_L, rho] + j (e^k s- rho s+ - {s+ s-, rho}/2)."""
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    ek = np.exp(model.kappa)
    d = 2
    M = np.zeros((4, 4), dtype=complex)
    for k in range(4):
        E = np.zeros(4, dtype=complex)
        E[k] = 1
        rho = unvec(E, d)
        out = -1j * (HL @ rho - rho @ HL)
        out += rates * (ek * sm @ rho @ sm.conj().T
                        - 0.5 * (sm.conj().T @ sm @ rho + rho @ sm.conj().T @ sm))
        M[:, k] = vec(out)
    return M


def test_jump_rate_examples():
    r = jump_rates(two_level())
    assert r[1, 0] == pytest.approx(J_RATE, rel=1e-12) and r[0, 1] == 0
    assert not np.any(jump_rates(two_level(D=np.diag([1.0, -1.0]))).matrix)
    one = build_model(SystemSpec([0.0]), CouplingMatrix([[1.0]]), SpectralDensity.analytic(1), 0.1)
    assert jump_rates(one).as_dict() == {}


def test_direct_generator_two_level():
    m = two_level()
    gen = build_generator_direct(m)
    assert np.allclose(gen.diagonal_block, [[0, J_RATE], [0, -J_RATE]], atol=1e-14)
    assert np.max(np.abs(gen.superoperator - brute_force_generator(m, gen.lamb_shift, J_RATE))) < 1e-14
    rng = np.random.default_rng(0)
    for _ in range(20):
        rho = random_density_matrix(rng, 2)
        assert abs(np.trace(gen.apply(rho))) < 1e-12


def test_zero_coupling_generator():
    m = two_level(D=np.zeros((2, 2)))
    for gen in (build_generator_direct(m), build_generator_quadrature(m)):
        assert not np.any(np.abs(gen.superoperator) > 1e-15)
        assert not np.any(gen.lamb_shift)


def test_kappa_weighting_of_gain_terms():
    m = two_level(kappa=0.1)
    gen = build_generator_direct(m)
    assert gen.diagonal_block[0, 1] == pytest.approx(np.exp(0.1) * J_RATE)
    assert gen.diagonal_block[1, 1] == pytest.approx(-J_RATE)
    q = build_generator_quadrature(m)
    assert np.max(np.abs(q.diagonal_block - gen.diagonal_block)) < 1e-6


def test_lamb_shift_level_shifts():
    # the excited level is shifted by S(1) |<0|D|1>|^2, S the principal value part
    from spinboson.correlations import half_fourier
    dens = SpectralDensity.analytic(1.0)
    HL = build_generator_direct(two_level()).lamb_shift
    assert HL[1, 1] == pytest.approx(half_fourier(dens, 1.0).imag, rel=1e-12)
    assert HL[0, 0] == pytest.approx(half_fourier(dens, -1.0).imag, rel=1e-12)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("d", [2, 3])
def test_route_agreement_with_basis_and_kappa(seed, d):
    rng = np.random.default_rng(100 + seed)
    m = random_model(rng, d, gamma=1.0, kappa=0.1)
    a = build_generator_direct(m).superoperator
    b = build_generator_quadrature(m).superoperator
    assert np.max(np.abs(a - b)) < 1e-6


def test_quadrature_route_rejects_slow_tail():
    dens = SpectralDensity.tabulated([0.0, 1.0, 2.0], [0.0, 1.0, 0.0])
    with pytest.raises(TailTooHeavy):
        build_generator_quadrature(two_level(density=dens), s_max=50.0)


def test_spectral_analysis_two_level():
    gen = build_generator_direct(two_level())
    rep = spectral_analysis(gen)
    ev = sorted(rep.eigenvalues, key=lambda z: (z.real, z.imag))
    assert rep.simple_zero and abs(rep.leading) < 1e-12
    assert ev[0].real == pytest.approx(-J_RATE)
    assert ev[1].real == pytest.approx(-J_RATE / 2) and ev[2].real == pytest.approx(-J_RATE / 2)
    assert ev[1].imag == pytest.approx(-ev[2].imag) and abs(ev[1].imag) > 0
    assert np.allclose(rep.stationary, np.diag([1, 0]), atol=1e-12)
    assert rep.gap == pytest.approx(J_RATE / 2)


def test_spectral_analysis_degenerate_and_trivial():
    with pytest.raises(DegenerateLeadingEigenvalue):
        spectral_analysis(build_generator_direct(two_level(D=np.diag([1.0, -1.0]))))
    one = build_model(SystemSpec([0.0]), CouplingMatrix([[1.0]]), SpectralDensity.analytic(1), 0.1)
    rep = spectral_analysis(build_generator_direct(one))
    assert rep.gap == float("inf") and len(rep.eigenvalues) == 1


def test_semigroup_examples():
    m = two_level()
    gen = build_generator_direct(m)
    P0, P1 = np.diag([1.0, 0]), np.diag([0, 1.0])
    assert np.array_equal(evolve_semigroup(gen, m.system, P1, 0.2, 0.0), P1)
    for t in (1.0, 10.0, 50.0):
        rho = evolve_semigroup(gen, m.system, P1, 0.2, t)
        assert rho[1, 1].real == pytest.approx(np.exp(-0.04 * J_RATE * t), rel=1e-10)
        assert np.allclose(evolve_semigroup(gen, m.system, P0, 0.2, t), P0, atol=1e-13)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2 ** 31 - 1))
def test_generator_properties(d, seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, d, gamma=rng.uniform(0.8, 2.5))
    gen = build_generator_direct(m)
    U = m.system.eigenbasis
    # trace preservation and density-matrix outputs
    for _ in range(5):
        rho = random_density_matrix(rng, d)
        assert abs(np.trace(gen.apply(rho))) < 1e-10
        for t in (0.1, 1.0, 10.0):
            out = unvec(expm(t * gen.superoperator) @ vec(rho), d)
            assert abs(np.trace(out) - 1) < 1e-9
            assert np.min(np.linalg.eigvalsh(0.5 * (out + out.conj().T))) >= -1e-9
    # diagonal / off-diagonal block preservation in the eigenbasis
    off = U.conj().T @ random_density_matrix(rng, d) @ U
    off = U @ (off - np.diag(np.diag(off))) @ U.conj().T
    img = U.conj().T @ gen.apply(off) @ U
    assert np.max(np.abs(np.diag(img))) < 1e-10
    diag = U @ np.diag(rng.uniform(size=d)) @ U.conj().T
    img = U.conj().T @ gen.apply(diag) @ U
    assert np.max(np.abs(img - np.diag(np.diag(img)))) < 1e-10
    # Markov generator assembled from the rates alone
    R = jump_rates(m).matrix
    Mk = R.T - np.diag(R.sum(axis=1))
    assert np.max(np.abs(Mk - gen.diagonal_block)) < 1e-10
    # lower-triangular with levels in decreasing energy
    rev = gen.diagonal_block[::-1, ::-1]
    assert np.max(np.abs(np.triu(rev, 1))) < 1e-12


def test_leading_eigenvalue_stays_simple_for_small_kappa():
    rng = np.random.default_rng(7)
    for kappa in (-0.2, -0.05, 0.05, 0.2):
        m = random_model(rng, 3, kappa=kappa)
        rep = spectral_analysis(build_generator_direct(m))
        assert rep.gap > 0


def test_generator_dump_round_trip(tmp_path):
    gen = build_generator_direct(two_level(kappa=0.05))
    rep = spectral_analysis(gen)
    dump_generator(gen, tmp_path / "g.json", rep)
    back = load_generator(tmp_path / "g.json")
    assert isinstance(back, LindbladGenerator)
    assert np.max(np.abs(back.superoperator - gen.superoperator)) == 0
    assert np.max(np.abs(back.diagonal_block - gen.diagonal_block)) == 0


def test_dyson_trivial_cases():
    m = two_level(lam=0.3)
    free = expm(-1j * 2.0 * commutator_super(m.system.hamiltonian))
    assert np.array_equal(dyson_leading_propagator(m, 2.0, 0), free)
    assert np.array_equal(dyson_leading_propagator(m.replace(lam=0.0), 2.0, 3), free)


def test_dyson_convergence_and_failure():
    m = two_level(lam=0.03)
    Q, hist = dyson_leading_propagator(m, 10.0, 4, return_orders=True)
    assert np.max(np.abs(hist[-1] - hist[-2])) < 1e-6
    with pytest.raises(SeriesNotConverged):
        dyson_leading_propagator(two_level(lam=0.3), 10.0, 4)


def test_dyson_approaches_semigroup():
    # at fixed lam^2 t the leading series tends to the Markov semigroup as lam -> 0
    errs = []
    for lam in (0.2, 0.1):
        m = two_level(lam=lam)
        t = 0.5 / lam ** 2
        Q = dyson_leading_propagator(m, t, 8, tol=1e-3)
        gen = build_generator_direct(m)
        G = -1j * t * commutator_super(m.system.hamiltonian) + lam ** 2 * t * gen.superoperator
        errs.append(np.max(np.abs(Q - expm(G))))
    assert errs[1] < errs[0] < 0.05
