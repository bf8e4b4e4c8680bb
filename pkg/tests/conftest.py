import numpy as np
import pytest

from spinboson.model import CouplingMatrix, SpectralDensity, SystemSpec, build_model

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)


def random_unitary(rng, d):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(rng, d):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (z + z.conj().T)


def random_density_matrix(rng, d):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = z @ z.conj().T
    return rho / np.trace(rho)


def random_model(rng, d, gamma=1.0, lam=0.2, kappa=0.0, basis=True):
    e = np.sort(rng.uniform(0, 2, size=d))
    while d > 1 and np.min(np.diff(e)) < 0.1:
        e = np.sort(rng.uniform(0, 2, size=d))
    U = random_unitary(rng, d) if basis else None
    return build_model(SystemSpec(e, U), CouplingMatrix(random_hermitian(rng, d)),
                       SpectralDensity.analytic(gamma), lam, kappa)


@pytest.fixture
def two_level():
    return build_model(SystemSpec([0.0, 1.0]), CouplingMatrix(PAULI_X),
                       SpectralDensity.analytic(1.0), 0.2, 0.0, 0.9)
