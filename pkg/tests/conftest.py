import numpy as np
import pytest

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI_1Q = {"I": I2, "X": X, "Y": Y, "Z": Z}


def kron_chain(factors):
    """Dense operator from single-qubit factors, factor k on qubit k."""
    m = np.array([[1]], dtype=complex)
    for f in factors:
        m = np.kron(PAULI_1Q[f] if isinstance(f, str) else f, m)
    return m


def op_on(op, qubit, n):
    return kron_chain([op if k == qubit else "I" for k in range(n)])


def random_state(n, rng):
    amp = rng.normal(size=2 ** n) + 1j * rng.normal(size=2 ** n)
    return amp / np.linalg.norm(amp)


def random_unitary(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
