"""Exact-diagonalization references for everything the pipeline estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pauli import PauliString, PauliSum
from .statesim import StateVector

EIGEN_TOL = 1e-10
DEGENERACY_TOL = 1e-8
MAX_QUBITS = 10


@dataclass(frozen=True)
class EigenSystem:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns


def eigensystem(hamiltonian: PauliSum) -> EigenSystem:
    if hamiltonian.n_qubits > MAX_QUBITS:
        raise ValueError(f"exact diagonalization guarded to {MAX_QUBITS} qubits")
    h = hamiltonian.to_matrix()
    vals, vecs = np.linalg.eigh(h)
    return EigenSystem(vals, vecs)


def _boltzmann(eig: EigenSystem, beta: float) -> np.ndarray:
    # shift by the ground energy so large beta cannot overflow
    return np.exp(-beta * (eig.eigenvalues - eig.eigenvalues[0]))


def exact_thermal(observable: PauliSum, hamiltonian: PauliSum, beta: float) -> float:
    """Tr(e^{-beta H} O) / Tr(e^{-beta H}) in the eigenbasis."""
    eig = eigensystem(hamiltonian)
    w = _boltzmann(eig, beta)
    o = eig.eigenvectors.conj().T @ observable.to_matrix() @ eig.eigenvectors
    return float((w * np.diag(o).real).sum() / w.sum())


def exact_ite(psi0: StateVector, hamiltonian: PauliSum, tau: float) -> StateVector:
    """Normalized e^{-tau H} |psi0>."""
    eig = eigensystem(hamiltonian)
    coeffs = eig.eigenvectors.conj().T @ psi0.amplitudes
    coeffs = coeffs * np.exp(-tau * (eig.eigenvalues - eig.eigenvalues[0]))
    amp = eig.eigenvectors @ coeffs
    amp /= np.linalg.norm(amp)
    return StateVector(psi0.n_qubits, amp)


def ite_weight(psi0: StateVector, hamiltonian: PauliSum, tau: float) -> float:
    """|| e^{-tau H} |psi0> ||^2 without spectrum shifting."""
    eig = eigensystem(hamiltonian)
    coeffs = eig.eigenvectors.conj().T @ psi0.amplitudes
    return float(np.sum(np.abs(coeffs) ** 2 * np.exp(-2.0 * tau * eig.eigenvalues)))


def exact_corr(
    u: PauliString,
    v: PauliString,
    hamiltonian: PauliSum,
    beta: float,
    t,
):
    """Tr(e^{-beta H} e^{iHt} U e^{-iHt} V) / Tr(e^{-beta H}).

    ``t`` may be a scalar or an array; the return matches its shape.
    """
    eig = eigensystem(hamiltonian)
    w = _boltzmann(eig, beta)
    w = w / w.sum()
    um = eig.eigenvectors.conj().T @ u.to_matrix() @ eig.eigenvectors
    vm = eig.eigenvectors.conj().T @ v.to_matrix() @ eig.eigenvectors
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    gaps = eig.eigenvalues[:, None] - eig.eigenvalues[None, :]  # E_i - E_f
    weights = w[:, None] * um * vm.T  # (i, f) -> w_i U_if V_fi
    out = np.einsum("if,tif->t", weights, np.exp(1j * gaps[None, :, :] * ts[:, None, None]))
    return complex(out[0]) if np.isscalar(t) or np.asarray(t).ndim == 0 else out


def transition_amplitudes(observable: PauliString, hamiltonian: PauliSum, beta: float):
    """(frequency, amplitude) pairs of the spectral density of <O(t)O>_beta.

    Frequencies are E_i - E_f over eigenpairs with a nonzero matrix element;
    each carries weight e^{-beta E_f} |<i|O|f>|^2 / Z.  Nearly degenerate
    frequencies are merged by summing amplitudes.
    """
    eig = eigensystem(hamiltonian)
    shifted = eig.eigenvalues - eig.eigenvalues[0]
    z = np.exp(-beta * shifted).sum()
    om = eig.eigenvectors.conj().T @ observable.to_matrix() @ eig.eigenvectors
    pairs = []
    dim = eig.eigenvalues.shape[0]
    for i in range(dim):
        for f in range(dim):
            m2 = abs(om[i, f]) ** 2
            if m2 < 1e-12:
                continue
            freq = eig.eigenvalues[i] - eig.eigenvalues[f]
            amp = np.exp(-beta * shifted[f]) * m2 / z
            pairs.append((freq, amp))
    pairs.sort()
    merged = []
    for freq, amp in pairs:
        if merged and abs(freq - merged[-1][0]) < DEGENERACY_TOL:
            merged[-1][1] += amp
        else:
            merged.append([freq, amp])
    return [(float(f), float(a)) for f, a in merged]
