"""Statevector and density-matrix simulation with a simple noise model.

The statevector path runs on the hot kernels (numba by default); the
density-matrix path embeds every gate as a dense matrix on the full register,
which is cheap at <= 5 qubits and makes the depolarizing channel trivial to
compose.  Qubit j of the register is bit j of the basis index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import kernels
from .pauli import PauliString, PauliSum

NORM_TOL = 1e-10

# U3 angle triples for mapping X/Y measurement bases onto Z
_BASIS_CHANGE = {"X": (math.pi / 2, 0.0, math.pi), "Y": (math.pi / 2, 0.0, math.pi / 2)}


class SimulationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# gates and circuits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class U3:
    theta: float
    phi: float
    lam: float
    qubit: int

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta / 2), math.sin(self.theta / 2)
        return np.array(
            [
                [c, -np.exp(1j * self.lam) * s],
                [np.exp(1j * self.phi) * s, np.exp(1j * (self.phi + self.lam)) * c],
            ]
        )

    @property
    def qubits(self):
        return (self.qubit,)


@dataclass(frozen=True)
class Ry:
    theta: float
    qubit: int

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta / 2), math.sin(self.theta / 2)
        return np.array([[c, -s], [s, c]], dtype=complex)

    @property
    def qubits(self):
        return (self.qubit,)


def hadamard(qubit: int) -> U3:
    return U3(math.pi / 2, 0.0, math.pi, qubit)


@dataclass(frozen=True)
class CNOT:
    control: int
    target: int

    def __post_init__(self):
        if self.control == self.target:
            raise ValueError("CNOT qubits must be distinct")

    @property
    def qubits(self):
        return (self.control, self.target)


@dataclass(frozen=True)
class PauliRotation:
    """exp(-i angle/2 * sigma) for a canonical (phase 0) Hermitian string."""

    string: PauliString
    angle: float

    def __post_init__(self):
        if self.string.phase_exp != 0:
            raise ValueError("rotation strings must carry no i^k phase")

    @property
    def qubits(self):
        return tuple(q for q in range(self.string.n_qubits) if (self.string.support >> q) & 1)


@dataclass(frozen=True)
class DenseUnitary:
    matrix: np.ndarray
    targets: tuple

    def __post_init__(self):
        dim = 2 ** len(self.targets)
        m = np.asarray(self.matrix)
        if m.shape != (dim, dim):
            raise ValueError("payload shape does not match target count")
        if np.linalg.norm(m @ m.conj().T - np.eye(dim)) > NORM_TOL * dim:
            raise ValueError("payload is not unitary")
        if len(set(self.targets)) != len(self.targets):
            raise ValueError("duplicate target qubits")

    @property
    def qubits(self):
        return tuple(self.targets)


@dataclass(frozen=True)
class ControlledUnitary:
    control: int
    matrix: np.ndarray
    targets: tuple

    def __post_init__(self):
        DenseUnitary(self.matrix, self.targets)  # reuse validation
        if self.control in self.targets:
            raise ValueError("control overlaps targets")

    @property
    def qubits(self):
        return (self.control,) + tuple(self.targets)


Gate = Union[U3, Ry, CNOT, PauliRotation, DenseUnitary, ControlledUnitary]


@dataclass
class Circuit:
    n_qubits: int
    gates: list = field(default_factory=list)

    def __post_init__(self):
        for g in self.gates:
            self._check(g)

    def _check(self, gate: Gate):
        for q in gate.qubits:
            if not 0 <= q < self.n_qubits:
                raise ValueError(f"gate {gate} does not fit a {self.n_qubits}-qubit register")

    def append(self, gate: Gate):
        self._check(gate)
        self.gates.append(gate)

    def extend(self, gates):
        for g in gates:
            self.append(g)

    def copy(self) -> "Circuit":
        return Circuit(self.n_qubits, list(self.gates))

    def __len__(self):
        return len(self.gates)

    def dense(self) -> np.ndarray:
        """Full-register matrix of the circuit (small registers only)."""
        dim = 2 ** self.n_qubits
        m = np.eye(dim, dtype=complex)
        for g in self.gates:
            m = _embed(g, self.n_qubits) @ m
        return m


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amp = np.zeros(2 ** n_qubits, dtype=complex)
        amp[0] = 1.0
        return cls(n_qubits, amp)

    @classmethod
    def from_basis_index(cls, n_qubits: int, index: int) -> "StateVector":
        amp = np.zeros(2 ** n_qubits, dtype=complex)
        amp[index] = 1.0
        return cls(n_qubits, amp)

    @classmethod
    def from_label(cls, label: str) -> "StateVector":
        """Bitstring label, character k giving the state of qubit k."""
        idx = 0
        for k, ch in enumerate(label):
            if ch == "1":
                idx |= 1 << k
            elif ch != "0":
                raise ValueError(f"bad basis label {label!r}")
        return cls.from_basis_index(len(label), idx)

    @classmethod
    def from_amplitudes(cls, amplitudes) -> "StateVector":
        amp = np.asarray(amplitudes, dtype=complex).ravel()
        n = int(round(math.log2(amp.shape[0])))
        if 2 ** n != amp.shape[0]:
            raise ValueError("amplitude length is not a power of two")
        norm = np.linalg.norm(amp)
        if abs(norm - 1.0) > 1e-8:
            amp = amp / norm
        return cls(n, amp)

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def density_matrix(self) -> "DensityMatrix":
        return DensityMatrix(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))

    def is_real(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.amplitudes.imag)) < tol)


@dataclass
class DensityMatrix:
    n_qubits: int
    matrix: np.ndarray

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        return state.density_matrix()

    def copy(self) -> "DensityMatrix":
        return DensityMatrix(self.n_qubits, self.matrix.copy())

    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def validate(self, psd_tol: float = 1e-9):
        m = self.matrix
        if np.linalg.norm(m - m.conj().T) > NORM_TOL * m.shape[0]:
            raise SimulationError("density matrix not Hermitian")
        if abs(np.trace(m).real - 1.0) > NORM_TOL * m.shape[0]:
            raise SimulationError("density matrix trace differs from 1")
        if np.linalg.eigvalsh(m).min() < -psd_tol:
            raise SimulationError("density matrix has a significant negative eigenvalue")


State = Union[StateVector, DensityMatrix]


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing noise after every gate plus per-qubit readout confusion.

    ``readout[q]`` is a 2x2 row-stochastic matrix, rows indexed by the true
    bit and columns by the reported bit.
    """

    p1: float
    p2: float
    readout: np.ndarray  # shape (n_qubits, 2, 2)

    @classmethod
    def uniform(cls, n_qubits: int, p1: float, p2: float, flip: float) -> "NoiseModel":
        r = np.array([[1 - flip, flip], [flip, 1 - flip]], dtype=float)
        return cls(p1, p2, np.repeat(r[None, :, :], n_qubits, axis=0))

    def __post_init__(self):
        if not (0 <= self.p1 <= 1 and 0 <= self.p2 <= 1):
            raise ValueError("depolarizing probabilities must lie in [0, 1]")
        rows = np.asarray(self.readout).sum(axis=2)
        if np.max(np.abs(rows - 1.0)) > 1e-9:
            raise ValueError("readout confusion rows must sum to 1")

    def confusion_matrix(self, qubits=None) -> np.ndarray:
        """Column-stochastic confusion M[observed, true] on the given qubits."""
        qubits = list(range(self.readout.shape[0])) if qubits is None else list(qubits)
        m = np.array([[1.0]])
        for q in qubits:
            m = np.kron(self.readout[q].T, m)
        return m


@dataclass
class MeasurementCounts:
    """Histogram over computational-basis outcomes of an N-qubit register."""

    n_qubits: int
    counts: dict  # int outcome -> count
    shots: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to shots")

    @classmethod
    def from_labels(cls, labeled: dict) -> "MeasurementCounts":
        n = len(next(iter(labeled)))
        counts = {}
        for label, c in labeled.items():
            idx = 0
            for k, ch in enumerate(label):
                if ch == "1":
                    idx |= 1 << k
            counts[idx] = counts.get(idx, 0) + c
        return cls(n, counts, sum(labeled.values()))

    def labeled(self) -> dict:
        out = {}
        for idx, c in sorted(self.counts.items()):
            label = "".join("1" if (idx >> k) & 1 else "0" for k in range(self.n_qubits))
            out[label] = c
        return out

    def distribution(self) -> np.ndarray:
        p = np.zeros(2 ** self.n_qubits)
        for idx, c in self.counts.items():
            p[idx] = c / self.shots
        return p


# ---------------------------------------------------------------------------
# gate application
# ---------------------------------------------------------------------------

def _embed(gate: Gate, n: int) -> np.ndarray:
    """Dense full-register matrix of a gate."""
    dim = 2 ** n
    if isinstance(gate, (U3, Ry)):
        m = np.array([[1.0]], dtype=complex)
        for q in range(n):
            m = np.kron(gate.matrix() if q == gate.qubit else np.eye(2), m)
        return m
    if isinstance(gate, CNOT):
        out = np.zeros((dim, dim), dtype=complex)
        cbit, tbit = 1 << gate.control, 1 << gate.target
        for i in range(dim):
            j = i ^ tbit if i & cbit else i
            out[j, i] = 1.0
        return out
    if isinstance(gate, PauliRotation):
        s = gate.string
        half = gate.angle / 2.0
        return math.cos(half) * np.eye(dim) - 1j * math.sin(half) * s.to_matrix()
    if isinstance(gate, DenseUnitary):
        return _embed_dense(np.asarray(gate.matrix), gate.targets, n)
    if isinstance(gate, ControlledUnitary):
        u = _embed_dense(np.asarray(gate.matrix), gate.targets, n)
        cbit = 1 << gate.control
        out = np.eye(dim, dtype=complex)
        rows = [i for i in range(dim) if i & cbit]
        out[np.ix_(rows, rows)] = u[np.ix_(rows, rows)]
        return out
    raise TypeError(f"unknown gate {gate!r}")


def _embed_dense(u: np.ndarray, targets, n: int) -> np.ndarray:
    dim = 2 ** n
    k = len(targets)
    out = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        sub_i = 0
        for a, q in enumerate(targets):
            sub_i |= ((i >> q) & 1) << a
        base = i
        for q in targets:
            base &= ~(1 << q)
        for sub_j in range(2 ** k):
            j = base
            for a, q in enumerate(targets):
                j |= ((sub_j >> a) & 1) << q
            out[i, j] = u[sub_i, sub_j]
    return out


def _apply_gate_sv(amp: np.ndarray, gate: Gate, n: int) -> np.ndarray:
    if isinstance(gate, (U3, Ry)):
        return kernels.apply_1q(amp, gate.matrix(), gate.qubit, n)
    if isinstance(gate, CNOT):
        return kernels.apply_cnot(amp, gate.control, gate.target)
    if isinstance(gate, PauliRotation):
        return kernels.apply_pauli_rotation(
            amp, gate.string.x_bits, gate.string.z_bits, gate.angle
        )
    return _embed(gate, n) @ amp


def _depolarize(rho: np.ndarray, qubits, p: float, n: int) -> np.ndarray:
    """rho -> (1-p) rho + p * Tr_Q(rho) (x) I/2^|Q| re-embedded on Q."""
    if p == 0.0:
        return rho
    qubits = sorted(qubits)
    k = len(qubits)
    rest = [q for q in range(n) if q not in qubits]
    perm = qubits + rest
    t = rho.reshape([2] * (2 * n))
    # tensor axes: row bits then column bits; axis of qubit q (row) = n-1-q
    row_axes = [n - 1 - q for q in perm]
    col_axes = [2 * n - 1 - q for q in perm]
    t = np.transpose(t, row_axes + col_axes)
    t = t.reshape(2 ** k, 2 ** (n - k), 2 ** k, 2 ** (n - k))
    reduced = np.einsum("abad->bd", t)  # trace over the Q block
    mixed = np.zeros_like(t)
    for a in range(2 ** k):
        mixed[a, :, a, :] = reduced / (2 ** k)
    t = (1 - p) * t + p * mixed
    t = t.reshape([2] * (2 * n))
    inv = np.argsort(row_axes + col_axes)
    t = np.transpose(t, inv)
    return t.reshape(rho.shape)


def apply_circuit(state: State, circuit: Circuit, noise: Optional[NoiseModel] = None) -> State:
    """Apply gates in order; with noise, depolarize after each gate.

    Noise requires a DensityMatrix.  Returns a new state of the same kind.
    """
    n = circuit.n_qubits
    if isinstance(state, StateVector):
        if noise is not None:
            raise SimulationError("noise simulation requires a DensityMatrix")
        amp = state.amplitudes
        for gate in circuit.gates:
            amp = _apply_gate_sv(amp, gate, n)
        norm = np.linalg.norm(amp)
        if abs(norm - 1.0) > NORM_TOL:
            raise SimulationError(f"norm drifted to {norm}")
        return StateVector(n, amp)
    rho = state.matrix
    for gate in circuit.gates:
        u = _embed(gate, n)
        rho = u @ rho @ u.conj().T
        if noise is not None:
            qs = gate.qubits
            p = noise.p1 if len(qs) == 1 else noise.p2
            rho = _depolarize(rho, qs, p, n)
    return DensityMatrix(n, rho)


# ---------------------------------------------------------------------------
# expectations and sampling
# ---------------------------------------------------------------------------

def _string_expectation(state: State, string: PauliString) -> complex:
    if isinstance(state, StateVector):
        ph = string.hermitian_phase() * kernels.string_phase(string.x_bits, string.z_bits)
        raw = kernels.pauli_overlap(state.amplitudes, string.x_bits, string.z_bits)
        return ph * raw
    return complex(np.trace(state.matrix @ string.to_matrix()))


def expectation(state: State, observable) -> float:
    """<O> for a Hermitian PauliString or PauliSum; small imaginary residue dropped."""
    if isinstance(observable, PauliString):
        if observable.phase_exp % 2 != 0:
            raise ValueError("observable must be Hermitian")
        val = _string_expectation(state, observable)
    else:
        val = sum(
            coeff * _string_expectation(state, s) for coeff, s in observable.terms
        )
    val = complex(val)
    if abs(val.imag) > 1e-8:
        raise SimulationError(f"expectation has imaginary residue {val.imag}")
    return float(val.real)


def expectation_complex(state: State, string: PauliString) -> complex:
    """<p> for a possibly non-Hermitian phased string (used for operator products)."""
    return complex(_string_expectation(state, string))


def basis_change_gates(strings) -> list:
    """Single-qubit gates mapping each string's X/Y factors onto Z.

    All strings must be qubit-wise commuting so a single setting serves them.
    """
    factors = {}
    for s in strings:
        for q in range(s.n_qubits):
            f = s.factor(q)
            if f == "I":
                continue
            if factors.get(q, f) != f:
                raise ValueError("strings are not qubit-wise commuting")
            factors[q] = f
    gates = []
    for q in sorted(factors):
        f = factors[q]
        if f in _BASIS_CHANGE:
            th, ph, lam = _BASIS_CHANGE[f]
            gates.append(U3(th, ph, lam, q))
    return gates


def outcome_distribution(state: State) -> np.ndarray:
    if isinstance(state, StateVector):
        return np.abs(state.amplitudes) ** 2
    return np.clip(np.diag(state.matrix).real, 0.0, None)


def sample_counts(probs: np.ndarray, shots: int, rng: np.random.Generator,
                  n_qubits: int) -> MeasurementCounts:
    p = np.clip(probs, 0.0, None)
    p = p / p.sum()
    draws = rng.multinomial(shots, p)
    counts = {int(i): int(c) for i, c in enumerate(draws) if c}
    return MeasurementCounts(n_qubits, counts, shots)


def parity_expectation(distribution, mask: int, n_qubits: int, sign: float = 1.0):
    """Mean of sign * (-1)^popcount(outcome & mask) under a distribution.

    Accepts a MeasurementCounts or a probability vector (quasi-probabilities
    from readout mitigation included).  Returns (value, variance-of-mean).
    """
    if isinstance(distribution, MeasurementCounts):
        probs = distribution.distribution()
        shots = distribution.shots
    else:
        probs = np.asarray(distribution, dtype=float)
        shots = None
    idx = np.arange(probs.shape[0], dtype=np.uint64)
    signs = 1.0 - 2.0 * (np.bitwise_count(idx & np.uint64(mask)) & np.uint64(1)).astype(float)
    value = sign * float(np.dot(signs, probs))
    if shots is None or shots == 0:
        return value, 0.0
    return value, max(0.0, (1.0 - value ** 2) / shots)


def sample_expectation(
    state: State,
    string: PauliString,
    shots: int,
    rng: np.random.Generator,
    noise: Optional[NoiseModel] = None,
    simultaneous: Optional[PauliString] = None,
):
    """Shot-based estimate of <string> via a basis-change-and-measure circuit.

    Returns (value, variance, counts).  When ``simultaneous`` is given it
    must be qubit-wise commuting with ``string`` and shares the same setting;
    its outcome parity can be evaluated on the returned counts.
    """
    if shots <= 0:
        raise ValueError("shots must be positive")
    n = state.n_qubits
    joint = [string] + ([simultaneous] if simultaneous is not None else [])
    circ = Circuit(n, basis_change_gates(joint))
    if isinstance(state, StateVector):
        post = apply_circuit(state.copy(), circ)
    else:
        post = apply_circuit(state.copy(), circ, noise)
    probs = outcome_distribution(post)
    if noise is not None:
        probs = noise.confusion_matrix(range(n)) @ probs
    counts = sample_counts(probs, shots, rng, n)
    value, variance = parity_expectation(counts, string.support, n)
    return value, variance, counts


def reduced_density(state: State, window) -> DensityMatrix:
    """Partial trace onto a contiguous qubit window."""
    qubits = list(window)
    if qubits != list(range(qubits[0], qubits[0] + len(qubits))):
        raise ValueError("window must be contiguous")
    n = state.n_qubits
    if qubits[0] < 0 or qubits[-1] >= n:
        raise ValueError("window out of range")
    rho = state.matrix if isinstance(state, DensityMatrix) else state.density_matrix().matrix
    k = len(qubits)
    rest = [q for q in range(n) if q not in qubits]
    # position 0 of the transposed tensor is the most significant bit, so the
    # kept block lists window qubits from highest to lowest
    keep_rows = [n - 1 - q for q in reversed(qubits)]
    rest_rows = [n - 1 - q for q in reversed(rest)]
    t = rho.reshape([2] * (2 * n))
    order = keep_rows + rest_rows + [a + n for a in keep_rows] + [a + n for a in rest_rows]
    t = np.transpose(t, order).reshape(2 ** k, 2 ** (n - k), 2 ** k, 2 ** (n - k))
    red = np.einsum("abcb->ac", t)
    return DensityMatrix(k, red)
