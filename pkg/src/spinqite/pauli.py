"""Pauli-string algebra, spin-chain Hamiltonians, Trotter grouping and pools.

Strings are stored symplectically: bit j of ``x_bits`` is set when the factor
on qubit j is X or Y, bit j of ``z_bits`` when it is Z or Y.  The operator
represented is ``i^phase_exp * sigma`` where ``sigma`` is the Hermitian
tensor product of single-qubit Paulis, so multiplication and commutation are
O(1) bit operations.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

_SINGLE = {
    (0, 0): np.eye(2, dtype=complex),
    (1, 0): np.array([[0, 1], [1, 0]], dtype=complex),
    (1, 1): np.array([[0, -1j], [1j, 0]], dtype=complex),
    (0, 1): np.array([[1, 0], [0, -1]], dtype=complex),
}

_LETTER = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}

MATRIX_QUBIT_GUARD = 12


def _popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True, order=True)
class PauliString:
    """An n-qubit Pauli string ``i^phase_exp * sigma(x_bits, z_bits)``.

    Ordering is lexicographic on (x_bits, z_bits), which is the canonical
    pool order used everywhere a deterministic sequence is needed.
    """

    x_bits: int
    z_bits: int
    n_qubits: int = field(compare=False)
    phase_exp: int = field(default=0, compare=False)

    def __post_init__(self):
        mask = (1 << self.n_qubits) - 1
        if self.n_qubits <= 0:
            raise ValueError("n_qubits must be positive")
        if self.x_bits & ~mask or self.z_bits & ~mask:
            raise ValueError("mask bits set beyond n_qubits")
        object.__setattr__(self, "phase_exp", self.phase_exp % 4)

    # -- constructors ------------------------------------------------------

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(0, 0, n_qubits)

    @classmethod
    def from_factors(cls, factors: str) -> "PauliString":
        """Build from a letter string, character k acting on qubit k."""
        x = z = 0
        for k, ch in enumerate(factors.upper()):
            fx, fz = _BITS[ch]
            x |= fx << k
            z |= fz << k
        return cls(x, z, len(factors))

    @classmethod
    def from_label(cls, label: str, n_qubits: int) -> "PauliString":
        """Build from a compact label like ``X0Y1`` or ``Z3``."""
        x = z = 0
        i = 0
        label = label.strip()
        while i < len(label):
            ch = label[i].upper()
            if ch not in "XYZ":
                raise ValueError(f"bad Pauli label {label!r}")
            i += 1
            j = i
            while j < len(label) and label[j].isdigit():
                j += 1
            if j == i:
                raise ValueError(f"missing qubit index in {label!r}")
            q = int(label[i:j])
            if q >= n_qubits:
                raise ValueError(f"qubit {q} out of range in {label!r}")
            fx, fz = _BITS[ch]
            x |= fx << q
            z |= fz << q
            i = j
        return cls(x, z, n_qubits)

    # -- structure ---------------------------------------------------------

    @property
    def support(self) -> int:
        return self.x_bits | self.z_bits

    @property
    def weight(self) -> int:
        return _popcount(self.support)

    @property
    def n_y(self) -> int:
        return _popcount(self.x_bits & self.z_bits)

    @property
    def is_identity(self) -> bool:
        return self.support == 0

    def factor(self, qubit: int) -> str:
        return _LETTER[((self.x_bits >> qubit) & 1, (self.z_bits >> qubit) & 1)]

    def label(self) -> str:
        if self.is_identity:
            return "I"
        parts = [
            f"{self.factor(q)}{q}" for q in range(self.n_qubits) if (self.support >> q) & 1
        ]
        return "".join(parts)

    def __repr__(self):
        pre = {0: "", 1: "i*", 2: "-", 3: "-i*"}[self.phase_exp]
        return f"{pre}{self.label()}"

    # -- algebra -----------------------------------------------------------

    def multiply(self, other: "PauliString") -> "PauliString":
        """Product self * other with the exact i^k phase."""
        if self.n_qubits != other.n_qubits:
            raise ValueError("size mismatch in Pauli product")
        x3 = self.x_bits ^ other.x_bits
        z3 = self.z_bits ^ other.z_bits
        k = (
            self.phase_exp
            + other.phase_exp
            + _popcount(self.x_bits & self.z_bits)
            + _popcount(other.x_bits & other.z_bits)
            + 2 * _popcount(self.z_bits & other.x_bits)
            - _popcount(x3 & z3)
        ) % 4
        return PauliString(x3, z3, self.n_qubits, k)

    def __mul__(self, other):
        return self.multiply(other)

    def commutes(self, other: "PauliString") -> bool:
        if self.n_qubits != other.n_qubits:
            raise ValueError("size mismatch in commutation check")
        sym = _popcount(self.x_bits & other.z_bits) + _popcount(self.z_bits & other.x_bits)
        return sym % 2 == 0

    def qubitwise_commutes(self, other: "PauliString") -> bool:
        """True when on every shared qubit the single-qubit factors are equal."""
        shared = self.support & other.support
        return (self.x_bits ^ other.x_bits) & shared == 0 and (
            self.z_bits ^ other.z_bits
        ) & shared == 0

    def hermitian_phase(self) -> complex:
        return 1j ** self.phase_exp

    def to_matrix(self) -> np.ndarray:
        if self.n_qubits > MATRIX_QUBIT_GUARD:
            raise ValueError(f"dense matrix guarded to {MATRIX_QUBIT_GUARD} qubits")
        m = np.array([[1]], dtype=complex)
        for q in range(self.n_qubits):
            m = np.kron(_SINGLE[((self.x_bits >> q) & 1, (self.z_bits >> q) & 1)], m)
        return (1j ** self.phase_exp) * m


def multiply(p: PauliString, q: PauliString) -> PauliString:
    return p.multiply(q)


def commutes(p: PauliString, q: PauliString) -> bool:
    return p.commutes(q)


@dataclass(frozen=True)
class PauliSum:
    """A Hermitian weighted sum of Pauli strings.

    Canonical form: every stored string has phase_exp 0 (signs and i-powers
    are folded into the real coefficients), duplicates are merged and terms
    are sorted in canonical string order.
    """

    n_qubits: int
    terms: tuple  # tuple[(float, PauliString), ...]

    @classmethod
    def build(cls, n_qubits: int, terms: Iterable[tuple]) -> "PauliSum":
        acc: dict[PauliString, complex] = {}
        for coeff, string in terms:
            if string.n_qubits != n_qubits:
                raise ValueError("term size mismatch")
            canon = PauliString(string.x_bits, string.z_bits, n_qubits)
            acc[canon] = acc.get(canon, 0.0) + complex(coeff) * string.hermitian_phase()
        kept = []
        for string in sorted(acc):
            c = acc[string]
            if abs(c) < 1e-14:
                continue
            if abs(c.imag) > 1e-12 * max(1.0, abs(c.real)):
                raise ValueError(f"non-Hermitian coefficient {c} for {string}")
            kept.append((float(c.real), string))
        return cls(n_qubits, tuple(kept))

    @classmethod
    def from_labels(cls, n_qubits: int, terms: Iterable[tuple]) -> "PauliSum":
        return cls.build(
            n_qubits, ((c, PauliString.from_label(lbl, n_qubits)) for c, lbl in terms)
        )

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if self.n_qubits != other.n_qubits:
            raise ValueError("size mismatch")
        return PauliSum.build(self.n_qubits, list(self.terms) + list(other.terms))

    def scale(self, factor: float) -> "PauliSum":
        return PauliSum.build(self.n_qubits, ((factor * c, s) for c, s in self.terms))

    @property
    def strings(self) -> tuple:
        return tuple(s for _, s in self.terms)

    def to_matrix(self) -> np.ndarray:
        if self.n_qubits > MATRIX_QUBIT_GUARD:
            raise ValueError(f"dense matrix guarded to {MATRIX_QUBIT_GUARD} qubits")
        m = np.zeros((2 ** self.n_qubits,) * 2, dtype=complex)
        for coeff, string in self.terms:
            m += coeff * string.to_matrix()
        return m

    def is_real_in_computational_basis(self) -> bool:
        """True iff the dense matrix is real, i.e. every term has even Y count."""
        return all(s.n_y % 2 == 0 for _, s in self.terms)


def to_matrix(op) -> np.ndarray:
    """Dense matrix of a PauliString or PauliSum (guarded to small registers)."""
    return op.to_matrix()


@dataclass(frozen=True)
class ModelSpec:
    """Spin-chain model parameters; open boundary conditions throughout."""

    model: str  # "tfim" | "xxz" | "custom"
    n_sites: int
    j: float = 1.0
    h: float = 0.0
    delta: float = 0.0
    custom: PauliSum | None = None

    def __post_init__(self):
        if self.model not in ("tfim", "xxz", "custom"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.n_sites < 2:
            raise ValueError("n_sites must be at least 2")
        if self.model == "custom" and self.custom is None:
            raise ValueError("custom model requires an explicit PauliSum")


def build_hamiltonian(spec: ModelSpec) -> PauliSum:
    """Chain Hamiltonian for the given model spec.

    TFIM:  J * sum_i X_i X_{i+1}  +  h * sum_i Z_i
    XXZ:   J * sum_i (X_i X_{i+1} + Y_i Y_{i+1} + delta * Z_i Z_{i+1})
    """
    n = spec.n_sites
    if spec.model == "custom":
        return spec.custom
    terms = []
    if spec.model == "tfim":
        for i in range(n - 1):
            terms.append((spec.j, PauliString.from_label(f"X{i}X{i + 1}", n)))
        for i in range(n):
            terms.append((spec.h, PauliString.from_label(f"Z{i}", n)))
    else:  # xxz
        for i in range(n - 1):
            terms.append((spec.j, PauliString.from_label(f"X{i}X{i + 1}", n)))
            terms.append((spec.j, PauliString.from_label(f"Y{i}Y{i + 1}", n)))
            terms.append((spec.j * spec.delta, PauliString.from_label(f"Z{i}Z{i + 1}", n)))
    return PauliSum.build(n, terms)


@dataclass(frozen=True)
class TrotterGrouping:
    """Ordered partition of a Hamiltonian into Trotter groups."""

    groups: tuple  # tuple[PauliSum, ...]

    @property
    def n_groups(self) -> int:
        return len(self.groups)


def _support_window(string: PauliString) -> tuple:
    sup = string.support
    qubits = [q for q in range(string.n_qubits) if (sup >> q) & 1]
    return qubits[0], qubits[-1]


def trotter_group(hamiltonian: PauliSum, scheme: str = "single") -> TrotterGrouping:
    """Group terms for first-order Trotterization.

    ``single`` keeps the whole Hamiltonian as one group.  ``even_odd``
    requires every term to act on a nearest-neighbour bond (i, i+1) and
    returns the odd-bond group (bonds 1, 3, ...) followed by the even-bond
    group, counting bonds from 1 at the chain start.
    """
    if scheme == "single":
        return TrotterGrouping((hamiltonian,))
    if scheme != "even_odd":
        raise ValueError(f"unknown grouping scheme {scheme!r}")
    odd, even = [], []
    for coeff, string in hamiltonian.terms:
        lo, hi = _support_window(string)
        if hi - lo != 1:
            raise ValueError("even_odd grouping needs two-local nearest-neighbour terms")
        bond = lo + 1
        (odd if bond % 2 == 1 else even).append((coeff, string))
    groups = []
    for bucket in (odd, even):
        if bucket:
            groups.append(PauliSum.build(hamiltonian.n_qubits, bucket))
    return TrotterGrouping(tuple(groups))


def pauli_pool(group: PauliSum, domain_size: int) -> tuple:
    """All non-identity strings on contiguous D-qubit windows covering each term.

    For every local term, every contiguous window of ``domain_size`` qubits
    that contains the term's support contributes its full set of 4^D - 1
    non-identity strings; the union is returned sorted in canonical order.
    """
    n = group.n_qubits
    if not 1 <= domain_size <= n:
        raise ValueError("domain size out of range")
    windows = set()
    for _, string in group.terms:
        lo, hi = _support_window(string)
        width = hi - lo + 1
        if width > domain_size:
            raise ValueError(
                f"term {string} has support width {width} > domain size {domain_size}"
            )
        for start in range(max(0, hi - domain_size + 1), min(lo, n - domain_size) + 1):
            windows.add(start)
    pool = set()
    for start in sorted(windows):
        qubits = range(start, start + domain_size)
        for factors in itertools.product("IXYZ", repeat=domain_size):
            if all(f == "I" for f in factors):
                continue
            x = z = 0
            for q, f in zip(qubits, factors):
                fx, fz = _BITS[f]
                x |= fx << q
                z |= fz << q
            pool.add(PauliString(x, z, n))
    return tuple(sorted(pool))
