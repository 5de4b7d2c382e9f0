"""Z2 symmetry discovery and Pauli-pool reduction.

A set of independent, mutually commuting Pauli generators is treated as a
stabilizer group; pools of candidate rotation strings are cut down to one
representative per coset of the normalizer quotient, optionally keeping only
strings with an odd number of Y factors (real Hamiltonian and initial state).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .pauli import PauliString, PauliSum
from .statesim import State, expectation


@dataclass(frozen=True)
class StabilizerGroup:
    generators: tuple  # tuple[PauliString, ...]

    def __post_init__(self):
        for g in self.generators:
            if g.is_identity:
                raise ValueError("identity cannot be a stabilizer generator")
            if g.phase_exp != 0:
                raise ValueError("generators must carry phase +1")
        for a, b in itertools.combinations(self.generators, 2):
            if not a.commutes(b):
                raise ValueError("generators must mutually commute")
        if self.generators:
            n = self.generators[0].n_qubits
            vecs = [(g.x_bits << n) | g.z_bits for g in self.generators]
            if _gf2_rank(vecs) != len(vecs):
                raise ValueError("generators must be independent")

    @property
    def d(self) -> int:
        return len(self.generators)

    def elements(self):
        """All 2^d canonical group elements (phases dropped)."""
        if not self.generators:
            return ()
        n = self.generators[0].n_qubits
        out = []
        for picks in itertools.product((0, 1), repeat=self.d):
            x = z = 0
            for take, g in zip(picks, self.generators):
                if take:
                    x ^= g.x_bits
                    z ^= g.z_bits
            out.append(PauliString(x, z, n))
        return tuple(out)


def _gf2_rank(rows) -> int:
    rank = 0
    rows = list(rows)
    for i in range(len(rows)):
        pivot = rows[i]
        if pivot == 0:
            continue
        rank += 1
        top = pivot.bit_length() - 1
        for j in range(len(rows)):
            if j != i and (rows[j] >> top) & 1:
                rows[j] ^= pivot
    return rank


def find_z2_symmetries(hamiltonian: PauliSum) -> StabilizerGroup:
    """Independent mutually commuting strings that commute with every term.

    Works on the symplectic parity-check matrix of the Hamiltonian's strings:
    a candidate (x, z) commutes with every term (hx, hz) iff it lies in the
    GF(2) kernel of the matrix with rows (hz | hx).  The kernel basis is then
    greedily filtered to a mutually commuting independent set, dropping the
    identity.
    """
    if not hamiltonian.terms:
        raise ValueError("empty Hamiltonian")
    n = hamiltonian.n_qubits
    # candidate vector layout: low n bits = x, high n bits = z
    rows = []
    for _, s in hamiltonian.terms:
        rows.append(s.z_bits | (s.x_bits << n))  # pairs x-part against hz, z-part against hx
    kernel = _kernel_basis(rows, 2 * n)
    candidates = []
    for v in kernel:
        x = v & ((1 << n) - 1)
        z = v >> n
        p = PauliString(x, z, n)
        if not p.is_identity:
            candidates.append(p)
    candidates.sort()
    chosen = []
    chosen_vecs = []
    for p in candidates:
        if any(not p.commutes(g) for g in chosen):
            continue
        v = (p.x_bits << n) | p.z_bits
        if _gf2_rank(chosen_vecs + [v]) == len(chosen_vecs) + 1:
            chosen.append(p)
            chosen_vecs.append(v)
    return StabilizerGroup(tuple(chosen))


def _kernel_basis(rows, width: int):
    """GF(2) null-space basis via Gaussian elimination with column tracking."""
    rows = list(rows)
    pivot_of_col = {}
    reduced = []
    for r in rows:
        cur = r
        for col in sorted(pivot_of_col, reverse=True):
            if (cur >> col) & 1:
                cur ^= pivot_of_col[col]
        if cur:
            pivot_of_col[cur.bit_length() - 1] = cur
            reduced.append(cur)
    # full reduction: clear pivot columns above
    cols = sorted(pivot_of_col, reverse=True)
    for i, col in enumerate(cols):
        for other in cols:
            if other == col:
                continue
            if (pivot_of_col[other] >> col) & 1 and other != col:
                pivot_of_col[other] ^= pivot_of_col[col]
    basis = []
    pivot_cols = set(pivot_of_col)
    for free in range(width):
        if free in pivot_cols:
            continue
        vec = 1 << free
        for col, prow in pivot_of_col.items():
            # pivot row contains the free column -> pivot variable must flip
            if (prow >> free) & 1:
                vec |= 1 << col
        basis.append(vec)
    return basis


def in_normalizer(p: PauliString, group: StabilizerGroup) -> bool:
    return all(p.commutes(g) for g in group.generators)


def coset_key(p: PauliString, group: StabilizerGroup) -> tuple:
    """Canonical coset label: lexicographic minimum of (x, z) over p * S."""
    best = (p.x_bits, p.z_bits)
    for g in group.elements():
        x = p.x_bits ^ g.x_bits
        z = p.z_bits ^ g.z_bits
        if (x, z) < best:
            best = (x, z)
    return best


def reduce_pool(pool, group: StabilizerGroup, real_hamiltonian: bool) -> tuple:
    """Cut a rotation pool down to normalizer strings, one per stabilizer coset.

    When ``real_hamiltonian`` is set, strings with an even number of Y factors
    are dropped first (imaginary-time evolution of a real state stays real).
    The kept representative of each coset is the canonically smallest pool
    member, so the output does not depend on the input iteration order.
    """
    kept = {}
    for p in sorted(pool):
        if real_hamiltonian and p.n_y % 2 == 0:
            continue
        if not in_normalizer(p, group):
            continue
        key = coset_key(p, group)
        if key not in kept:
            kept[key] = p
    return tuple(sorted(kept.values()))


def check_sector(state: State, group: StabilizerGroup) -> list:
    """Expectation value of every generator (the state's parity vector)."""
    return [expectation(state, g) for g in group.generators]


def sector_of(state: State, group: StabilizerGroup, tol: float = 1e-6) -> tuple:
    """Round the parity vector to +/-1, rejecting indefinite sectors."""
    out = []
    for v in check_sector(state, group):
        if abs(abs(v) - 1.0) > tol:
            raise ValueError(f"state is not in a definite symmetry sector (<g> = {v})")
        out.append(1 if v > 0 else -1)
    return tuple(out)
