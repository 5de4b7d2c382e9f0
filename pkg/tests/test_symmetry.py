import random

import numpy as np
import pytest

from spinqite.pauli import ModelSpec, PauliString, build_hamiltonian, pauli_pool
from spinqite.qite import QiteConfig, run_qite
from spinqite.statesim import StateVector, expectation, hadamard, apply_circuit, Circuit
from spinqite.symmetry import (
    StabilizerGroup,
    check_sector,
    coset_key,
    find_z2_symmetries,
    in_normalizer,
    reduce_pool,
    sector_of,
)

from conftest import random_state


def S(label, n):
    return PauliString.from_label(label, n)


EQ21 = {"X0Y1", "Y0X1", "X1Y2", "Y1X2", "X2Y3", "Y2X3"}
EQ22 = {"X0Y1Z2", "X0Z1Y2", "Y0X1Z2", "Y0Z1X2", "Z0X1Y2", "Z0Y1X2"}


def _coset_labels(strings, group):
    return {frozenset(coset_key(s, group)) for s in strings}


class TestFindSymmetries:
    def test_tfim_chain_parity(self):
        h = build_hamiltonian(ModelSpec("tfim", 4, j=1, h=1))
        group = find_z2_symmetries(h)
        assert {g.label() for g in group.generators} == {"Z0Z1Z2Z3"}

    def test_xxz_two_symmetries(self):
        h = build_hamiltonian(ModelSpec("xxz", 4, j=1, delta=1))
        group = find_z2_symmetries(h)
        assert {g.label() for g in group.generators} == {"Z0Z1Z2Z3", "X0X1X2X3"}

    def test_generators_commute_with_every_term(self):
        for spec in (ModelSpec("tfim", 5, j=2, h=0.7), ModelSpec("xxz", 3, j=1, delta=0.4)):
            h = build_hamiltonian(spec)
            group = find_z2_symmetries(h)
            for g in group.generators:
                assert all(g.commutes(s) for _, s in h.terms)


class TestNormalizer:
    def test_examples(self):
        group = StabilizerGroup((S("Z0Z1Z2Z3", 4),))
        assert in_normalizer(S("X0Y1", 4), group)
        assert not in_normalizer(S("Y0", 4), group)

    def test_exhaustive_two_qubits_vs_dense(self):
        group = StabilizerGroup((S("Z0Z1", 2),))
        gm = group.generators[0].to_matrix()
        for x in range(4):
            for z in range(4):
                p = PauliString(x, z, 2)
                pm = p.to_matrix()
                dense = np.linalg.norm(pm @ gm - gm @ pm) < 1e-12
                assert in_normalizer(p, group) == dense


class TestReducePool:
    def test_tfim_d2_sixteen_to_six(self):
        h = build_hamiltonian(ModelSpec("tfim", 4, j=1, h=1))
        pool = pauli_pool(h, 2)
        group = find_z2_symmetries(h)
        odd_y = reduce_pool(pool, StabilizerGroup(()), True)
        assert len(odd_y) == 16
        reduced = reduce_pool(pool, group, True)
        assert _coset_labels(reduced, group) == _coset_labels(
            [S(lbl, 4) for lbl in EQ21], group
        )
        assert len(reduced) == 6

    def test_xxz_d4_onetwenty_to_six(self):
        h = build_hamiltonian(ModelSpec("xxz", 4, j=1, delta=1))
        pool = pauli_pool(h, 4)
        group = find_z2_symmetries(h)
        odd_y = reduce_pool(pool, StabilizerGroup(()), True)
        assert len(odd_y) == 120
        reduced = reduce_pool(pool, group, True)
        assert {s.label() for s in reduced} == EQ22

    def test_tfim_d4_twenty_eight(self):
        h = build_hamiltonian(ModelSpec("tfim", 4, j=1, h=1))
        pool = pauli_pool(h, 4)
        group = find_z2_symmetries(h)
        assert len(reduce_pool(pool, group, True)) == 28

    def test_order_independence(self):
        h = build_hamiltonian(ModelSpec("tfim", 4, j=1, h=1))
        pool = list(pauli_pool(h, 4))
        group = find_z2_symmetries(h)
        reference = reduce_pool(pool, group, True)
        shuffled = pool[:]
        random.Random(7).shuffle(shuffled)
        assert reduce_pool(shuffled, group, True) == reference

    def test_quotient_excludes_coset_partners(self):
        h = build_hamiltonian(ModelSpec("tfim", 4, j=1, h=1))
        group = find_z2_symmetries(h)
        reduced = set(reduce_pool(pauli_pool(h, 4), group, True))
        for rep in reduced:
            for g in group.elements():
                if g.is_identity:
                    continue
                partner = rep.multiply(g)
                partner = PauliString(partner.x_bits, partner.z_bits, 4)
                assert partner not in reduced


class TestCheckSector:
    def test_basis_state_parity(self):
        group = StabilizerGroup((S("Z0Z1Z2Z3", 4),))
        assert check_sector(StateVector.from_label("0001"), group) == [pytest.approx(-1.0)]

    def test_bell_like_state_parities(self):
        group = StabilizerGroup((S("Z0Z1Z2Z3", 4), S("X0X1X2X3", 4)))
        amp = np.zeros(16)
        a = int("0101"[::-1], 2)
        b = int("1010"[::-1], 2)
        amp[a] = amp[b] = 1 / np.sqrt(2)
        psi = StateVector(4, amp.astype(complex))
        assert check_sector(psi, group) == [pytest.approx(1.0), pytest.approx(1.0)]

    def test_plus_states_x_parity(self):
        group = StabilizerGroup((S("X0X1X2X3", 4),))
        psi = apply_circuit(
            StateVector.zero(4), Circuit(4, [hadamard(q) for q in range(4)])
        )
        assert check_sector(psi, group) == [pytest.approx(1.0)]

    def test_indefinite_sector_rejected(self, rng):
        group = StabilizerGroup((S("Z0Z1", 2),))
        with pytest.raises(ValueError):
            sector_of(StateVector(2, random_state(2, rng)), group)


class TestPropositionEquivalence:
    """One exact QITE step from the reduced pool equals the unreduced one."""

    @pytest.mark.parametrize(
        "spec,label",
        [
            (ModelSpec("tfim", 2, j=1, h=1), "01"),
            (ModelSpec("tfim", 3, j=1, h=1), "001"),
            (ModelSpec("tfim", 4, j=1, h=1), "0001"),
            (ModelSpec("xxz", 3, j=1, delta=1), "010"),
        ],
    )
    def test_single_step_state_fidelity(self, spec, label):
        h = build_hamiltonian(spec)
        n = h.n_qubits
        group = find_z2_symmetries(h)
        psi = StateVector.from_label(label)
        cfg = dict(delta_tau=0.03, n_steps=1, domain_size=n, regularizer=0.0,
                   unitary_mode="exact")
        full_pool = reduce_pool(pauli_pool(h, n), StabilizerGroup(()), True)
        reduced = reduce_pool(pauli_pool(h, n), group, True)
        t_full = run_qite(psi.copy(), h, QiteConfig(**cfg), pool_override=full_pool)
        t_red = run_qite(psi.copy(), h, QiteConfig(**cfg), pool_override=reduced)
        overlap = abs(
            np.vdot(t_full.final_state.amplitudes, t_red.final_state.amplitudes)
        ) ** 2
        assert overlap >= 1.0 - 1e-9

    def test_sector_preserved_along_trajectory(self):
        h = build_hamiltonian(ModelSpec("tfim", 4, j=1, h=1))
        group = find_z2_symmetries(h)
        psi = StateVector.from_label("0001")
        initial = check_sector(psi, group)
        cfg = QiteConfig(delta_tau=0.05, n_steps=8, domain_size=2, regularizer=0.0,
                         unitary_mode="trotterized")
        states = []
        traj = run_qite(
            psi, h, cfg, symmetries=group,
            observer=lambda step, state: states.append(state),
        )
        assert not traj.aborted
        for state in states:
            parity = check_sector(state, group)
            assert abs(parity[0] - initial[0]) < 1e-9
