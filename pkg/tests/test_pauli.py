import itertools

import numpy as np
import pytest

from spinqite.pauli import (
    ModelSpec,
    PauliString,
    PauliSum,
    build_hamiltonian,
    commutes,
    multiply,
    pauli_pool,
    to_matrix,
    trotter_group,
)

from conftest import kron_chain


def S(label, n=None):
    if n is None:
        return PauliString.from_factors(label)
    return PauliString.from_label(label, n)


class TestMultiply:
    def test_xy_times_yx_is_zz(self):
        r = multiply(S("XY"), S("YX"))
        assert r == S("ZZ") and r.phase_exp == 0

    def test_identity_neutral(self, rng):
        for _ in range(10):
            p = PauliString(int(rng.integers(8)), int(rng.integers(8)), 3)
            assert multiply(PauliString.identity(3), p) == p
            assert multiply(PauliString.identity(3), p).phase_exp == p.phase_exp

    def test_random_products_match_dense(self, rng):
        for _ in range(50):
            p = PauliString(int(rng.integers(16)), int(rng.integers(16)), 4)
            q = PauliString(int(rng.integers(16)), int(rng.integers(16)), 4)
            assert np.allclose(
                multiply(p, q).to_matrix(), p.to_matrix() @ q.to_matrix(), atol=1e-12
            )

    def test_associative_exhaustive_two_qubits(self):
        strings = [PauliString(x, z, 2) for x in range(4) for z in range(4)]
        for a, b, c in itertools.product(strings[:8], strings[::3], strings[::5]):
            assert multiply(multiply(a, b), c) == multiply(a, multiply(b, c))
            assert (
                multiply(multiply(a, b), c).phase_exp
                == multiply(a, multiply(b, c)).phase_exp
            )

    def test_size_mismatch_raises(self):
        with pytest.raises(ValueError):
            multiply(S("X0", 2), S("X0", 3))


class TestCommutes:
    def test_examples(self):
        assert commutes(S("XY"), S("ZZ"))
        assert not commutes(S("X"), S("Z"))

    def test_exhaustive_vs_dense_three_qubits(self):
        strings = [PauliString(x, z, 3) for x in range(8) for z in range(8)]
        for p in strings[::5]:
            for q in strings[::7]:
                pm, qm = p.to_matrix(), q.to_matrix()
                dense = np.linalg.norm(pm @ qm - qm @ pm) < 1e-12
                assert commutes(p, q) == dense


class TestHamiltonians:
    def test_tfim_two_site_spectrum(self):
        h = build_hamiltonian(ModelSpec("tfim", 2, j=1, h=1))
        labels = {s.label() for _, s in h.terms}
        assert labels == {"X0X1", "Z0", "Z1"}
        assert all(c == 1.0 for c, _ in h.terms)
        evals = np.linalg.eigvalsh(h.to_matrix())
        assert np.allclose(evals, [-np.sqrt(5), -1.0, 1.0, np.sqrt(5)], atol=1e-12)

    def test_tfim_four_site_term_structure(self):
        h = build_hamiltonian(ModelSpec("tfim", 4, j=3, h=1))
        couplings = [(c, s) for c, s in h.terms if s.weight == 2]
        fields = [(c, s) for c, s in h.terms if s.weight == 1]
        assert len(couplings) == 3 and all(c == 3.0 for c, _ in couplings)
        assert len(fields) == 4 and all(c == 1.0 for c, _ in fields)

    def test_xxz_four_site_terms(self):
        h = build_hamiltonian(ModelSpec("xxz", 4, j=1, delta=1))
        assert len(h.terms) == 9
        assert all(c == 1.0 for c, _ in h.terms)

    def test_too_small_chain_rejected(self):
        with pytest.raises(ValueError):
            ModelSpec("tfim", 1, j=1, h=1)


class TestTrotterGrouping:
    def test_single_group_holds_everything(self):
        h = build_hamiltonian(ModelSpec("tfim", 4, j=1, h=1))
        g = trotter_group(h, "single")
        assert g.n_groups == 1
        assert len(g.groups[0].terms) == 7

    def test_even_odd_on_coupling_chain(self):
        h = build_hamiltonian(ModelSpec("xxz", 4, j=1, delta=0.5))
        g = trotter_group(h, "even_odd")
        assert g.n_groups == 2
        odd_supports = {s.support for _, s in g.groups[0].terms}
        even_supports = {s.support for _, s in g.groups[1].terms}
        assert odd_supports == {0b0011, 0b1100}  # bonds (0,1) and (2,3)
        assert even_supports == {0b0110}  # bond (1,2)

    def test_groups_readd_to_hamiltonian(self):
        h = build_hamiltonian(ModelSpec("xxz", 5, j=0.7, delta=1.3))
        g = trotter_group(h, "even_odd")
        total = g.groups[0]
        for part in g.groups[1:]:
            total = total + part
        assert total.terms == h.terms

    def test_even_odd_rejects_field_terms(self):
        h = build_hamiltonian(ModelSpec("tfim", 4, j=1, h=1))
        with pytest.raises(ValueError):
            trotter_group(h, "even_odd")


class TestPauliPool:
    def test_window_strings_four_site_d2(self):
        h = build_hamiltonian(ModelSpec("tfim", 4, j=1, h=1))
        pool = pauli_pool(h, 2)
        # windows (0,1), (1,2), (2,3): 3 * 15 strings minus shared single-qubit ones
        assert len(pool) == 39
        supports = {s.support for s in pool}
        assert 0b1001 not in supports  # no non-contiguous support

    def test_full_domain_pool(self):
        h = build_hamiltonian(ModelSpec("tfim", 4, j=1, h=1))
        assert len(pauli_pool(h, 4)) == 255

    def test_pool_contains_term_strings(self):
        h = build_hamiltonian(ModelSpec("xxz", 4, j=1, delta=1))
        pool = set(pauli_pool(h, 2))
        for _, s in h.terms:
            assert s in pool

    def test_cardinality_matches_brute_force(self):
        h = build_hamiltonian(ModelSpec("tfim", 5, j=1, h=1))
        pool = pauli_pool(h, 3)
        brute = set()
        for start in range(3):  # windows (0..2), (1..3), (2..4)
            for factors in itertools.product("IXYZ", repeat=3):
                if set(factors) == {"I"}:
                    continue
                label = ["I"] * 5
                label[start : start + 3] = factors
                brute.add(PauliString.from_factors("".join(label)))
        assert set(pool) == brute

    def test_domain_smaller_than_support_rejected(self):
        h = build_hamiltonian(ModelSpec("tfim", 4, j=1, h=1))
        with pytest.raises(ValueError):
            pauli_pool(h, 1)


class TestToMatrix:
    def test_z_is_diag(self):
        assert np.allclose(to_matrix(S("Z")), np.diag([1, -1]))

    def test_xx_antidiagonal(self):
        assert np.allclose(to_matrix(S("XX")), np.fliplr(np.eye(4)))

    def test_sum_hermitian(self, rng):
        h = build_hamiltonian(ModelSpec("xxz", 3, j=0.3, delta=-0.8))
        m = to_matrix(h)
        assert np.allclose(m, m.conj().T)

    def test_matrix_guard(self):
        with pytest.raises(ValueError):
            PauliString.identity(13).to_matrix()


class TestPauliSum:
    def test_sign_folded_into_coefficient(self):
        p = PauliString(1, 1, 1, phase_exp=2)  # -Y
        s = PauliSum.build(1, [(2.0, p)])
        assert s.terms[0][0] == -2.0
        assert s.terms[0][1].phase_exp == 0

    def test_imaginary_coefficient_rejected(self):
        p = PauliString(1, 1, 1, phase_exp=1)  # i*Y
        with pytest.raises(ValueError):
            PauliSum.build(1, [(1.0, p)])

    def test_duplicates_merge(self):
        a = PauliString.from_label("X0", 2)
        s = PauliSum.build(2, [(1.0, a), (2.5, a)])
        assert len(s.terms) == 1 and s.terms[0][0] == 3.5

    def test_real_basis_detection(self):
        tfim = build_hamiltonian(ModelSpec("tfim", 3, j=1, h=1))
        assert tfim.is_real_in_computational_basis()
        assert np.allclose(tfim.to_matrix().imag, 0.0)
