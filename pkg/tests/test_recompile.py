import numpy as np
import pytest
import scipy.linalg as sla

from spinqite.pauli import ModelSpec, PauliString, build_hamiltonian
from spinqite.recompile import (
    BrickTemplate,
    KakError,
    fidelity,
    kak_decompose,
    reconstruction_error,
    recompile_unitary,
)
from spinqite.statesim import DensityMatrix, StateVector

from conftest import random_state, random_unitary


class TestBrickTemplate:
    def test_parameter_counts(self):
        assert BrickTemplate(4, 3, "ry").n_params == 4 + 4 + 2 + 4
        assert BrickTemplate(4, 5, "u3").n_params == 3 * (4 + 4 + 2 + 4 + 2 + 4)

    def test_round_pair_alternation(self):
        t = BrickTemplate(4, 2, "ry")
        assert t._pairs(1) == [(0, 1), (2, 3)]
        assert t._pairs(2) == [(1, 2)]

    def test_zero_round_identity_at_zero_params(self):
        t = BrickTemplate(3, 0, "u3")
        assert np.allclose(t.unitary(np.zeros(t.n_params)), np.eye(8), atol=1e-12)

    def test_ry_circuits_are_real(self, rng):
        t = BrickTemplate(3, 2, "ry")
        u = t.unitary(rng.uniform(-1, 1, t.n_params))
        assert np.max(np.abs(u.imag)) < 1e-12


class TestFidelity:
    def test_self_fidelity(self, rng):
        psi = random_state(2, rng)
        rho = DensityMatrix(2, np.outer(psi, psi.conj()))
        assert fidelity(rho, rho) == pytest.approx(1.0, abs=1e-10)

    def test_orthogonal_pure_states(self):
        a = DensityMatrix(1, np.diag([1.0, 0.0]).astype(complex))
        b = DensityMatrix(1, np.diag([0.0, 1.0]).astype(complex))
        assert fidelity(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_pure_vs_maximally_mixed(self, rng):
        n = 3
        psi = random_state(n, rng)
        pure = DensityMatrix(n, np.outer(psi, psi.conj()))
        mixed = DensityMatrix(n, np.eye(2 ** n) / 2 ** n)
        assert fidelity(pure, mixed) == pytest.approx(2.0 ** -n, abs=1e-10)

    def test_symmetric_and_matches_overlap(self, rng):
        for _ in range(5):
            a = random_state(2, rng)
            b = random_state(2, rng)
            ra = DensityMatrix(2, np.outer(a, a.conj()))
            rb = DensityMatrix(2, np.outer(b, b.conj()))
            f_ab = fidelity(ra, rb)
            assert f_ab == pytest.approx(fidelity(rb, ra), abs=1e-10)
            assert f_ab == pytest.approx(abs(np.vdot(a, b)) ** 2, abs=1e-10)


class TestRecompile:
    def test_identity_with_zero_rounds(self, rng):
        template = BrickTemplate(4, 0, "ry")
        res = recompile_unitary(
            np.eye(16), StateVector.from_label("0001"), template,
            rng=np.random.default_rng(0), theta0=np.zeros(template.n_params),
        )
        assert res.reached and res.fidelity == pytest.approx(1.0, abs=1e-9)

    def test_qite_step_unitary_reaches_target(self, rng):
        labels = ["X0Y1", "Y0X1", "X1Y2", "Y1X2", "X2Y3", "Y2X3"]
        strings = [PauliString.from_label(s, 4) for s in labels]
        x = rng.normal(size=6)
        g = sum(xi * s.to_matrix() for xi, s in zip(x, strings))
        u = sla.expm(-1j * 0.05 * g)
        res = recompile_unitary(
            u, StateVector.from_label("0001"), BrickTemplate(4, 3, "ry"),
            rng=np.random.default_rng(0), target_id="qite step",
        )
        assert res.reached and res.fidelity >= 0.999

    def test_propagator_with_u3_rounds(self, rng):
        h = build_hamiltonian(ModelSpec("tfim", 4, j=3, h=1)).to_matrix()
        u = sla.expm(-1j * h * (np.pi / 16))
        res = recompile_unitary(
            u, StateVector.from_label("0000"), BrickTemplate(4, 5, "u3"),
            rng=np.random.default_rng(0),
        )
        assert res.reached

    def test_result_fidelity_in_unit_interval(self, rng):
        u = random_unitary(8, rng)
        res = recompile_unitary(
            u, StateVector.zero(3), BrickTemplate(3, 1, "u3"),
            rng=np.random.default_rng(0), max_iters=50, n_restarts=1,
        )
        assert -1e-9 <= res.fidelity <= 1.0 + 1e-9


class TestKak:
    def test_identity_empty_circuit(self):
        res = kak_decompose(np.eye(4))
        assert res.cnot_count == 0 and len(res.circuit.gates) == 0

    def test_xx_rotation_two_cnots(self, rng):
        xx = np.kron(
            np.array([[0, 1], [1, 0]]), np.array([[0, 1], [1, 0]])
        ).astype(complex)
        for theta in (0.2, 1.0, 2.6):
            u = sla.expm(-0.5j * theta * xx)
            res = kak_decompose(u)
            assert res.cnot_count == 2
            assert reconstruction_error(u, res) < 1e-8

    def test_tfim_propagator_two_cnots(self):
        h = build_hamiltonian(ModelSpec("tfim", 2, j=3, h=1)).to_matrix()
        u = sla.expm(-1j * h * 0.3)
        res = kak_decompose(u)
        assert res.cnot_count == 2 and res.exact_two_cnot
        assert reconstruction_error(u, res) < 1e-8

    def test_tensor_products_need_no_cnot(self, rng):
        for _ in range(10):
            u = np.kron(random_unitary(2, rng), random_unitary(2, rng))
            res = kak_decompose(u)
            assert res.cnot_count == 0
            assert reconstruction_error(u, res) < 1e-8

    def test_random_unitaries_reconstruct(self, rng):
        worst = 0.0
        for _ in range(200):
            u = random_unitary(4, rng)
            res = kak_decompose(u)
            worst = max(worst, reconstruction_error(u, res))
            assert res.cnot_count <= 3
        assert worst < 1e-8

    def test_gate_budget(self, rng):
        for _ in range(20):
            u = random_unitary(4, rng)
            res = kak_decompose(u)
            n_1q = sum(1 for g in res.circuit.gates if not hasattr(g, "control"))
            if res.cnot_count <= 2:
                assert n_1q <= 6
            else:
                assert n_1q <= 7

    def test_non_unitary_rejected(self):
        with pytest.raises(KakError):
            kak_decompose(np.ones((4, 4)))
