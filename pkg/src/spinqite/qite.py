"""Imaginary-time evolution by fitted unitaries.

Per step and Trotter group: measure the operator products needed for the
least-squares system, solve the regularized system by conjugate gradients,
and propagate with the fitted rotation generator.  The per-step energies
feed the thermal weights P_i = prod_k exp(-2 dtau E_k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .mitigation import MitigationConfig, measure_string_mitigated
from .pauli import PauliString, PauliSum, pauli_pool, trotter_group
from .recompile import BrickTemplate, RecompileResult, recompile_unitary
from .statesim import (
    Circuit,
    DenseUnitary,
    DensityMatrix,
    NoiseModel,
    PauliRotation,
    StateVector,
    apply_circuit,
    expectation,
    expectation_complex,
)
from .symmetry import StabilizerGroup, reduce_pool, sector_of

UNITARY_MODES = ("trotterized", "recompiled", "merged_two_site", "exact")


class QiteAbort(RuntimeError):
    """A step could not be completed (e.g. the norm estimate went negative)."""


@dataclass
class QiteConfig:
    delta_tau: float
    n_steps: int
    domain_size: int
    grouping: str = "single"
    regularizer: float = 0.2
    solver_tol: float = 1e-10
    shots: Optional[int] = None  # None -> exact expectation values
    unitary_mode: str = "trotterized"
    recompile_rounds: int = 3
    recompile_family: str = "ry"
    recompile_target_fidelity: float = 0.999

    def __post_init__(self):
        if self.delta_tau <= 0:
            raise ValueError("delta_tau must be positive")
        if self.regularizer < 0:
            raise ValueError("regularizer must be nonnegative")
        if self.unitary_mode not in UNITARY_MODES:
            raise ValueError(f"unknown unitary mode {self.unitary_mode!r}")


@dataclass
class QiteStepRecord:
    step: int
    group_index: int
    energy: float
    energy_var: float
    c: float
    x: np.ndarray
    residual: float
    recompile_fidelity: Optional[float] = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.x)):
            raise ValueError("solution vector must be finite")
        if self.c <= 0:
            raise ValueError("norm estimate must be positive")


@dataclass
class QiteTrajectory:
    initial_label: str
    n_qubits: int
    delta_tau: float
    records: list = field(default_factory=list)
    step_energies: list = field(default_factory=list)
    step_energy_vars: list = field(default_factory=list)
    final_state: Optional[Union[StateVector, DensityMatrix]] = None
    circuit: Optional[Circuit] = None
    aborted: bool = False
    abort_reason: str = ""

    def weight(self, n_steps: Optional[int] = None) -> float:
        """P = prod_k exp(-2 dtau E_k) over the first n_steps energies."""
        k = len(self.step_energies) if n_steps is None else n_steps
        return float(np.exp(-2.0 * self.delta_tau * np.sum(self.step_energies[:k])))

    def weight_variance(self, n_steps: Optional[int] = None) -> float:
        k = len(self.step_energies) if n_steps is None else n_steps
        p = self.weight(k)
        s = float(np.sum(self.step_energy_vars[:k]))
        return p * p * 4.0 * self.delta_tau ** 2 * s


# ---------------------------------------------------------------------------
# operator-product expansion and measurement
# ---------------------------------------------------------------------------

def _accumulate(table: dict, string: PauliString, coeff: complex):
    canon = PauliString(string.x_bits, string.z_bits, string.n_qubits)
    table[canon] = table.get(canon, 0.0) + coeff * string.hermitian_phase()


def _sum_times_string(op: PauliSum, string: PauliString) -> dict:
    out: dict = {}
    for coeff, s in op.terms:
        _accumulate(out, s.multiply(string), coeff)
    return out


def _sum_squared(op: PauliSum) -> dict:
    out: dict = {}
    for ca, sa in op.terms:
        for cb, sb in op.terms:
            _accumulate(out, sa.multiply(sb), ca * cb)
    return out


def _dict_times_string(table: dict, string: PauliString) -> dict:
    out: dict = {}
    for s, coeff in table.items():
        _accumulate(out, s.multiply(string), coeff)
    return out


class MeasurementPlan:
    """Distinct canonical strings behind one QITE step, with coefficient maps.

    Built once per (group, pool); each step only re-estimates the distinct
    string expectations and reassembles A, b, c.
    """

    def __init__(self, group: PauliSum, pool):
        self.group = group
        self.pool = tuple(pool)
        n = group.n_qubits
        self._index: dict = {}
        self.strings: list = []
        dim = len(self.pool)

        def idx(string: PauliString) -> int:
            canon = PauliString(string.x_bits, string.z_bits, n)
            if canon not in self._index:
                self._index[canon] = len(self.strings)
                self.strings.append(canon)
            return self._index[canon]

        # A entries: sigma_mu sigma_nu, keeping only products with a real phase
        self.a_entries = []
        for mu in range(dim):
            for nu in range(mu, dim):
                prod = self.pool[mu].multiply(self.pool[nu])
                ph = 1j ** prod.phase_exp
                if abs(ph.real) > 0.5:
                    self.a_entries.append((mu, nu, float(ph.real), idx(prod)))

        h_sq = _sum_squared(group)
        self.h_terms = [(float(c), idx(s)) for c, s in group.terms]
        self.h_sq_terms = [(float(c.real), idx(s)) for s, c in sorted(h_sq.items())]

        # b entries: <H sigma_mu> and <H^2 sigma_mu> as complex combinations
        self.h_mu = []
        self.h_sq_mu = []
        for mu in range(dim):
            hm = _sum_times_string(group, self.pool[mu])
            self.h_mu.append([(complex(c), idx(s)) for s, c in sorted(hm.items())])
            hsm = _dict_times_string(h_sq, self.pool[mu])
            self.h_sq_mu.append([(complex(c), idx(s)) for s, c in sorted(hsm.items())])

    def assemble(self, values: np.ndarray, delta_tau: float):
        """(A, b, c) from distinct-string expectation values."""
        dim = len(self.pool)
        a = np.zeros((dim, dim))
        for mu, nu, coeff, k in self.a_entries:
            a[mu, nu] += coeff * values[k]
            if nu != mu:
                a[nu, mu] = a[mu, nu]
        h = sum(c * values[k] for c, k in self.h_terms)
        h_sq = sum(c * values[k] for c, k in self.h_sq_terms)
        c_norm = 1.0 - 2.0 * delta_tau * h + 2.0 * delta_tau ** 2 * h_sq
        if c_norm <= 0.0:
            raise QiteAbort(f"norm estimate c = {c_norm} is not positive")
        b = np.zeros(dim)
        for mu in range(dim):
            raw = complex(0.0)
            for coeff, k in self.h_mu[mu]:
                raw -= coeff * values[k]
            for coeff, k in self.h_sq_mu[mu]:
                raw += delta_tau * coeff * values[k]
            b[mu] = raw.imag / math.sqrt(c_norm)
        return a, b, float(c_norm)


def measure_system_operators(
    state,
    group: PauliSum,
    pool,
    shots: Optional[int] = None,
    noise: Optional[NoiseModel] = None,
    rng: Optional[np.random.Generator] = None,
    mitigation: Optional[MitigationConfig] = None,
):
    """Expectation table of every distinct string behind one QITE step.

    Returns (plan, values, variances); products are expanded to canonical
    strings so each distinct string is estimated exactly once.
    """
    plan = MeasurementPlan(group, pool)
    values, variances = _estimate_strings(state, plan.strings, shots, noise, rng, mitigation)
    return plan, values, variances


def _estimate_strings(state, strings, shots, noise, rng, mitigation):
    values = np.zeros(len(strings))
    variances = np.zeros(len(strings))
    for k, s in enumerate(strings):
        if s.is_identity:
            values[k] = 1.0
            continue
        if shots is None:
            v = expectation_complex(state, s)
            values[k] = v.real
        else:
            values[k], variances[k] = measure_string_mitigated(
                state, s, shots, rng, noise, mitigation
            )
    return values, variances


def build_linear_system(plan: MeasurementPlan, values: np.ndarray, delta_tau: float):
    return plan.assemble(values, delta_tau)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

def solve_step(
    a: np.ndarray,
    b: np.ndarray,
    regularizer: float = 0.0,
    tol: float = 1e-10,
    max_iters: Optional[int] = None,
):
    """Conjugate-gradient solve of (A + reg I) x = b from a zero start.

    Returns (x, residual, converged).  A must be symmetric; with the
    regularizer it is positive definite for any PSD A.
    """
    dim = b.shape[0]
    m = a + regularizer * np.eye(dim)
    max_iters = 10 * dim if max_iters is None else max_iters
    x = np.zeros(dim)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    threshold = tol * max(1.0, float(np.linalg.norm(b)))
    for _ in range(max_iters):
        if math.sqrt(rr) <= threshold:
            break
        mp = m @ p
        pmp = float(p @ mp)
        if pmp <= 1e-300:
            break
        alpha = rr / pmp
        x = x + alpha * p
        r = r - alpha * mp
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    residual = float(np.linalg.norm(m @ x - b))
    return x, residual, residual <= threshold


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

def _generator_matrix(pool, x: np.ndarray, n: int) -> np.ndarray:
    g = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for xi, s in zip(x, pool):
        if xi != 0.0:
            g += xi * s.to_matrix()
    return g


def _exact_step_unitary(pool, x: np.ndarray, delta_tau: float, n: int) -> np.ndarray:
    g = _generator_matrix(pool, x, n)
    vals, vecs = np.linalg.eigh(g)
    return (vecs * np.exp(-1j * delta_tau * vals)) @ vecs.conj().T


def apply_qite_unitary(
    state,
    pool,
    x: np.ndarray,
    delta_tau: float,
    mode: str = "trotterized",
    noise: Optional[NoiseModel] = None,
    recompiler: Optional[dict] = None,
):
    """Propagate one fitted step; returns (state, gates, recompile_result).

    trotterized      product of Pauli rotations in canonical pool order
    exact            dense exponential of the fitted generator
    merged_two_site  single rotation, angle accumulated by the caller
    recompiled       brick-circuit fit of the dense step unitary
    """
    if len(x) != len(pool):
        raise ValueError("coefficient vector does not match the pool")
    n = state.n_qubits
    gates = []
    result = None
    if mode == "trotterized":
        gates = [
            PauliRotation(s, 2.0 * delta_tau * float(xi))
            for xi, s in zip(x, pool)
            if xi != 0.0
        ]
    elif mode == "merged_two_site":
        if len(pool) != 1:
            raise ValueError("merged mode needs a single-string pool")
        gates = [PauliRotation(pool[0], 2.0 * delta_tau * float(x[0]))]
    elif mode == "exact":
        u = _exact_step_unitary(pool, x, delta_tau, n)
        gates = [DenseUnitary(u, tuple(range(n)))]
    elif mode == "recompiled":
        u = _exact_step_unitary(pool, x, delta_tau, n)
        template = recompiler["template"]
        rho_in = recompiler.get("rho_in")
        if rho_in is None:
            rho_in = state if isinstance(state, StateVector) else state.copy()
        result = recompile_unitary(
            u,
            rho_in,
            template,
            target_fidelity=recompiler.get("target_fidelity", 0.999),
            rng=recompiler.get("rng"),
            theta0=recompiler.get("theta0"),
            target_id=recompiler.get("target_id", ""),
        )
        if result.reached:
            gates = list(template.circuit(result.theta).gates)
        else:
            # fall back to the rotation product rather than a poor fit
            gates = [
                PauliRotation(s, 2.0 * delta_tau * float(xi))
                for xi, s in zip(x, pool)
                if xi != 0.0
            ]
    else:
        raise ValueError(f"unknown unitary mode {mode!r}")
    circ = Circuit(n, gates)
    return apply_circuit(state, circ, noise), gates, result


def run_qite(
    initial: Union[StateVector, DensityMatrix],
    hamiltonian: PauliSum,
    config: QiteConfig,
    symmetries: Optional[StabilizerGroup] = None,
    noise: Optional[NoiseModel] = None,
    rng: Optional[np.random.Generator] = None,
    mitigation: Optional[MitigationConfig] = None,
    observer=None,
    initial_label: str = "",
    pool_override=None,
) -> QiteTrajectory:
    """Evolve ``initial`` for ``config.n_steps`` imaginary-time steps.

    ``observer(step, state)`` is called on the initial state (step 0) and
    after every completed step.  With sampling enabled, measurement shot
    noise flows into the recorded energies and their variances, and hence
    into the trajectory weight.
    """
    # ideal (noiseless) companion state: the fit reference for recompilation,
    # mirroring classical recompilation against the intended circuit state
    ideal0 = initial.copy() if isinstance(initial, StateVector) else None
    if noise is not None and isinstance(initial, StateVector):
        initial = initial.density_matrix()
    state = initial.copy()
    ideal = ideal0.copy() if ideal0 is not None else None
    n = hamiltonian.n_qubits
    grouping = trotter_group(hamiltonian, config.grouping)

    real_setting = hamiltonian.is_real_in_computational_basis() and _state_is_real(initial)
    group_data = []
    for group in grouping.groups:
        if pool_override is not None:
            pool = tuple(pool_override)
        else:
            pool = pauli_pool(group, config.domain_size)
            pool = reduce_pool(
                pool, symmetries if symmetries is not None else StabilizerGroup(()),
                real_setting,
            )
        group_data.append((group, pool, MeasurementPlan(group, pool)))
    if config.unitary_mode == "merged_two_site":
        if len(group_data) != 1 or len(group_data[0][1]) != 1:
            raise ValueError("merged mode needs one group with a single pool string")

    if symmetries is not None and symmetries.d and mitigation is not None:
        if mitigation.post_select and mitigation.generator is None:
            raise ValueError("post-selection generator missing")

    traj = QiteTrajectory(
        initial_label=initial_label,
        n_qubits=n,
        delta_tau=config.delta_tau,
        circuit=Circuit(n),
    )
    rng = np.random.default_rng(0) if rng is None else rng
    template = None
    if config.unitary_mode == "recompiled":
        template = BrickTemplate(n, config.recompile_rounds, config.recompile_family)
    warm_theta = None
    merged_angle = 0.0

    if observer is not None:
        observer(0, state)

    for step in range(config.n_steps):
        energy, energy_var = _measure_energy(
            state, hamiltonian, config.shots, noise, rng, mitigation
        )
        traj.step_energies.append(energy)
        traj.step_energy_vars.append(energy_var)

        for gi, (group, pool, plan) in enumerate(group_data):
            values, _ = _estimate_strings(
                state, plan.strings, config.shots, noise, rng, mitigation
            )
            try:
                a, b, c_norm = plan.assemble(values, config.delta_tau)
            except QiteAbort as exc:
                traj.aborted = True
                traj.abort_reason = f"step {step}, group {gi}: {exc}"
                traj.final_state = state
                return traj
            x, residual, converged = solve_step(
                a, b, config.regularizer, config.solver_tol
            )
            if not converged:
                x = np.linalg.lstsq(
                    a + config.regularizer * np.eye(len(b)), b, rcond=None
                )[0]
                residual = float(
                    np.linalg.norm((a + config.regularizer * np.eye(len(b))) @ x - b)
                )

            rec_fid = None
            if config.unitary_mode == "merged_two_site":
                merged_angle += 2.0 * config.delta_tau * float(x[0])
                circ = Circuit(n, [PauliRotation(pool[0], merged_angle)])
                state = apply_circuit(initial.copy(), circ, noise)
                if ideal0 is not None:
                    ideal = apply_circuit(ideal0.copy(), circ)
                traj.circuit = circ
            else:
                recompiler = None
                if config.unitary_mode == "recompiled":
                    recompiler = {
                        "template": template,
                        "target_fidelity": config.recompile_target_fidelity,
                        "rng": rng,
                        "theta0": warm_theta,
                        "rho_in": ideal,
                        "target_id": f"qite step {step} group {gi}",
                    }
                state, gates, rec = apply_qite_unitary(
                    state, pool, x, config.delta_tau, config.unitary_mode, noise, recompiler
                )
                traj.circuit.extend(gates)
                if ideal is not None and gates:
                    ideal = apply_circuit(ideal, Circuit(n, list(gates)))
                if rec is not None:
                    rec_fid = rec.fidelity
                    warm_theta = rec.theta if rec.reached else None
            traj.records.append(
                QiteStepRecord(
                    step=step,
                    group_index=gi,
                    energy=energy,
                    energy_var=energy_var,
                    c=c_norm,
                    x=np.asarray(x, dtype=float),
                    residual=residual,
                    recompile_fidelity=rec_fid,
                )
            )
        if observer is not None:
            observer(step + 1, state)

    traj.final_state = state
    return traj


def _measure_energy(state, hamiltonian, shots, noise, rng, mitigation):
    if shots is None:
        return expectation(state, hamiltonian), 0.0
    value = 0.0
    variance = 0.0
    for coeff, s in hamiltonian.terms:
        v, var = measure_string_mitigated(state, s, shots, rng, noise, mitigation)
        value += coeff * v
        variance += coeff ** 2 * var
    return value, variance


def _state_is_real(state) -> bool:
    if isinstance(state, StateVector):
        return state.is_real()
    return bool(np.max(np.abs(state.matrix.imag)) < 1e-12)


# ---------------------------------------------------------------------------
# trajectory records on disk
# ---------------------------------------------------------------------------

RECORD_HEADER = "# spinqite-trajectory v1: step group energy c residual x..."


def write_trajectory(path, trajectory: QiteTrajectory):
    with open(path, "w") as fh:
        fh.write(RECORD_HEADER + "\n")
        for rec in trajectory.records:
            xs = " ".join(f"{v:.17g}" for v in rec.x)
            fh.write(
                f"{rec.step} {rec.group_index} {rec.energy:.17g} "
                f"{rec.c:.17g} {rec.residual:.17g} {xs}\n"
            )


def read_trajectory_records(path):
    records = []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("# spinqite-trajectory v1"):
            raise ValueError("unrecognized trajectory file")
        for line in fh:
            parts = line.split()
            records.append(
                QiteStepRecord(
                    step=int(parts[0]),
                    group_index=int(parts[1]),
                    energy=float(parts[2]),
                    energy_var=0.0,
                    c=float(parts[3]),
                    x=np.array([float(v) for v in parts[5:]]),
                    residual=float(parts[4]),
                )
            )
    return records
