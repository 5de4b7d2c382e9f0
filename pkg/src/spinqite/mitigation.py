"""Error mitigation: parity post-selection, readout calibration, series rescaling."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .pauli import PauliString
from .statesim import (
    CNOT,
    Circuit,
    DensityMatrix,
    MeasurementCounts,
    NoiseModel,
    apply_circuit,
    basis_change_gates,
    hadamard,
    outcome_distribution,
    sample_counts,
)


class MitigationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Clifford bookkeeping for simultaneous parity measurement
# ---------------------------------------------------------------------------

_P1 = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_CNOT2 = np.array(
    [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex
)  # control = low qubit, target = high qubit in the (t, c) kron below
_H2 = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


def _conj_2q(string: PauliString, gate4: np.ndarray, qa: int, qb: int):
    """Conjugate the (qa, qb) factor pair by a two-qubit Clifford; sign out."""
    m = np.kron(_P1[string.factor(qb)], _P1[string.factor(qa)])
    m = gate4 @ m @ gate4.conj().T
    for fa in "IXYZ":
        for fb in "IXYZ":
            cand = np.kron(_P1[fb], _P1[fa])
            for sign in (1.0, -1.0):
                if np.allclose(m, sign * cand, atol=1e-9):
                    return _replace_factors(string, {qa: fa, qb: fb}), sign
    raise MitigationError("conjugation left the Pauli group")


def _conj_1q(string: PauliString, gate2: np.ndarray, q: int):
    m = gate2 @ _P1[string.factor(q)] @ gate2.conj().T
    for f in "IXYZ":
        for sign in (1.0, -1.0):
            if np.allclose(m, sign * _P1[f], atol=1e-9):
                return _replace_factors(string, {q: f}), sign
    raise MitigationError("conjugation left the Pauli group")


def _replace_factors(string: PauliString, updates: dict) -> PauliString:
    bits = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
    x, z = string.x_bits, string.z_bits
    for q, f in updates.items():
        fx, fz = bits[f]
        x = (x & ~(1 << q)) | (fx << q)
        z = (z & ~(1 << q)) | (fz << q)
    return PauliString(x, z, string.n_qubits)


@dataclass(frozen=True)
class ParityCheck:
    """How to read a conserved parity off a measured bitstring."""

    mask: int  # parity over these outcome bits ...
    sign: float  # ... times this sign equals the generator eigenvalue

    def value(self, outcome: int) -> float:
        return self.sign * (1.0 - 2.0 * (bin(outcome & self.mask).count("1") % 2))


def append_parity_measurement(
    circuit: Circuit, generator: PauliString, measured: PauliString
):
    """Make ``measured`` and a Z2 generator simultaneously readable.

    CNOTs fold the generator support along the chain until the transformed
    pair is qubit-wise commuting (zero to support-1 gates); X-type generators
    get a Hadamard pre-rotation layer first.  Returns the extended circuit,
    the parity readout rule and the transformed measured string with its
    conjugation sign.
    """
    if not generator.commutes(measured):
        raise MitigationError("generator and measured operator do not commute")
    out = circuit.copy()
    g, gs = generator, 1.0
    p, ps = measured, 1.0

    if g.x_bits and not g.z_bits:  # X-type: rotate onto Z-type first
        for q in range(g.n_qubits):
            if (g.support >> q) & 1:
                out.append(hadamard(q))
                g, s1 = _conj_1q(g, _H2, q)
                gs *= s1
                p, s2 = _conj_1q(p, _H2, q)
                ps *= s2
    if g.x_bits:
        raise MitigationError("generator must be Z-type or X-type")

    support = [q for q in range(g.n_qubits) if (g.support >> q) & 1]
    k = 0
    while not p.qubitwise_commutes(g) and k < len(support) - 1:
        c, t = support[k], support[k + 1]
        out.append(CNOT(c, t))
        g, s1 = _conj_2q(g, _CNOT2, c, t)
        gs *= s1
        p, s2 = _conj_2q(p, _CNOT2, c, t)
        ps *= s2
        k += 1
    if not p.qubitwise_commutes(g):
        raise MitigationError("could not reach qubit-wise commutation")
    return out, ParityCheck(mask=g.support, sign=gs), (p, ps)


# ---------------------------------------------------------------------------
# post-selection
# ---------------------------------------------------------------------------

def post_select(
    counts: MeasurementCounts,
    parity_of: Union[ParityCheck, Callable[[int], float]],
    expected: int,
) -> MeasurementCounts:
    """Keep outcomes whose parity matches the conserved sector."""
    check = parity_of.value if isinstance(parity_of, ParityCheck) else parity_of
    kept = {o: c for o, c in counts.counts.items() if check(o) == expected}
    total = sum(kept.values())
    if total == 0:
        raise MitigationError("post-selection discarded every shot")
    return MeasurementCounts(counts.n_qubits, kept, total)


def post_select_distribution(
    probs: np.ndarray,
    parity_of: Union[ParityCheck, Callable[[int], float]],
    expected: int,
):
    """Distribution-level post-selection; returns (renormalized, kept weight)."""
    check = parity_of.value if isinstance(parity_of, ParityCheck) else parity_of
    mask = np.array([check(o) == expected for o in range(len(probs))])
    kept = np.where(mask, probs, 0.0)
    weight = float(kept.sum())
    if weight <= 0.0:
        raise MitigationError("post-selection removed all probability mass")
    return kept / weight, weight


# ---------------------------------------------------------------------------
# readout calibration and correction
# ---------------------------------------------------------------------------

@dataclass
class CalibrationMatrix:
    n_qubits: int
    matrix: np.ndarray  # column-stochastic, M[observed, prepared]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2 ** self.n_qubits,) * 2:
            raise ValueError("calibration matrix shape mismatch")
        if m.min() < 0 or np.max(np.abs(m.sum(axis=0) - 1.0)) > 1e-6:
            raise ValueError("calibration matrix must be column-stochastic")
        self.matrix = m

    def save(self, path):
        with open(path, "w") as fh:
            json.dump({"n_qubits": self.n_qubits, "matrix": self.matrix.tolist()}, fh)

    @classmethod
    def load(cls, path) -> "CalibrationMatrix":
        with open(path) as fh:
            data = json.load(fh)
        return cls(data["n_qubits"], np.asarray(data["matrix"]))


def calibrate_readout(
    noise: NoiseModel,
    shots_per_state: int,
    n_qubits: int,
    rng: np.random.Generator,
) -> CalibrationMatrix:
    """Estimate the full confusion matrix by preparing every basis state."""
    if n_qubits > 5:
        raise ValueError("full calibration guarded to 5 qubits")
    dim = 2 ** n_qubits
    confusion = noise.confusion_matrix(range(n_qubits))
    m = np.zeros((dim, dim))
    for prepared in range(dim):
        probs = confusion[:, prepared]
        counts = sample_counts(probs, shots_per_state, rng, n_qubits)
        m[:, prepared] = counts.distribution()
    return CalibrationMatrix(n_qubits, m)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > css)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.clip(v - tau, 0.0, None)


def mitigate_readout(
    counts: Union[MeasurementCounts, np.ndarray],
    calib: CalibrationMatrix,
    max_iters: int = 500,
    tol: float = 1e-10,
) -> np.ndarray:
    """Least-squares readout correction constrained to the simplex.

    Minimizes ||M q - c||_2 subject to q >= 0, sum q = 1, by projected
    gradient iteration.  Returns the corrected quasi-probability vector.
    """
    c = counts.distribution() if isinstance(counts, MeasurementCounts) else np.asarray(counts)
    m = calib.matrix
    smax = np.linalg.norm(m, 2)
    if smax < 1e-12:
        raise MitigationError("singular calibration matrix")
    step = 1.0 / smax ** 2
    q = _project_simplex(np.linalg.lstsq(m, c, rcond=None)[0])
    for _ in range(max_iters):
        grad = m.T @ (m @ q - c)
        q_next = _project_simplex(q - step * grad)
        if np.linalg.norm(q_next - q) < tol:
            q = q_next
            break
        q = q_next
    return q


# ---------------------------------------------------------------------------
# phase-and-scale correction
# ---------------------------------------------------------------------------

def phase_scale_correct(series):
    """Divide a correlation series by its t = 0 value.

    Enforces the analytic normalization <U(0)V> = 1 for U V = 1; variances
    follow the first-order rule for complex division.  Returns a new series
    with the ``corrected`` flag set.
    """
    times = np.asarray(series.times)
    if abs(times[0]) > 1e-12:
        raise MitigationError("series must contain t = 0")
    z0 = complex(series.values[0])
    if abs(z0) < 1e-6:
        raise MitigationError("t = 0 value too small to normalize by")

    values = np.asarray(series.values, dtype=complex)
    a, b = values.real, values.imag
    c, d = z0.real, z0.imag
    den = c * c + d * d
    corrected = values / z0

    # first-order propagation through w = z / z0, including the z0 terms
    var_a = np.asarray(series.var_re, dtype=float)
    var_b = np.asarray(series.var_im, dtype=float)
    va0, vb0 = float(var_a[0]), float(var_b[0])
    re = (a * c + b * d) / den
    im = (b * c - a * d) / den
    var_re = (
        (c / den) ** 2 * var_a
        + (d / den) ** 2 * var_b
        + ((a - 2 * c * re) / den) ** 2 * va0
        + ((b - 2 * d * re) / den) ** 2 * vb0
    )
    var_im = (
        (d / den) ** 2 * var_a
        + (c / den) ** 2 * var_b
        + ((b - 2 * c * im) / den) ** 2 * va0
        + ((a + 2 * d * im) / den) ** 2 * vb0
    )
    # t = 0 is pinned to exactly 1 by construction
    corrected[0] = 1.0 + 0.0j
    var_re[0] = 0.0
    var_im[0] = 0.0
    return dataclasses.replace(
        series,
        values=corrected,
        var_re=var_re,
        var_im=var_im,
        corrected=True,
    )


# ---------------------------------------------------------------------------
# mitigated single-string measurement (used by the sampling estimator)
# ---------------------------------------------------------------------------

@dataclass
class MitigationConfig:
    post_select: bool = False
    readout: bool = False
    order: str = "readout_first"  # or "post_select_first"
    generator: Optional[PauliString] = None
    expected_parity: int = 1
    calibration: Optional[CalibrationMatrix] = None

    def __post_init__(self):
        if self.order not in ("readout_first", "post_select_first"):
            raise ValueError("order must be readout_first or post_select_first")
        if self.post_select and self.generator is None:
            raise ValueError("post-selection needs a symmetry generator")
        if self.readout and self.calibration is None:
            raise ValueError("readout mitigation needs a calibration matrix")


def measure_string_mitigated(
    state,
    string: PauliString,
    shots: int,
    rng: np.random.Generator,
    noise: Optional[NoiseModel],
    config: Optional[MitigationConfig],
):
    """Measure <string> with sampling, noise and the configured mitigation.

    Returns (value, variance).  The measurement circuit appends the parity
    ladder (when post-selecting) and the basis changes, both of which see
    gate noise on the density-matrix path.
    """
    n = state.n_qubits
    circ = Circuit(n)
    sign = 1.0
    target = string
    parity = None
    if config is not None and config.post_select:
        circ, parity, (target, sign) = append_parity_measurement(
            circ, config.generator, string
        )
        circ.extend(basis_change_gates([target, _z_type(parity, n)]))
    else:
        circ.extend(basis_change_gates([target]))

    if isinstance(state, DensityMatrix):
        post = apply_circuit(state.copy(), circ, noise)
    else:
        post = apply_circuit(state.copy(), circ)
    probs = outcome_distribution(post)
    if noise is not None:
        probs = noise.confusion_matrix(range(n)) @ probs
    counts = sample_counts(probs, shots, rng, n)

    effective_shots = shots
    if config is None or not (config.post_select or config.readout):
        dist = counts.distribution()
    elif config.readout and not config.post_select:
        dist = mitigate_readout(counts, config.calibration)
    elif config.post_select and not config.readout:
        kept = post_select(counts, parity, config.expected_parity)
        effective_shots = kept.shots
        dist = np.zeros(2 ** n)
        for o, cnt in kept.counts.items():
            dist[o] = cnt / kept.shots
    elif config.order == "readout_first":
        quasi = mitigate_readout(counts, config.calibration)
        dist, weight = post_select_distribution(quasi, parity, config.expected_parity)
        effective_shots = max(1, int(round(shots * weight)))
    else:
        kept = post_select(counts, parity, config.expected_parity)
        effective_shots = kept.shots
        dist = mitigate_readout(kept, config.calibration)

    idx = np.arange(2 ** n, dtype=np.uint64)
    signs = 1.0 - 2.0 * (
        np.bitwise_count(idx & np.uint64(target.support)) & np.uint64(1)
    ).astype(float)
    value = sign * float(signs @ dist)
    variance = max(0.0, (1.0 - value ** 2) / effective_shots)
    return value, variance


def _z_type(parity: ParityCheck, n: int) -> PauliString:
    return PauliString(0, parity.mask, n)
