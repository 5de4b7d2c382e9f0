"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

Statevector amplitudes are flat complex128 arrays indexed so that bit j of
the basis index is the state of qubit j.  A Pauli string is carried around
as a pair of bitmasks (x, z); its canonical Hermitian operator is

    sigma(x, z) = i^popcount(x & z) * X^x * Z^z

so that (sigma psi)[i] = i^popcount(x & z) * (-1)^popcount(z & (i ^ x)) * psi[i ^ x].

Backend selection: the environment variable SPINQITE_BACKEND may be set to
"numpy" to force the fallback path, or "numba" (the default) to use the JIT
kernels when numba is importable.  Both implementations are importable side
by side for benchmarking (see benchmarks/bench_backends.py).
"""

from __future__ import annotations

import math
import os

import numpy as np

_PHASES = np.array([1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j])


def string_phase(x: int, z: int) -> complex:
    """Phase i^popcount(x & z) making sigma(x, z) Hermitian."""
    return _PHASES[bin(x & z).count("1") % 4]


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def _np_z_signs(dim: int, z: int) -> np.ndarray:
    idx = np.arange(dim, dtype=np.uint64)
    return 1.0 - 2.0 * (np.bitwise_count(idx & np.uint64(z)) & np.uint64(1)).astype(np.float64)


def np_pauli_overlap(psi: np.ndarray, x: int, z: int) -> complex:
    """<psi| X^x Z^z |psi> without the Hermitian phase factor."""
    dim = psi.shape[0]
    signs = _np_z_signs(dim, z)
    if x == 0:
        return complex(np.sum(signs * np.abs(psi) ** 2))
    idx = np.arange(dim)
    return complex(np.sum(np.conj(psi[idx ^ x]) * signs * psi))


def np_apply_pauli(psi: np.ndarray, x: int, z: int) -> np.ndarray:
    """X^x Z^z |psi> without the Hermitian phase factor."""
    dim = psi.shape[0]
    if x == 0:
        return _np_z_signs(dim, z) * psi
    idx = np.arange(dim)
    src = idx ^ x
    return _np_z_signs(dim, z)[src] * psi[src]


def np_apply_pauli_rotation(psi: np.ndarray, x: int, z: int, theta: float) -> np.ndarray:
    """exp(-i theta/2 sigma(x, z)) |psi> for the canonical Hermitian string."""
    c = math.cos(theta / 2.0)
    s = math.sin(theta / 2.0)
    ph = string_phase(x, z)
    return c * psi + (-1j * s * ph) * np_apply_pauli(psi, x, z)


def np_apply_1q(psi: np.ndarray, m: np.ndarray, qubit: int, n: int) -> np.ndarray:
    shaped = psi.reshape(2 ** (n - 1 - qubit), 2, 2 ** qubit)
    out = np.empty_like(shaped)
    out[:, 0, :] = m[0, 0] * shaped[:, 0, :] + m[0, 1] * shaped[:, 1, :]
    out[:, 1, :] = m[1, 0] * shaped[:, 0, :] + m[1, 1] * shaped[:, 1, :]
    return out.reshape(-1)


def np_apply_cnot(psi: np.ndarray, control: int, target: int) -> np.ndarray:
    dim = psi.shape[0]
    idx = np.arange(dim)
    mask = (idx >> control) & 1
    out = psi.copy()
    flipped = idx ^ (1 << target)
    out[mask == 1] = psi[flipped[mask == 1]]
    return out


def np_apply_layout(
    theta: np.ndarray,
    cols: np.ndarray,
    op_kind: np.ndarray,
    op_q0: np.ndarray,
    op_q1: np.ndarray,
    op_param: np.ndarray,
    use_u3: bool,
    n: int = 0,
) -> np.ndarray:
    """Apply a brick-circuit layout to a (ncols, dim) block of state columns.

    The register size follows the column width, so the layout may act on the
    low qubits of a larger register (spectator qubits untouched).
    """
    n = int(round(math.log2(cols.shape[1])))
    out = cols.copy()
    for k in range(op_kind.shape[0]):
        if op_kind[k] == 0:
            p = op_param[k]
            if use_u3:
                th, ph, lam = theta[p], theta[p + 1], theta[p + 2]
                ct, st = math.cos(th / 2.0), math.sin(th / 2.0)
                m = np.array(
                    [
                        [ct, -np.exp(1j * lam) * st],
                        [np.exp(1j * ph) * st, np.exp(1j * (ph + lam)) * ct],
                    ]
                )
            else:
                ct, st = math.cos(theta[p] / 2.0), math.sin(theta[p] / 2.0)
                m = np.array([[ct, -st], [st, ct]], dtype=complex)
            for c in range(out.shape[0]):
                out[c] = np_apply_1q(out[c], m, op_q0[k], n)
        else:
            for c in range(out.shape[0]):
                out[c] = np_apply_cnot(out[c], op_q0[k], op_q1[k])
    return out


def np_layout_fidelity(theta, cols, tcols, wprod, op_kind, op_q0, op_q1, op_param, use_u3):
    out = np_apply_layout(theta, cols, op_kind, op_q0, op_q1, op_param, use_u3)
    overlap = tcols @ out.T
    if cols.shape[0] == 1:
        return float(abs(overlap[0, 0]) ** 2)
    c = wprod * overlap
    t = float(np.sum(np.abs(c) ** 2))
    det = abs(c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0])
    return t + 2.0 * det


def np_layout_fd_grad(theta, cols, tcols, wprod, op_kind, op_q0, op_q1, op_param, use_u3, h):
    n = theta.shape[0]
    grad = np.empty(n)
    f0 = np_layout_fidelity(theta, cols, tcols, wprod, op_kind, op_q0, op_q1, op_param, use_u3)
    for i in range(n):
        theta[i] += h
        fp = np_layout_fidelity(theta, cols, tcols, wprod, op_kind, op_q0, op_q1, op_param, use_u3)
        theta[i] -= 2.0 * h
        fm = np_layout_fidelity(theta, cols, tcols, wprod, op_kind, op_q0, op_q1, op_param, use_u3)
        theta[i] += h
        grad[i] = (fp - fm) / (2.0 * h)
    return f0, grad


NUMPY_IMPL = {
    "pauli_overlap": np_pauli_overlap,
    "apply_pauli": np_apply_pauli,
    "apply_pauli_rotation": np_apply_pauli_rotation,
    "apply_1q": np_apply_1q,
    "apply_cnot": np_apply_cnot,
    "apply_layout": np_apply_layout,
    "layout_fidelity": np_layout_fidelity,
    "layout_fd_grad": np_layout_fd_grad,
}


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

_ENV_BACKEND = os.environ.get("SPINQITE_BACKEND", "numba").strip().lower()

NUMBA_IMPL = None

if _ENV_BACKEND != "numpy":
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - exercised only without numba
        njit = None

    if njit is not None:

        @njit(cache=True, inline="always")
        def _parity64(v):
            v ^= v >> 32
            v ^= v >> 16
            v ^= v >> 8
            v ^= v >> 4
            v ^= v >> 2
            v ^= v >> 1
            return v & 1

        @njit(cache=True)
        def _nb_pauli_overlap(psi, x, z):
            dim = psi.shape[0]
            acc = 0.0 + 0.0j
            if x == 0:
                for i in range(dim):
                    s = 1.0 - 2.0 * _parity64(i & z)
                    acc += s * (psi[i].real ** 2 + psi[i].imag ** 2)
            else:
                for i in range(dim):
                    s = 1.0 - 2.0 * _parity64(i & z)
                    acc += np.conj(psi[i ^ x]) * (s * psi[i])
            return acc

        @njit(cache=True)
        def _nb_apply_pauli(psi, x, z):
            dim = psi.shape[0]
            out = np.empty_like(psi)
            for i in range(dim):
                src = i ^ x
                s = 1.0 - 2.0 * _parity64(src & z)
                out[i] = s * psi[src]
            return out

        @njit(cache=True)
        def _nb_apply_pauli_rotation(psi, x, z, theta, ph):
            dim = psi.shape[0]
            c = math.cos(theta / 2.0)
            f = (-1j * math.sin(theta / 2.0)) * ph
            out = np.empty_like(psi)
            for i in range(dim):
                src = i ^ x
                s = 1.0 - 2.0 * _parity64(src & z)
                out[i] = c * psi[i] + f * (s * psi[src])
            return out

        @njit(cache=True)
        def _nb_apply_1q(psi, m00, m01, m10, m11, qubit):
            dim = psi.shape[0]
            bit = 1 << qubit
            out = np.empty_like(psi)
            for i in range(dim):
                if i & bit == 0:
                    a = psi[i]
                    b = psi[i | bit]
                    out[i] = m00 * a + m01 * b
                    out[i | bit] = m10 * a + m11 * b
            return out

        @njit(cache=True)
        def _nb_apply_cnot(psi, control, target):
            dim = psi.shape[0]
            cbit = 1 << control
            tbit = 1 << target
            out = psi.copy()
            for i in range(dim):
                if (i & cbit) != 0 and (i & tbit) == 0:
                    out[i] = psi[i | tbit]
                    out[i | tbit] = psi[i]
            return out

        @njit(cache=True)
        def _nb_apply_layout(theta, cols, op_kind, op_q0, op_q1, op_param, use_u3):
            ncols, dim = cols.shape
            out = cols.copy()
            for k in range(op_kind.shape[0]):
                if op_kind[k] == 0:
                    p = op_param[k]
                    if use_u3:
                        th = theta[p]
                        ph = theta[p + 1]
                        lam = theta[p + 2]
                        ct = math.cos(th / 2.0)
                        st = math.sin(th / 2.0)
                        m00 = ct + 0.0j
                        m01 = -(math.cos(lam) + 1j * math.sin(lam)) * st
                        m10 = (math.cos(ph) + 1j * math.sin(ph)) * st
                        m11 = (math.cos(ph + lam) + 1j * math.sin(ph + lam)) * ct
                    else:
                        ct = math.cos(theta[p] / 2.0)
                        st = math.sin(theta[p] / 2.0)
                        m00 = ct + 0.0j
                        m01 = -st + 0.0j
                        m10 = st + 0.0j
                        m11 = ct + 0.0j
                    bit = 1 << op_q0[k]
                    for c in range(ncols):
                        for i in range(dim):
                            if i & bit == 0:
                                a = out[c, i]
                                b = out[c, i | bit]
                                out[c, i] = m00 * a + m01 * b
                                out[c, i | bit] = m10 * a + m11 * b
                else:
                    cbit = 1 << op_q0[k]
                    tbit = 1 << op_q1[k]
                    for c in range(ncols):
                        for i in range(dim):
                            if (i & cbit) != 0 and (i & tbit) == 0:
                                tmp = out[c, i]
                                out[c, i] = out[c, i | tbit]
                                out[c, i | tbit] = tmp
            return out

        @njit(cache=True)
        def _nb_layout_fidelity(theta, cols, tcols, wprod, op_kind, op_q0, op_q1,
                                op_param, use_u3):
            """Uhlmann fidelity of rank<=2 inputs against a brick circuit."""
            out = _nb_apply_layout(theta, cols, op_kind, op_q0, op_q1, op_param, use_u3)
            ncols, dim = out.shape
            if ncols == 1:
                acc = 0.0 + 0.0j
                for i in range(dim):
                    acc += tcols[0, i] * out[0, i]
                return acc.real ** 2 + acc.imag ** 2
            c00 = 0.0 + 0.0j
            c01 = 0.0 + 0.0j
            c10 = 0.0 + 0.0j
            c11 = 0.0 + 0.0j
            for i in range(dim):
                c00 += tcols[0, i] * out[0, i]
                c01 += tcols[0, i] * out[1, i]
                c10 += tcols[1, i] * out[0, i]
                c11 += tcols[1, i] * out[1, i]
            c00 *= wprod[0, 0]
            c01 *= wprod[0, 1]
            c10 *= wprod[1, 0]
            c11 *= wprod[1, 1]
            t = (
                c00.real ** 2 + c00.imag ** 2
                + c01.real ** 2 + c01.imag ** 2
                + c10.real ** 2 + c10.imag ** 2
                + c11.real ** 2 + c11.imag ** 2
            )
            det = c00 * c11 - c01 * c10
            return t + 2.0 * abs(det)

        @njit(cache=True)
        def _nb_layout_fd_grad(theta, cols, tcols, wprod, op_kind, op_q0, op_q1,
                               op_param, use_u3, h):
            n = theta.shape[0]
            grad = np.empty(n)
            f0 = _nb_layout_fidelity(theta, cols, tcols, wprod, op_kind, op_q0,
                                     op_q1, op_param, use_u3)
            for i in range(n):
                theta[i] += h
                fp = _nb_layout_fidelity(theta, cols, tcols, wprod, op_kind, op_q0,
                                         op_q1, op_param, use_u3)
                theta[i] -= 2.0 * h
                fm = _nb_layout_fidelity(theta, cols, tcols, wprod, op_kind, op_q0,
                                         op_q1, op_param, use_u3)
                theta[i] += h
                grad[i] = (fp - fm) / (2.0 * h)
            return f0, grad

        def _wrap_overlap(psi, x, z):
            return complex(_nb_pauli_overlap(psi, np.int64(x), np.int64(z)))

        def _wrap_apply_pauli(psi, x, z):
            return _nb_apply_pauli(psi, np.int64(x), np.int64(z))

        def _wrap_rotation(psi, x, z, theta):
            return _nb_apply_pauli_rotation(
                psi, np.int64(x), np.int64(z), float(theta), string_phase(x, z)
            )

        def _wrap_1q(psi, m, qubit, n):
            return _nb_apply_1q(
                psi, complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1]), qubit
            )

        def _wrap_layout(theta, cols, op_kind, op_q0, op_q1, op_param, use_u3, n):
            return _nb_apply_layout(theta, cols, op_kind, op_q0, op_q1, op_param, use_u3)

        NUMBA_IMPL = {
            "pauli_overlap": _wrap_overlap,
            "apply_pauli": _wrap_apply_pauli,
            "apply_pauli_rotation": _wrap_rotation,
            "apply_1q": _wrap_1q,
            "apply_cnot": _nb_apply_cnot,
            "apply_layout": _wrap_layout,
            "layout_fidelity": _nb_layout_fidelity,
            "layout_fd_grad": _nb_layout_fd_grad,
        }


if NUMBA_IMPL is not None:
    ACTIVE_BACKEND = "numba"
    _impl = NUMBA_IMPL
else:
    ACTIVE_BACKEND = "numpy"
    _impl = NUMPY_IMPL

pauli_overlap = _impl["pauli_overlap"]
apply_pauli = _impl["apply_pauli"]
apply_pauli_rotation = _impl["apply_pauli_rotation"]
apply_1q = _impl["apply_1q"]
apply_cnot = _impl["apply_cnot"]
apply_layout = _impl["apply_layout"]
layout_fidelity = _impl["layout_fidelity"]
layout_fd_grad = _impl["layout_fd_grad"]
