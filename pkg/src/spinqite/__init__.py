"""Finite-temperature spin-chain observables via imaginary-time evolution."""

from .pauli import (
    ModelSpec,
    PauliString,
    PauliSum,
    TrotterGrouping,
    build_hamiltonian,
    commutes,
    multiply,
    pauli_pool,
    to_matrix,
    trotter_group,
)
from .statesim import (
    CNOT,
    Circuit,
    ControlledUnitary,
    DenseUnitary,
    DensityMatrix,
    MeasurementCounts,
    NoiseModel,
    PauliRotation,
    Ry,
    StateVector,
    U3,
    apply_circuit,
    expectation,
    reduced_density,
    sample_expectation,
)
from .symmetry import (
    StabilizerGroup,
    check_sector,
    find_z2_symmetries,
    in_normalizer,
    reduce_pool,
)

__all__ = [
    "ModelSpec",
    "PauliString",
    "PauliSum",
    "TrotterGrouping",
    "build_hamiltonian",
    "commutes",
    "multiply",
    "pauli_pool",
    "to_matrix",
    "trotter_group",
    "CNOT",
    "Circuit",
    "ControlledUnitary",
    "DenseUnitary",
    "DensityMatrix",
    "MeasurementCounts",
    "NoiseModel",
    "PauliRotation",
    "Ry",
    "StateVector",
    "U3",
    "apply_circuit",
    "expectation",
    "reduced_density",
    "sample_expectation",
    "StabilizerGroup",
    "check_sector",
    "find_z2_symmetries",
    "in_normalizer",
    "reduce_pool",
]

__version__ = "0.1.0"
