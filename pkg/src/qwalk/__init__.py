"""Quantum walks on finite graphs, built from prescribed eigenbases and spectra.

Instead of diagonalizing a given Hamiltonian, this package runs the map
the other way: a chosen orthonormal basis (localized, plane-wave or
mixed) and a chosen spectrum define the Hamiltonian and every evolution
operator built from it.  On top of that inverse map it simulates plain
unitary evolution, monitored evolution under repeated projective
measurements (first-detection statistics) and transition probabilities
averaged over Gaussian eigenvalue disorder.
"""

__version__ = "0.1.0"

from .basis import (
    BasisKind,
    BasisPartition,
    LinearDependenceError,
    OrthonormalBasis,
    VectorClass,
    classify_vector,
    gram_schmidt,
    localization_coefficient,
    localized_basis,
    mixed_basis,
    plane_wave_basis,
    random_partition,
)
from .evolution import (
    AveragedTransition,
    Hamiltonian,
    UnitaryOperator,
    asymptotic_transition,
    averaged_transition,
    hamiltonian_from,
    transition_probability,
    unitary,
)
from .monitor import (
    DetectionSeries,
    MonitoredOperator,
    detection_series,
    invariant_subspace_defect,
    monitored_operator_energy,
    monitored_operator_position,
    removed_states_check,
)
from .spectral import (
    Attractive,
    EigenvalueEnsemble,
    Repulsive,
    Spectrum,
    Uncorrelated,
    correlation_matrices,
    dephasing_factor,
    dephasing_rate,
    ideal_spectrum,
    linear_spectrum,
    sample_fluctuations,
    sample_spectrum,
    weight_function,
)

__all__ = [
    "__version__",
    "BasisKind",
    "BasisPartition",
    "LinearDependenceError",
    "OrthonormalBasis",
    "VectorClass",
    "classify_vector",
    "gram_schmidt",
    "localization_coefficient",
    "localized_basis",
    "mixed_basis",
    "plane_wave_basis",
    "random_partition",
    "Spectrum",
    "Uncorrelated",
    "Attractive",
    "Repulsive",
    "EigenvalueEnsemble",
    "ideal_spectrum",
    "linear_spectrum",
    "dephasing_rate",
    "correlation_matrices",
    "dephasing_factor",
    "weight_function",
    "sample_fluctuations",
    "sample_spectrum",
    "Hamiltonian",
    "UnitaryOperator",
    "AveragedTransition",
    "hamiltonian_from",
    "unitary",
    "transition_probability",
    "averaged_transition",
    "asymptotic_transition",
    "MonitoredOperator",
    "DetectionSeries",
    "monitored_operator_energy",
    "monitored_operator_position",
    "detection_series",
    "invariant_subspace_defect",
    "removed_states_check",
]
