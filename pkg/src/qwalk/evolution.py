"""Hamiltonians and unitary evolution built from (basis, spectrum).

The package never diagonalizes anything in production code: operators are
assembled directly from the prescribed eigenbasis B and eigenvalues E as

    H = B^dagger diag(E) B,        U(t) = B^dagger diag(exp(-i E t)) B,

so eigenvectors and eigenvalues are inputs, not outputs.  Dense matrix
exponentials appear only as independent test oracles.

Site and eigenvector indices in the public API are 1-based; a transition
probability ``P(M, M', t)`` is the probability to move from site M' to
site M in time t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import OrthonormalBasis
from .spectral import EigenvalueEnsemble, Spectrum, weight_function

__all__ = [
    "Hamiltonian",
    "UnitaryOperator",
    "AveragedTransition",
    "hamiltonian_from",
    "unitary",
    "transition_probability",
    "averaged_transition",
    "asymptotic_transition",
]


@dataclass(frozen=True)
class Hamiltonian:
    """Hermitian matrix in position coordinates (units of inverse time)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=complex)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class UnitaryOperator:
    """Evolution matrix U(t) in position coordinates."""

    matrix: np.ndarray
    time: float

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=complex)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class AveragedTransition:
    """Disorder-averaged transition probability and its two parts.

    ``value = (1 - weight) * classical_part + weight * quantum_part``
    holds exactly for the shipped ensembles: the classical part is the
    static sum over ``|q|^2 |q|^2``, the quantum part is the transition
    probability of the mean Hamiltonian and the weight is w(t).
    """

    classical_part: float
    quantum_part: float
    weight: float
    value: float


def _check_pair(basis: OrthonormalBasis, spectrum_n: int):
    if basis.n != spectrum_n:
        raise ValueError(f"basis size {basis.n} does not match spectrum size {spectrum_n}")


def hamiltonian_from(basis: OrthonormalBasis, spectrum: Spectrum) -> Hamiltonian:
    """Assemble ``H = sum_k E_k |k><k|`` from eigenvectors and eigenvalues.

    With the localized or plane-wave basis and the (0, 1, ..., 1) spectrum
    this reproduces the all-to-all graph matrix ``delta_jj' - 1/n``.
    """
    _check_pair(basis, spectrum.n)
    rows = basis.rows
    return Hamiltonian(matrix=(rows.conj().T * spectrum.energies) @ rows)


def unitary(basis: OrthonormalBasis, spectrum: Spectrum, t: float) -> UnitaryOperator:
    """Evolution operator ``U(t) = sum_k exp(-i E_k t) |k><k|``.

    Agrees with the dense matrix exponential of :func:`hamiltonian_from`
    but costs one diagonal scaling and one matrix product.
    """
    _check_pair(basis, spectrum.n)
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    rows = basis.rows
    phases = np.exp(-1j * spectrum.energies * t)
    return UnitaryOperator(matrix=rows.conj().T @ (phases[:, None] * rows), time=float(t))


def transition_probability(u: UnitaryOperator, m_to: int, m_from: int) -> float:
    """``P(m_to, m_from) = |U[m_to, m_from]|**2`` with 1-based site indices."""
    n = u.n
    if not (1 <= m_to <= n and 1 <= m_from <= n):
        raise ValueError(f"site indices ({m_to}, {m_from}) out of range 1..{n}")
    return float(np.abs(u.matrix[m_to - 1, m_from - 1]) ** 2)


def averaged_transition(
    basis: OrthonormalBasis,
    ensemble: EigenvalueEnsemble,
    t: float,
    m_to: int,
    m_from: int,
) -> AveragedTransition:
    """Transition probability averaged over the eigenvalue ensemble.

    Evaluates the exact double sum
    ``sum_kl p_kl(t) q(M,k) q*(M',k) q*(M,l) q(M',l)`` with the closed-form
    dephasing factors ``p_kl`` and returns it decomposed into the
    classical/quantum split; the imaginary residue of the double sum is
    checked to be below 1e-12 and discarded.
    """
    _check_pair(basis, ensemble.n)
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    n = basis.n
    if not (1 <= m_to <= n and 1 <= m_from <= n):
        raise ValueError(f"site indices ({m_to}, {m_from}) out of range 1..{n}")

    amp = basis.site_overlaps(m_to) * np.conj(basis.site_overlaps(m_from))
    w = weight_function(ensemble, t)
    mean_phases = np.exp(-1j * ensemble.means * t)

    # p matrix of Gaussian dephasing factors: 1 on the diagonal, the common
    # magnitude w(t) times the mean-level phase off the diagonal.
    p = w * np.outer(mean_phases, mean_phases.conj())
    np.fill_diagonal(p, 1.0)
    raw = amp @ p @ amp.conj()
    if abs(raw.imag) > 1e-12:
        raise ArithmeticError(f"averaged transition has imaginary residue {raw.imag:.3e}")

    classical = float(np.sum(np.abs(amp) ** 2))
    quantum = float(np.abs(np.dot(amp, mean_phases)) ** 2)
    return AveragedTransition(
        classical_part=classical,
        quantum_part=quantum,
        weight=float(w),
        value=float(raw.real),
    )


def asymptotic_transition(
    basis: OrthonormalBasis,
    m_to: int,
    m_from: int,
    cyclic_average: bool = False,
) -> float:
    """Infinite-time limit ``sum_k |q(M,k)|**2 |q(M',k)|**2`` of the average.

    For the plane-wave basis this is 1/n for every pair; for the localized
    basis it favors transitions between small site indices and is symmetric
    in (m_to, m_from).  With ``cyclic_average=True`` the value is averaged
    over all n cyclic relabelings of the sites, which restores translation
    invariance on the graph.
    """
    n = basis.n
    if not (1 <= m_to <= n and 1 <= m_from <= n):
        raise ValueError(f"site indices ({m_to}, {m_from}) out of range 1..{n}")
    weights = np.abs(basis.rows) ** 2
    if not cyclic_average:
        return float(np.dot(weights[:, m_to - 1], weights[:, m_from - 1]))
    shifts = [
        float(np.dot(weights[:, (m_to - 1 + p) % n], weights[:, (m_from - 1 + p) % n]))
        for p in range(n)
    ]
    return float(np.mean(shifts))
