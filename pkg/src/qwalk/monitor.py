"""Monitored evolution: repeated projective measurements at one site.

One monitoring step evolves for tau/2, projects onto the complement of
the measured site M and evolves for tau/2 again.  In the energy basis the
step operator is assembled directly from the overlaps q(M, k),

    T[k, l] = exp(-i E_k tau/2) (delta_kl - q*(M,k) q(M,l)) exp(-i E_l tau/2),

which is the exact similarity transform of the position-space operator
``exp(-i H tau/2) (1 - |M><M|) exp(-i H tau/2)``.  First-detection
amplitudes are generated by repeated matrix-vector application of T, never
by forming matrix powers.

For the localized basis the projector part leaves the energy unit vectors
2..M-1 invariant exactly (their eigenvectors have no amplitude at site M),
so those energy states drop out of the monitored walk; the uniform
eigenvector k = 1 couples to the rest with strength 1/sqrt(n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .basis import OrthonormalBasis
from .evolution import hamiltonian_from
from .spectral import Spectrum

__all__ = [
    "MonitoredOperator",
    "DetectionSeries",
    "monitored_operator_energy",
    "monitored_operator_position",
    "detection_series",
    "invariant_subspace_defect",
    "removed_states_check",
]

#: Detection series stop early once the survival probability drops below this.
SURVIVAL_CUTOFF = 1e-14

#: Default number of measurement attempts in a detection series.
DEFAULT_M_MAX = 1000


@dataclass(frozen=True)
class MonitoredOperator:
    """One monitoring step in the energy basis, for measured site ``site``."""

    matrix: np.ndarray
    site: int
    tau: float

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=complex)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class DetectionSeries:
    """First-detection amplitudes and probabilities, indexed by attempt m.

    ``amplitudes[m-1]`` is the amplitude for first detection at site
    ``site_to`` on the m-th attempt starting from ``site_from``;
    ``probabilities`` are their squared moduli and ``cumulative`` the
    partial sums.  The series may be shorter than the requested number of
    attempts when the walker is detected with certainty early.
    """

    site_from: int
    site_to: int
    tau: float
    amplitudes: np.ndarray
    probabilities: np.ndarray
    cumulative: np.ndarray

    def __post_init__(self):
        for name in ("amplitudes", "probabilities", "cumulative"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def attempts(self) -> int:
        return self.amplitudes.size


def _check_site(n: int, m: int):
    if not 1 <= m <= n:
        raise ValueError(f"site index {m} out of range 1..{n}")


def monitored_operator_energy(
    basis: OrthonormalBasis, spectrum: Spectrum, tau: float, m_site: int
) -> MonitoredOperator:
    """Energy-basis monitoring step for measured site ``m_site``.

    The projector factor ``A = 1 - q* q`` annihilates the conjugate
    overlap vector of the measured site and acts as the identity on its
    orthogonal complement, so all eigenvalues of the returned matrix lie
    on the closed unit disk.
    """
    if basis.n != spectrum.n:
        raise ValueError(f"basis size {basis.n} does not match spectrum size {spectrum.n}")
    if tau <= 0:
        raise ValueError(f"measurement period must be positive, got {tau}")
    _check_site(basis.n, m_site)
    u = basis.rows[:, m_site - 1]  # conj of the overlap vector q(m_site, .)
    proj = np.eye(basis.n, dtype=complex) - np.outer(u, u.conj())
    half = np.exp(-1j * spectrum.energies * tau / 2.0)
    return MonitoredOperator(
        matrix=half[:, None] * proj * half[None, :], site=m_site, tau=float(tau)
    )


def monitored_operator_position(
    basis: OrthonormalBasis, spectrum: Spectrum, tau: float, m_site: int
) -> np.ndarray:
    """Position-space monitoring step, via the dense half-step exponential.

    Builds ``exp(-i H tau/2) (1 - |m><m|) exp(-i H tau/2)`` from
    :func:`~qwalk.evolution.hamiltonian_from`; conjugating the energy-basis
    operator with the basis matrix gives the same matrix.  This is the
    slow reference path used to cross-check the energy-basis formula.
    """
    if basis.n != spectrum.n:
        raise ValueError(f"basis size {basis.n} does not match spectrum size {spectrum.n}")
    if tau <= 0:
        raise ValueError(f"measurement period must be positive, got {tau}")
    _check_site(basis.n, m_site)
    h = hamiltonian_from(basis, spectrum).matrix
    half = expm(-0.5j * tau * h)
    proj = np.eye(basis.n, dtype=complex)
    proj[m_site - 1, m_site - 1] = 0.0
    return half @ proj @ half


def detection_series(
    basis: OrthonormalBasis,
    spectrum: Spectrum,
    tau: float,
    m_to: int,
    m_from: int,
    m_max: int = DEFAULT_M_MAX,
) -> DetectionSeries:
    """First-detection series for the transition ``m_from -> m_to``.

    The state is prepared at site ``m_from``, evolved and measured at site
    ``m_to`` every tau.  Amplitudes are accumulated by applying the
    monitoring operator to the evolved state vector once per attempt
    (cost n**2 per attempt); the first probability equals the plain
    unitary transition probability at time tau, since one attempt means
    no intervening measurement.  Iteration stops at ``m_max`` attempts or
    as soon as the survival probability falls below ``SURVIVAL_CUTOFF``.
    """
    if m_max < 1:
        raise ValueError(f"m_max must be at least 1, got {m_max}")
    _check_site(basis.n, m_from)
    op = monitored_operator_energy(basis, spectrum, tau, m_to)
    half = np.exp(-1j * spectrum.energies * tau / 2.0)
    u_to = basis.rows[:, m_to - 1]
    psi = half * basis.rows[:, m_from - 1]

    amplitudes = []
    for _ in range(m_max):
        amplitudes.append(np.vdot(u_to, half * psi))
        psi = op.matrix @ psi
        if np.vdot(psi, psi).real < SURVIVAL_CUTOFF:
            break
    amplitudes = np.array(amplitudes)
    probabilities = np.abs(amplitudes) ** 2
    return DetectionSeries(
        site_from=m_from,
        site_to=m_to,
        tau=float(tau),
        amplitudes=amplitudes,
        probabilities=probabilities,
        cumulative=np.cumsum(probabilities),
    )


def invariant_subspace_defect(
    basis: OrthonormalBasis, spectrum: Spectrum, tau: float, m_site: int, k: int
) -> float:
    """How far energy state k is from being a pure phase under monitoring.

    Returns ``norm(T e_k - exp(-i E_k tau) e_k)`` for the energy unit
    vector ``e_k`` with 1 <= k <= m_site - 1, the index range where the
    localized basis confines the monitored walk.  For the localized basis
    the defect vanishes identically for 2 <= k <= m_site - 1 (eigenvector
    k has exactly zero amplitude at site m_site) and equals 1/sqrt(n) at
    k = 1, the uniform eigenvector whose coupling to the measured site is
    the one O(1/sqrt(n)) term that survives.  Delocalized bases show a
    defect of order 1/sqrt(n) at every k.
    """
    if not 1 <= k <= m_site - 1:
        raise ValueError(f"energy index {k} out of range 1..{m_site - 1}")
    op = monitored_operator_energy(basis, spectrum, tau, m_site)
    column = op.matrix[:, k - 1].copy()
    column[k - 1] -= np.exp(-1j * spectrum.energies[k - 1] * tau)
    return float(np.linalg.norm(column))


def removed_states_check(
    basis: OrthonormalBasis, spectrum: Spectrum, tau: float, m_site: int, m: int
) -> float:
    """Leakage from the surviving block into energy states 2..m_site-1.

    Starts from the uniform superposition over energy indices
    ``m_site..n``, applies the monitoring operator m - 1 times and returns
    the largest overlap magnitude with the energy unit vectors
    2..m_site-1.  For the localized basis this is exactly zero for every
    m (those states are removed from the walk); for delocalized bases it
    is generically nonzero.
    """
    if m < 1:
        raise ValueError(f"attempt count must be at least 1, got {m}")
    if m_site < 3:
        raise ValueError(f"measured site must be at least 3, got {m_site}")
    _check_site(basis.n, m_site)
    op = monitored_operator_energy(basis, spectrum, tau, m_site)
    y = np.zeros(basis.n, dtype=complex)
    y[m_site - 1 :] = 1.0 / np.sqrt(basis.n - m_site + 1)
    for _ in range(m - 1):
        y = op.matrix @ y
    return float(np.abs(y[1 : m_site - 1]).max())
