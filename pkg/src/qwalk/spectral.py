"""Spectra and Gaussian eigenvalue ensembles.

A :class:`Spectrum` is a plain list of eigenvalues (units of inverse
time, hbar = 1).  An :class:`EigenvalueEnsemble` adds Gaussian
fluctuations ``x_k = E_k - mean_k`` around the mean eigenvalues, with a
joint density proportional to ``exp(-sum_kk' x_k gamma_kk' x_k')`` (no
factor 1/2 in the exponent, hence covariance ``inv(gamma) / 2``).  Three
correlation models are supported, each with a closed-form ``gamma`` and
inverse:

* ``Uncorrelated(kappa)``: diagonal, ``inv(gamma)_kk = kappa``,
* ``Attractive(kappa, a)``: pairwise differences penalized,
* ``Repulsive(kappa, b)``: pairwise differences rewarded.

In all three models the off-diagonal dephasing factor
``<exp(-i (x_k - x_l) t)>`` has the same modulus ``exp(-sigma t**2 / 2)``
for every pair k != l, with ``sigma`` equal to ``kappa``,
``kappa / (1 + a)`` and ``kappa / (b - 1)`` respectively.  The
correlated-Gaussian sampler doubles as the Monte Carlo oracle for these
closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
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
]


@dataclass(frozen=True)
class Spectrum:
    """Real eigenvalues E_1..E_n, optionally pinned to E_1 = 0.

    ``detailed_balance=True`` asserts the exact pinning E_1 = 0 that makes
    the row sums of the evolution operator equal one when combined with a
    basis whose first row is uniform.
    """

    energies: np.ndarray
    detailed_balance: bool = False

    def __post_init__(self):
        energies = np.ascontiguousarray(self.energies, dtype=float)
        if energies.ndim != 1 or energies.size < 2:
            raise ValueError(f"expected a 1-d spectrum of size >= 2, got shape {energies.shape}")
        if not np.all(np.isfinite(energies)):
            raise ValueError("spectrum contains non-finite entries")
        if self.detailed_balance and energies[0] != 0.0:
            raise ValueError(f"detailed balance requires E_1 = 0 exactly, got {energies[0]}")
        energies.flags.writeable = False
        object.__setattr__(self, "energies", energies)

    @property
    def n(self) -> int:
        return self.energies.size


def ideal_spectrum(n: int) -> Spectrum:
    """The (0, 1, 1, ..., 1) spectrum of the all-to-all graph Hamiltonian."""
    if n < 2:
        raise ValueError(f"spectrum size must be at least 2, got {n}")
    energies = np.ones(n)
    energies[0] = 0.0
    return Spectrum(energies, detailed_balance=True)


def linear_spectrum(n: int) -> Spectrum:
    """Equally spaced levels E_k = k - 1."""
    if n < 2:
        raise ValueError(f"spectrum size must be at least 2, got {n}")
    return Spectrum(np.arange(n, dtype=float), detailed_balance=True)


@dataclass(frozen=True)
class Uncorrelated:
    """Independent level fluctuations with inv(gamma)_kk = kappa."""

    kappa: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")


@dataclass(frozen=True)
class Attractive:
    """Correlated fluctuations penalizing pairwise level differences."""

    kappa: float
    a: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")


@dataclass(frozen=True)
class Repulsive:
    """Correlated fluctuations rewarding pairwise level differences."""

    kappa: float
    b: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.b > 1:
            raise ValueError(f"b must be greater than 1, got {self.b}")


FluctuationModel = Uncorrelated | Attractive | Repulsive


@dataclass(frozen=True)
class EigenvalueEnsemble:
    """Mean eigenvalues plus a Gaussian fluctuation model."""

    means: np.ndarray
    model: FluctuationModel

    def __post_init__(self):
        means = np.ascontiguousarray(self.means, dtype=float)
        if means.ndim != 1 or means.size < 2:
            raise ValueError(f"expected 1-d means of size >= 2, got shape {means.shape}")
        if not np.all(np.isfinite(means)):
            raise ValueError("means contain non-finite entries")
        if not isinstance(self.model, (Uncorrelated, Attractive, Repulsive)):
            raise TypeError(f"unknown fluctuation model {type(self.model).__name__}")
        means.flags.writeable = False
        object.__setattr__(self, "means", means)

    @property
    def n(self) -> int:
        return self.means.size


def dephasing_rate(model: FluctuationModel) -> float:
    """The coefficient sigma in ``w(t) = exp(-sigma t**2 / 2)``."""
    if isinstance(model, Uncorrelated):
        return model.kappa
    if isinstance(model, Attractive):
        return model.kappa / (1.0 + model.a)
    if isinstance(model, Repulsive):
        return model.kappa / (model.b - 1.0)
    raise TypeError(f"unknown fluctuation model {type(model).__name__}")


def correlation_matrices(ensemble: EigenvalueEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form correlation matrix gamma and its inverse.

    Returns
    -------
    (gamma, gamma_inv) : tuple of numpy.ndarray
        Real symmetric (n, n) matrices satisfying
        ``gamma @ gamma_inv = 1`` to machine precision.  The fluctuation
        covariance is ``gamma_inv / 2``.
    """
    n = ensemble.n
    model = ensemble.model
    eye = np.eye(n)
    ones = np.ones((n, n))
    if isinstance(model, Uncorrelated):
        gamma = eye / model.kappa
        gamma_inv = eye * model.kappa
    elif isinstance(model, Attractive):
        kappa, a = model.kappa, model.a
        gamma = ((1.0 + a) * eye - ones / n) / kappa
        gamma_inv = (kappa / (1.0 + a)) * (eye + ones / (a * n))
    elif isinstance(model, Repulsive):
        kappa, b = model.kappa, model.b
        gamma = ((b - 1.0) * eye + ones / n) / kappa
        gamma_inv = (kappa / (b - 1.0)) * (eye - ones / (b * n))
    else:
        raise TypeError(f"unknown fluctuation model {type(model).__name__}")
    return gamma, gamma_inv


def dephasing_factor(ensemble: EigenvalueEnsemble, k: int, l: int, t: float) -> complex:
    """Ensemble average ``<exp(-i (E_k - E_l) t)>``.

    Exactly 1 for k = l; otherwise
    ``exp(-sigma t**2 / 2) * exp(-i (mean_k - mean_l) t)`` with the
    model's dephasing rate sigma.  Indices are 1-based.
    """
    n = ensemble.n
    if not (1 <= k <= n and 1 <= l <= n):
        raise ValueError(f"indices ({k}, {l}) out of range 1..{n}")
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if k == l:
        return 1.0 + 0.0j
    sigma = dephasing_rate(ensemble.model)
    delta = ensemble.means[k - 1] - ensemble.means[l - 1]
    return complex(np.exp(-sigma * t * t / 2.0) * np.exp(-1j * delta * t))


def weight_function(ensemble: EigenvalueEnsemble, t):
    """Common off-diagonal dephasing magnitude ``w(t) = exp(-sigma t**2/2)``.

    Accepts a scalar or an array of times; w(0) = 1 and w decreases
    monotonically, underflowing gracefully to 0 at large t.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("times must be nonnegative")
    sigma = dephasing_rate(ensemble.model)
    w = np.exp(-sigma * t * t / 2.0)
    return float(w) if w.ndim == 0 else w


def _covariance_root(ensemble: EigenvalueEnsemble) -> np.ndarray:
    """Symmetric square root of the covariance gamma_inv / 2."""
    _, gamma_inv = correlation_matrices(ensemble)
    cov = gamma_inv / 2.0
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals.min() < -1e-12 * max(eigvals.max(), 1.0):
        raise ArithmeticError(
            f"covariance is not positive semidefinite (min eigenvalue {eigvals.min():.3e})"
        )
    return (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))) @ eigvecs.T


def sample_fluctuations(ensemble: EigenvalueEnsemble, samples: int, seed: int) -> np.ndarray:
    """Draw zero-mean Gaussian fluctuations with covariance gamma_inv / 2.

    Returns a (samples, n) array; deterministic for a fixed seed.  This is
    the Monte Carlo oracle against which the closed-form dephasing factors
    are validated.
    """
    if samples < 1:
        raise ValueError(f"need at least one sample, got {samples}")
    root = _covariance_root(ensemble)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((samples, ensemble.n)) @ root


def sample_spectrum(ensemble: EigenvalueEnsemble, seed: int) -> Spectrum:
    """Draw one random spectrum ``E = means + x`` from the ensemble.

    The fluctuations hit every level, including the first, so the sampled
    spectrum carries no detailed-balance pinning.
    """
    x = sample_fluctuations(ensemble, 1, seed)[0]
    return Spectrum(ensemble.means + x, detailed_balance=False)
