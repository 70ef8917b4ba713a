"""Orthonormal eigenbases on a finite graph of N sites.

Every basis is stored as the rows of an N x N unitary matrix: row k is
eigenvector number k written in position coordinates (component l is the
amplitude at site l).  Three families are provided:

* a localized basis built by Gram-Schmidt from pairwise difference
  vectors, whose row k is supported on sites 1..k only,
* the delocalized plane-wave (discrete Fourier) basis,
* mixed bases that fill contiguous index blocks from either family and
  re-orthonormalize the whole set.

The overlap between position state M and eigenvector k used everywhere
downstream is ``q(M, k) = conj(rows[k-1, M-1])``; see
:meth:`OrthonormalBasis.site_overlaps`.  All indices in the public API
are 1-based, matching the site/eigenvector numbering of the model.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "BasisKind",
    "VectorClass",
    "OrthonormalBasis",
    "BasisPartition",
    "LinearDependenceError",
    "localized_basis",
    "plane_wave_basis",
    "mixed_basis",
    "random_partition",
    "gram_schmidt",
    "localization_coefficient",
    "classify_vector",
]

#: Maximum allowed deviation of B @ B^dagger from the identity.
ORTHONORMALITY_TOL = 1e-12

#: Relative rejection norm below which a Gram-Schmidt step is repeated.
REORTHOGONALIZE_BELOW = 1e-8

#: Relative rejection norm below which the input is declared dependent.
LINEAR_DEPENDENCE_BELOW = 1e-10


class BasisKind(Enum):
    LOCALIZED = "localized"
    PLANE_WAVE = "plane_wave"
    MIXED = "mixed"


class VectorClass(Enum):
    """Classification of a single eigenvector by its fourth moment."""

    LOCALIZED = "localized"
    DELOCALIZED = "delocalized"
    INTERMEDIATE = "intermediate"


class LinearDependenceError(ValueError):
    """Raised when Gram-Schmidt meets a (numerically) dependent vector.

    Attributes
    ----------
    index : int
        1-based position of the offending vector in the input sequence.
    """

    def __init__(self, index: int, rejection: float):
        self.index = index
        self.rejection = rejection
        super().__init__(
            f"vector {index} is linearly dependent on its predecessors "
            f"(relative rejection norm {rejection:.3e})"
        )


@dataclass(frozen=True)
class OrthonormalBasis:
    """An orthonormal eigenbasis, rows = eigenvectors in position coordinates.

    Parameters
    ----------
    n : int
        Number of graph sites (and eigenvectors).
    rows : numpy.ndarray
        Complex (n, n) matrix; row k-1 holds eigenvector k.
    kind : BasisKind
        Which family the basis belongs to.

    Raises
    ------
    ValueError
        If the matrix is not square of size ``n`` or the rows fail
        orthonormality beyond ``ORTHONORMALITY_TOL``.
    """

    n: int
    rows: np.ndarray
    kind: BasisKind

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=complex)
        if rows.shape != (self.n, self.n):
            raise ValueError(f"expected a ({self.n}, {self.n}) matrix, got {rows.shape}")
        gram = rows @ rows.conj().T
        defect = np.abs(gram - np.eye(self.n)).max()
        if defect > ORTHONORMALITY_TOL:
            raise ValueError(
                f"rows are not orthonormal: max deviation {defect:.3e} "
                f"exceeds {ORTHONORMALITY_TOL:.0e}"
            )
        rows.flags.writeable = False
        object.__setattr__(self, "rows", rows)

    def site_overlaps(self, m: int) -> np.ndarray:
        """Overlaps q(m, k) of site ``m`` with every eigenvector, k = 1..n.

        Returns ``conj(rows[:, m-1])``, the vector whose k-th component is
        the scalar product of position state m with eigenvector k.
        """
        if not 1 <= m <= self.n:
            raise ValueError(f"site index {m} out of range 1..{self.n}")
        return np.conj(self.rows[:, m - 1])


@dataclass(frozen=True)
class BasisPartition:
    """Contiguous blocks covering eigenvector indices 2..n exactly once.

    Each block is a ``(start, length, kind)`` triple with 1-based start
    index, ``length >= 1`` and ``kind`` either ``BasisKind.LOCALIZED`` or
    ``BasisKind.PLANE_WAVE``.  The first block starts at index 2 and the
    blocks join without gaps; which n they cover is checked by
    :func:`mixed_basis`.
    """

    blocks: tuple[tuple[int, int, BasisKind], ...]

    def __post_init__(self):
        blocks = tuple((int(s), int(ln), kind) for s, ln, kind in self.blocks)
        if not blocks:
            raise ValueError("partition has no blocks")
        expected_start = 2
        for i, (start, length, kind) in enumerate(blocks):
            if kind not in (BasisKind.LOCALIZED, BasisKind.PLANE_WAVE):
                raise ValueError(f"block {i}: kind must be LOCALIZED or PLANE_WAVE, got {kind}")
            if length < 1:
                raise ValueError(f"block {i}: length must be >= 1, got {length}")
            if start != expected_start:
                raise ValueError(
                    f"block {i}: starts at {start}, expected {expected_start} "
                    "(blocks must be contiguous from index 2)"
                )
            expected_start = start + length
        object.__setattr__(self, "blocks", blocks)

    @property
    def covered_until(self) -> int:
        """Largest eigenvector index covered by the blocks."""
        start, length, _ = self.blocks[-1]
        return start + length - 1


def localized_basis(n: int) -> OrthonormalBasis:
    """The localized orthonormal basis of size ``n``.

    Row 1 is the uniform vector ``(1, ..., 1)/sqrt(n)``.  Row k (k >= 2)
    has components ``1/sqrt(k(k-1))`` at sites l < k, ``-(k-1)/sqrt(k(k-1))``
    at site l = k and exact zeros at sites l > k, so that every row beyond
    the first is localized around its own index.

    Parameters
    ----------
    n : int
        Graph size, at least 2.

    Returns
    -------
    OrthonormalBasis
        Basis of kind ``LOCALIZED`` with real rows.
    """
    if n < 2:
        raise ValueError(f"basis size must be at least 2, got {n}")
    rows = np.zeros((n, n), dtype=complex)
    rows[0] = 1.0 / np.sqrt(n)
    for k in range(2, n + 1):
        norm = np.sqrt(k * (k - 1))
        rows[k - 1, : k - 1] = 1.0 / norm
        rows[k - 1, k - 1] = -(k - 1) / norm
    return OrthonormalBasis(n=n, rows=rows, kind=BasisKind.LOCALIZED)


def plane_wave_basis(n: int) -> OrthonormalBasis:
    """The plane-wave (discrete Fourier) basis of size ``n``.

    Component (j, k) equals ``exp(2*pi*i*(j-1)*(k-1)/n) / sqrt(n)``; all
    rows are fully delocalized over the graph.
    """
    if n < 2:
        raise ValueError(f"basis size must be at least 2, got {n}")
    idx = np.arange(n)
    rows = np.exp(2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)
    return OrthonormalBasis(n=n, rows=rows, kind=BasisKind.PLANE_WAVE)


def random_partition(n: int, seed: int) -> BasisPartition:
    """Draw a random block partition of indices 2..n with random kinds.

    Block boundaries are chosen uniformly (each interior index may start a
    new block with probability 1/2) and each block is tagged LOCALIZED or
    PLANE_WAVE with equal probability.  Deterministic for a fixed seed.
    """
    if n < 2:
        raise ValueError(f"basis size must be at least 2, got {n}")
    rng = np.random.default_rng(seed)
    starts = [2]
    for idx in range(3, n + 1):
        if rng.random() < 0.5:
            starts.append(idx)
    starts.append(n + 1)
    blocks = []
    for lo, hi in zip(starts[:-1], starts[1:]):
        kind = BasisKind.LOCALIZED if rng.random() < 0.5 else BasisKind.PLANE_WAVE
        blocks.append((lo, hi - lo, kind))
    return BasisPartition(blocks=tuple(blocks))


def mixed_basis(n: int, partition: BasisPartition | None = None, seed: int = 0) -> OrthonormalBasis:
    """Mix localized and plane-wave rows block by block.

    Row 1 is the uniform vector.  For a block ``(start, length, kind)`` the
    rows ``start .. start+length-1`` are taken from the pure basis of that
    kind (of full size ``n``), then the whole set is re-orthonormalized by
    modified Gram-Schmidt in ascending index order, so later blocks are
    orthogonalized against row 1 and all earlier blocks.  A single
    full-range block therefore reproduces the pure basis exactly.

    Parameters
    ----------
    n : int
        Graph size, at least 2.
    partition : BasisPartition, optional
        Block layout; must cover indices 2..n.  When omitted, a random
        partition is drawn from ``seed`` via :func:`random_partition`.
    seed : int
        Only used when ``partition`` is None.

    Returns
    -------
    OrthonormalBasis
        Basis of kind ``MIXED``.
    """
    if n < 2:
        raise ValueError(f"basis size must be at least 2, got {n}")
    if partition is None:
        partition = random_partition(n, seed)
    if partition.covered_until != n:
        raise ValueError(
            f"partition covers indices 2..{partition.covered_until}, expected 2..{n}"
        )
    pure = {
        BasisKind.LOCALIZED: localized_basis(n).rows,
        BasisKind.PLANE_WAVE: plane_wave_basis(n).rows,
    }
    raw = np.zeros((n, n), dtype=complex)
    raw[0] = 1.0 / np.sqrt(n)
    for start, length, kind in partition.blocks:
        sl = slice(start - 1, start - 1 + length)
        raw[sl] = pure[kind][sl]
    rows = gram_schmidt(raw)
    return OrthonormalBasis(n=n, rows=rows, kind=BasisKind.MIXED)


def gram_schmidt(vectors) -> np.ndarray:
    """Orthonormalize a sequence of complex vectors in the given order.

    Modified Gram-Schmidt with one re-orthogonalization pass whenever the
    rejection norm drops below ``REORTHOGONALIZE_BELOW`` times the input
    norm (classical single-pass projections lose orthogonality once the
    set is large or ill conditioned).  The first output vector is the
    first input normalized, and the span is preserved.

    Parameters
    ----------
    vectors : array_like
        Sequence of m vectors of length n, m <= n, as an (m, n) array.

    Returns
    -------
    numpy.ndarray
        Complex (m, n) array with orthonormal rows.

    Raises
    ------
    LinearDependenceError
        If some vector's rejection norm falls below
        ``LINEAR_DEPENDENCE_BELOW`` times its input norm; the error
        carries the 1-based index of the offending vector.
    """
    vs = np.array(vectors, dtype=complex)
    if vs.ndim != 2:
        raise ValueError(f"expected a 2-d array of row vectors, got shape {vs.shape}")
    m = vs.shape[0]
    out = np.empty_like(vs)
    for j in range(m):
        ref = np.linalg.norm(vs[j])
        if ref == 0.0:
            raise LinearDependenceError(j + 1, 0.0)
        v = vs[j].copy()
        for i in range(j):
            v -= np.vdot(out[i], v) * out[i]
        rej = np.linalg.norm(v)
        if rej < REORTHOGONALIZE_BELOW * ref:
            for i in range(j):
                v -= np.vdot(out[i], v) * out[i]
            rej = np.linalg.norm(v)
        if rej < LINEAR_DEPENDENCE_BELOW * ref:
            raise LinearDependenceError(j + 1, rej / ref)
        out[j] = v / rej
    return out


def localization_coefficient(basis: OrthonormalBasis, k: int) -> float:
    """Fourth-moment coefficient ``c_k = sum_l |rows[k][l]|**4`` of row k.

    Scales like 1/n for delocalized rows and stays of order one for
    localized rows; for the localized basis it equals
    ``(1 - 1/k)**2 + 1/(k**2 (k-1))`` independently of n.
    """
    if not 1 <= k <= basis.n:
        raise ValueError(f"eigenvector index {k} out of range 1..{basis.n}")
    return float(np.sum(np.abs(basis.rows[k - 1]) ** 4))


def classify_vector(c: float, n: int) -> VectorClass:
    """Classify a fourth-moment coefficient as localized or delocalized.

    ``LOCALIZED`` for c >= 1/2 (the exact lower bound attained by the
    localized basis rows, minus a 1e-12 rounding slack), ``DELOCALIZED``
    for c <= 2/n (twice the exact plane-wave value, absorbing rounding),
    ``INTERMEDIATE`` otherwise.  The localized test is applied first, so
    it wins at very small n where the two bands overlap.
    """
    if not 0.0 < c <= 1.0 + 1e-12:
        raise ValueError(f"coefficient must lie in (0, 1], got {c}")
    if n < 2:
        raise ValueError(f"basis size must be at least 2, got {n}")
    if c >= 0.5 - 1e-12:
        return VectorClass.LOCALIZED
    if c <= 2.0 / n:
        return VectorClass.DELOCALIZED
    return VectorClass.INTERMEDIATE
