"""Coprime-array geometry, difference-coarray lag sets, and combining matrices.

A coprime array is built from a pair of coprime integers (m, n) with m < n:
a ULA of n elements at spacing m interleaved with a ULA of 2m - 1 elements
at spacing n.  Element positions are stored as integers in units of the
base spacing d (half a wavelength), so the geometry itself is exact and all
phase arithmetic happens in :func:`steering_vector`.

The pairwise position differences of the physical array cover every integer
lag in [-(n_virtual - 1), n_virtual - 1] with n_virtual = m*n + m, which is
what lets the array emulate a much longer virtual ULA (the difference
coarray).  :func:`coarray_lag_sets` maps each lag to the entries of the
vectorized autocorrelation matrix that estimate it, and the selection /
averaging combiners turn those index sets into linear maps from the L^2
autocorrelation vector to the (2*n_virtual - 1)-point coarray vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NotCoprimeError",
    "OrderViolationError",
    "ArrayGeometry",
    "LagIndexMap",
    "Combiner",
    "make_coprime_array",
    "coarray_lag_sets",
    "selection_combiner",
    "averaging_combiner",
    "steering_vector",
]

# Lag sign convention used throughout the package.  Index j of the
# column-major vectorized autocorrelation matrix addresses entry
# (row, col) = (j % L, j // L); its lag is position[row] - position[col],
# which makes kron(s.conj(), s)[j] == v(theta)**lag hold exactly.
LAG_CONVENTION = "row-minus-column"


class NotCoprimeError(ValueError):
    """The array pair (m, n) is not coprime."""


class OrderViolationError(ValueError):
    """The array pair (m, n) does not satisfy m < n."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Physical coprime array with integer element positions.

    Attributes
    ----------
    m, n : int
        The coprime pair, m < n.
    positions : np.ndarray
        Sorted integer element positions in units of the base spacing.
    n_elements : int
        Physical element count, 2m + n - 1.
    n_virtual : int
        Virtual-ULA length of the difference coarray, m*n + m.
    """

    m: int
    n: int
    positions: np.ndarray
    n_elements: int
    n_virtual: int

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("m and n must be positive integers")
        if self.m >= self.n:
            raise OrderViolationError(f"require m < n, got ({self.m}, {self.n})")
        if math.gcd(self.m, self.n) != 1:
            raise NotCoprimeError(f"({self.m}, {self.n}) are not coprime")
        pos = np.asarray(self.positions, dtype=int)
        object.__setattr__(self, "positions", pos)
        if self.n_elements != 2 * self.m + self.n - 1 or len(pos) != self.n_elements:
            raise ValueError("element count does not match 2m + n - 1")
        if self.n_virtual != self.m * self.n + self.m:
            raise ValueError("virtual length does not match m*n + m")
        if len(np.unique(pos)) != len(pos) or np.any(np.diff(pos) <= 0):
            raise ValueError("positions must be strictly increasing and unique")


@dataclass(frozen=True)
class LagIndexMap:
    """Map from coarray lag to the vec(R) indices that estimate it.

    ``sets[lag]`` holds the sorted 0-based indices j of the column-major
    vectorized L x L autocorrelation matrix whose expected value rotates as
    v(theta)**lag.  Lags run over [-(n_virtual-1), n_virtual-1].
    """

    sets: dict[int, np.ndarray]
    n_virtual: int
    n_elements: int
    convention: str = LAG_CONVENTION

    @property
    def lags(self) -> np.ndarray:
        return np.arange(1 - self.n_virtual, self.n_virtual)

    def cardinality(self, lag: int) -> int:
        return len(self.sets[lag])


@dataclass(frozen=True)
class Combiner:
    """Linear combining matrix mapping vec(R) estimates to coarray lags.

    ``matrix`` is complex with shape (L^2, 2*n_virtual - 1); column c
    produces the coarray lag c - (n_virtual - 1).  ``kind`` is one of
    "selection", "averaging", "mmse".  Selection combiners record the index
    picked per lag; MMSE combiners record per-column normal-equation
    residuals.
    """

    matrix: np.ndarray
    kind: str
    picked_indices: np.ndarray | None = None
    residuals: np.ndarray | None = None

    @property
    def n_virtual(self) -> int:
        return (self.matrix.shape[1] + 1) // 2


def make_coprime_array(m: int, n: int) -> ArrayGeometry:
    """Construct the coprime array for the pair (m, n).

    Element positions are the union of {0, m, 2m, ..., (n-1)m} and
    {n, 2n, ..., (2m-1)n}, sorted ascending, in units of the base spacing.

    Raises
    ------
    NotCoprimeError
        If gcd(m, n) != 1.
    OrderViolationError
        If m >= n.
    """
    if m >= n:
        raise OrderViolationError(f"require m < n, got ({m}, {n})")
    if math.gcd(m, n) != 1:
        raise NotCoprimeError(f"({m}, {n}) are not coprime")
    sub_m = [i * m for i in range(n)]
    sub_n = [i * n for i in range(1, 2 * m)]
    positions = np.array(sorted(set(sub_m) | set(sub_n)), dtype=int)
    return ArrayGeometry(
        m=m,
        n=n,
        positions=positions,
        n_elements=2 * m + n - 1,
        n_virtual=m * n + m,
    )


def index_lags(geometry: ArrayGeometry) -> np.ndarray:
    """Lag of every index of the vectorized L x L autocorrelation matrix.

    Entry j addresses matrix entry (j % L, j // L) under column-major
    vectorization; its lag is position[row] - position[col].
    """
    pos = geometry.positions
    length = geometry.n_elements
    row = np.tile(np.arange(length), length)
    col = np.repeat(np.arange(length), length)
    return pos[row] - pos[col]


def coarray_lag_sets(geometry: ArrayGeometry) -> LagIndexMap:
    """Group vec(R) indices by coarray lag.

    Every lag in [-(n_virtual-1), n_virtual-1] is covered by at least one
    index; indices whose difference falls outside that contiguous range are
    discarded.
    """
    lags = index_lags(geometry)
    n_virtual = geometry.n_virtual
    sets = {}
    for lag in range(1 - n_virtual, n_virtual):
        idx = np.where(lags == lag)[0]
        if len(idx) == 0:
            raise ValueError(f"lag {lag} not covered; geometry is not a valid coprime array")
        sets[lag] = idx
    return LagIndexMap(sets=sets, n_virtual=n_virtual, n_elements=geometry.n_elements)


def selection_combiner(lag_map: LagIndexMap, picker: str = "smallest") -> Combiner:
    """Combiner that keeps a single vec(R) index per coarray lag.

    Parameters
    ----------
    lag_map : LagIndexMap
    picker : {"smallest", "largest"}
        Tie-break rule choosing which index represents each lag.  Any
        member of the lag set is statistically equivalent; the rule only
        fixes the choice for reproducibility.
    """
    if picker == "smallest":
        choose = np.min
    elif picker == "largest":
        choose = np.max
    else:
        raise ValueError(f"unknown picker {picker!r}")
    n_virtual = lag_map.n_virtual
    n_lags = 2 * n_virtual - 1
    picked = np.empty(n_lags, dtype=int)
    for c, lag in enumerate(range(1 - n_virtual, n_virtual)):
        picked[c] = choose(lag_map.sets[lag])
    matrix = np.zeros((lag_map.n_elements**2, n_lags), dtype=complex)
    matrix[picked, np.arange(n_lags)] = 1.0
    return Combiner(matrix=matrix, kind="selection", picked_indices=picked)


def averaging_combiner(lag_map: LagIndexMap) -> Combiner:
    """Combiner that averages every vec(R) index sharing a coarray lag."""
    n_virtual = lag_map.n_virtual
    n_lags = 2 * n_virtual - 1
    matrix = np.zeros((lag_map.n_elements**2, n_lags), dtype=complex)
    for c, lag in enumerate(range(1 - n_virtual, n_virtual)):
        idx = lag_map.sets[lag]
        matrix[idx, c] = 1.0 / len(idx)
    return Combiner(matrix=matrix, kind="averaging")


def steering_vector(geometry: ArrayGeometry, theta: float) -> np.ndarray:
    """Array response for a source at broadside angle theta (radians).

    Entry l is exp(-1j*pi*positions[l]*sin(theta)) under the
    half-wavelength spacing normalization; all entries have unit modulus.
    """
    return np.exp(-1j * np.pi * np.sin(theta) * geometry.positions)
