"""Spatial smoothing into the virtual-ULA matrix and MUSIC DoA estimation.

The combined coarray autocorrelation vector holds one value per lag in
[-(n_virtual-1), n_virtual-1].  Spatial smoothing arranges overlapping
windows of that vector as matrix columns; on nominal data the result
equals the autocorrelation matrix of a contiguous virtual ULA, so
subspace DoA estimation applies as if the longer array were physical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics

__all__ = [
    "SmoothedMatrix",
    "MusicResult",
    "virtual_steering",
    "smoothing_operator",
    "spatial_smooth",
    "spatial_smooth_explicit",
    "music_spectrum",
    "estimate_doas",
]


@dataclass(frozen=True)
class SmoothedMatrix:
    """Virtual-ULA autocorrelation estimate plus the combiner that fed it."""

    matrix: np.ndarray
    source: str = "unknown"

    @property
    def n_virtual(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class MusicResult:
    """MUSIC pseudospectrum with the extracted minima.

    ``estimates`` are the refined angles of the local minima with the
    smallest spectrum values, ascending; ``complete`` is False when fewer
    minima than requested sources were found.
    """

    grid: np.ndarray
    spectrum: np.ndarray
    estimates: np.ndarray
    complete: bool


def virtual_steering(n_virtual: int, theta) -> np.ndarray:
    """Steering vector(s) of the contiguous virtual ULA at unit spacing.

    Entry m is exp(-1j*pi*sin(theta))**m for m = 0..n_virtual-1.  A scalar
    angle gives a vector; an array of angles gives one column per angle.
    """
    theta = np.asarray(theta, dtype=float)
    phase = np.exp(-1j * np.pi * np.sin(theta))
    if theta.ndim == 0:
        return phase ** np.arange(n_virtual)
    return phase[None, :] ** np.arange(n_virtual)[:, None]


def smoothing_operator(n_virtual: int) -> np.ndarray:
    """Explicit smoothing matrix acting on kron(I, coarray vector).

    Horizontal stack of the window selectors [0 | I | 0]; kept as a second
    construction route so the fast slicing implementation can be checked
    against it.
    """
    n_lags = 2 * n_virtual - 1
    blocks = []
    for m in range(1, n_virtual + 1):
        block = np.zeros((n_virtual, n_lags))
        block[:, n_virtual - m : 2 * n_virtual - m] = np.eye(n_virtual)
        blocks.append(block)
    return np.hstack(blocks)


def spatial_smooth(r_co: np.ndarray, source: str = "unknown") -> SmoothedMatrix:
    """Arrange the coarray vector into the virtual-ULA matrix.

    Column m holds the window of lags (1-m)..(n_virtual-m); entry (a, b)
    is therefore the coarray value at lag a - b, giving a Toeplitz-like
    matrix that, for nominal input, equals the virtual ULA's exact
    autocorrelation matrix.
    """
    r_co = np.asarray(r_co)
    if r_co.ndim != 1 or r_co.size % 2 != 1:
        raise ValueError(f"expected an odd-length lag vector, got shape {r_co.shape}")
    n_virtual = (r_co.size + 1) // 2
    cols = [r_co[n_virtual - 1 - b : 2 * n_virtual - 1 - b] for b in range(n_virtual)]
    return SmoothedMatrix(matrix=np.column_stack(cols), source=source)


def spatial_smooth_explicit(r_co: np.ndarray) -> np.ndarray:
    """Smoothing via the explicit operator; algebraically identical to slicing."""
    r_co = np.asarray(r_co)
    n_virtual = (r_co.size + 1) // 2
    op = smoothing_operator(n_virtual)
    return op @ numerics.kron(np.eye(n_virtual), r_co.reshape(-1, 1))


def _refine_parabolic(grid: np.ndarray, spectrum: np.ndarray, idx: int) -> float:
    """Vertex of the parabola through a minimum and its two neighbors."""
    y0, y1, y2 = spectrum[idx - 1], spectrum[idx], spectrum[idx + 1]
    denom = y0 - 2 * y1 + y2
    if denom <= 0:
        return float(grid[idx])
    shift = 0.5 * (y0 - y2) / denom
    step = grid[idx + 1] - grid[idx]
    return float(grid[idx] + shift * step)


def music_spectrum(z, n_sources: int, grid: np.ndarray) -> MusicResult:
    """MUSIC pseudospectrum of a (possibly estimated) smoothed matrix.

    The signal subspace is spanned by the n_sources dominant left singular
    vectors of z; the spectrum value at each grid angle is the squared
    residual of the virtual steering vector outside that subspace.  DoA
    estimates are the n_sources strict local minima with the smallest
    values, each refined by parabolic interpolation; boundary grid points
    are never minima.  If fewer minima exist the result is flagged
    incomplete and carries only the ones found.
    """
    matrix = z.matrix if isinstance(z, SmoothedMatrix) else np.asarray(z)
    n_virtual = matrix.shape[0]
    if n_sources >= n_virtual:
        raise ValueError("n_sources must be below the virtual array length")
    grid = np.asarray(grid, dtype=float)
    if n_sources == 0:
        basis = np.zeros((n_virtual, 0))
    else:
        u, _, _ = numerics.svd(matrix)
        basis = u[:, :n_sources]
    steering = virtual_steering(n_virtual, grid)
    residual = steering - basis @ (basis.conj().T @ steering)
    spectrum = np.sum(np.abs(residual) ** 2, axis=0)
    interior = np.arange(1, len(grid) - 1)
    is_min = (spectrum[interior] < spectrum[interior - 1]) & (
        spectrum[interior] < spectrum[interior + 1]
    )
    minima = interior[is_min]
    order = np.argsort(spectrum[minima])[:n_sources]
    chosen = minima[order]
    estimates = np.sort([_refine_parabolic(grid, spectrum, i) for i in chosen])
    return MusicResult(
        grid=grid,
        spectrum=spectrum,
        estimates=np.asarray(estimates, dtype=float),
        complete=len(chosen) == n_sources,
    )


def estimate_doas(z, n_sources: int, grid: np.ndarray) -> MusicResult:
    """DoA estimates padded to exactly n_sources angles.

    Runs :func:`music_spectrum` and, when fewer minima were found, pads the
    estimate list with the grid midpoint so downstream error metrics stay
    well defined; the incomplete flag is preserved.
    """
    result = music_spectrum(z, n_sources, grid)
    if len(result.estimates) == n_sources:
        return result
    grid = result.grid
    midpoint = float(grid[len(grid) // 2])
    padded = np.sort(
        np.concatenate([result.estimates, np.full(n_sources - len(result.estimates), midpoint)])
    )
    return MusicResult(
        grid=grid, spectrum=result.spectrum, estimates=padded, complete=False
    )
