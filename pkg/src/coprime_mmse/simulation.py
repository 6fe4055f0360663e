"""Snapshot generation and sample/nominal autocorrelation estimation.

Sources transmit independent circular complex Gaussian symbols; the
receiver observes their steering-vector mixtures plus white Gaussian
noise.  The nominal autocorrelation matrix is what a receiver with
unlimited snapshots would see; the sample estimate averages finitely many
snapshot outer products and is the input to all combining.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ArrayGeometry
from .numerics import vec

__all__ = [
    "SourceScene",
    "SnapshotBatch",
    "nominal_autocorrelation",
    "generate_snapshots",
    "sample_autocorrelation",
    "trial_rng",
    "save_snapshots",
    "load_snapshots",
]


@dataclass(frozen=True)
class SourceScene:
    """Ground truth of one simulation: DoAs, source powers, noise power."""

    thetas: np.ndarray
    powers: np.ndarray
    noise_power: float

    def __post_init__(self):
        thetas = np.atleast_1d(np.asarray(self.thetas, dtype=float))
        powers = np.atleast_1d(np.asarray(self.powers, dtype=float))
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "powers", powers)
        if len(thetas) != len(powers):
            raise ValueError("thetas and powers must have equal length")
        if len(powers) and np.any(powers <= 0):
            raise ValueError("source powers must be positive")
        # zero is admitted so noise-free identities can be exercised exactly
        if self.noise_power < 0:
            raise ValueError("noise power must be nonnegative")

    @property
    def n_sources(self) -> int:
        return len(self.thetas)

    def validate_for(self, geometry: ArrayGeometry):
        if self.n_sources >= geometry.n_virtual:
            raise ValueError(
                f"{self.n_sources} sources exceed the coarray capacity "
                f"{geometry.n_virtual - 1} of ({geometry.m}, {geometry.n})"
            )


@dataclass(frozen=True)
class SnapshotBatch:
    """Q received-signal snapshots stacked as the columns of y."""

    y: np.ndarray
    q: int
    seed: int | None = None

    def __post_init__(self):
        if self.q < 1 or self.y.shape[1] != self.q:
            raise ValueError("snapshot count must be >= 1 and match y")
        if not np.all(np.isfinite(self.y)):
            raise ValueError("snapshots must be finite")


def steering_matrix(geometry: ArrayGeometry, thetas: np.ndarray) -> np.ndarray:
    """Stack steering vectors for several DoAs as columns."""
    thetas = np.atleast_1d(thetas)
    return np.exp(
        -1j * np.pi * geometry.positions[:, None] * np.sin(thetas)[None, :]
    )


def nominal_autocorrelation(
    scene: SourceScene, geometry: ArrayGeometry
) -> tuple[np.ndarray, np.ndarray]:
    """Exact autocorrelation matrix and its column-major vectorization.

    Returns (R, r) with R = S diag(powers) S^H + noise_power * I, Hermitian
    positive semidefinite, and r = vec(R).
    """
    scene.validate_for(geometry)
    length = geometry.n_elements
    s = steering_matrix(geometry, scene.thetas)
    r_mat = (s * scene.powers[None, :]) @ s.conj().T + scene.noise_power * np.eye(length)
    return r_mat, vec(r_mat)


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Independent per-trial stream derived from (master seed, trial index).

    Streams are reproducible regardless of how trials are scheduled across
    workers.
    """
    return np.random.default_rng([master_seed, trial_index])


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_snapshots(
    scene: SourceScene, geometry: ArrayGeometry, q: int, seed
) -> SnapshotBatch:
    """Simulate q received-signal snapshots.

    Each snapshot is sum_k s(theta_k)*xi_k + noise with xi_k circular
    complex normal of variance powers[k] (independent real/imaginary parts
    of half variance each) and white circular complex Gaussian noise of the
    scene's noise power.  All draws are independent across snapshots and
    sources.  ``seed`` may be an integer or an existing Generator.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    scene.validate_for(geometry)
    rng = _as_rng(seed)
    length = geometry.n_elements
    k = scene.n_sources
    s = steering_matrix(geometry, scene.thetas)
    symbols = (rng.standard_normal((k, q)) + 1j * rng.standard_normal((k, q))) * np.sqrt(
        scene.powers / 2
    )[:, None]
    noise = (rng.standard_normal((length, q)) + 1j * rng.standard_normal((length, q))) * np.sqrt(
        scene.noise_power / 2
    )
    y = s @ symbols + noise
    return SnapshotBatch(y=y, q=q, seed=seed if isinstance(seed, int) else None)


def sample_autocorrelation(batch: SnapshotBatch) -> tuple[np.ndarray, np.ndarray]:
    """Sample-average autocorrelation estimate and its vectorization.

    Returns (R_hat, r_hat) with R_hat = (1/q) * y @ y^H (Hermitian PSD) and
    r_hat = vec(R_hat), which equals the snapshot average of
    kron(conj(y_q), y_q).
    """
    r_hat = batch.y @ batch.y.conj().T / batch.q
    return r_hat, vec(r_hat)


def save_snapshots(batch: SnapshotBatch, path):
    """Debug dump: rows = elements, columns = snapshots, entries "re,im"."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# snapshots q={batch.q} seed={batch.seed}\n")
        for row in batch.y:
            fh.write(" ".join(f"{float(z.real)!r},{float(z.imag)!r}" for z in row) + "\n")


def load_snapshots(path) -> SnapshotBatch:
    """Read a batch written by :func:`save_snapshots`."""
    seed = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("seed="):
                        seed = None if tok[5:] == "None" else int(tok[5:])
                continue
            pairs = [tok.split(",") for tok in line.split()]
            rows.append([float(re) + 1j * float(im) for re, im in pairs])
    y = np.array(rows, dtype=complex)
    return SnapshotBatch(y=y, q=y.shape[1], seed=seed)
