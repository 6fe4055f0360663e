"""MMSE combiner design and combiner application.

The minimum-MSE combiner minimizes, over random DoAs and snapshot noise,
the expected squared error between the combined sample autocorrelations
and the exact coarray autocorrelations.  Its normal equations involve two
expectation matrices that admit entry-wise closed forms in terms of the
prior's characteristic integral:

* the second moment of the nominal autocorrelation vector over the DoA
  prior (:func:`nominal_second_moment`), and
* the expected Gram matrix of the snapshot mixing factor
  (:func:`factor_gram_expectation`).

Their combination :func:`estimate_second_moment` is the second moment of
the *sample* autocorrelation vector, and the combiner columns solve one
small linear system per coarray lag (:func:`solve_mmse_combiner`).

Key identities (all verified by the test suite):

* the sample autocorrelation vector factorizes as ``r_hat = V @ w`` where
  ``V`` is the Kronecker square of the mixing matrix A (R = A A^H) and
  ``w`` is the vectorized sample second moment of standard circular
  normals,
* ``w`` has mean vec(I) and second moment vec(I)vec(I)^T + I/q.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import numerics
from .coarray import virtual_steering
from .distributions import characteristic_integral
from .geometry import ArrayGeometry, Combiner, index_lags
from .simulation import SourceScene, steering_matrix

__all__ = [
    "SingularMatrixError",
    "RankDeficiencyWarning",
    "PowerPrior",
    "MmseDesignInputs",
    "ExpectationMatrices",
    "mixing_matrix",
    "moment_transfer_matrix",
    "moment_transfer_matrix_entrywise",
    "factor_product_table",
    "sample_moment_stats",
    "nominal_second_moment",
    "expected_factor_products",
    "factor_gram_expectation",
    "estimate_second_moment",
    "solve_mmse_combiner",
    "design_mmse_combiner",
    "apply_combiner",
    "capon_power_estimates",
    "save_combiner",
    "load_combiner",
]


class SingularMatrixError(RuntimeError):
    """A matrix inversion failed even after regularization."""


class RankDeficiencyWarning(UserWarning):
    """The normal-equation matrix is rank deficient; minimum-norm solution used."""


@dataclass(frozen=True)
class PowerPrior:
    """Source and noise powers fed to the MMSE design.

    ``mode`` records where the numbers came from: exact knowledge
    ("known"), power ratios relative to the first source ("ratios"), or
    estimates produced by the Capon path ("estimated").  The designed
    combiner is invariant to a common scaling of all powers, so ratios
    produce the exact combiner.
    """

    mode: str
    powers: np.ndarray
    noise_power: float

    def __post_init__(self):
        powers = np.atleast_1d(np.asarray(self.powers, dtype=float))
        object.__setattr__(self, "powers", powers)
        if len(powers) and np.any(powers <= 0):
            raise ValueError("powers must be positive")
        if self.noise_power <= 0:
            raise ValueError("noise power must be positive")

    @classmethod
    def known(cls, powers, noise_power: float) -> "PowerPrior":
        return cls(mode="known", powers=powers, noise_power=noise_power)

    @classmethod
    def from_ratios(cls, power_ratios, noise_ratio: float) -> "PowerPrior":
        """Ratios d_k/d_1 for k >= 2 plus noise_power/d_1."""
        powers = np.concatenate([[1.0], np.atleast_1d(power_ratios)])
        return cls(mode="ratios", powers=powers, noise_power=noise_ratio)

    @classmethod
    def estimated(cls, powers, noise_power: float) -> "PowerPrior":
        return cls(mode="estimated", powers=powers, noise_power=noise_power)


@dataclass(frozen=True)
class MmseDesignInputs:
    """Everything the MMSE design needs.

    ``selection`` supplies the right-hand side of the normal equations; any
    valid selection combiner yields the same design target.
    """

    geometry: ArrayGeometry
    n_sources: int
    prior: object
    power: PowerPrior
    q: int
    selection: Combiner

    def __post_init__(self):
        if self.n_sources >= self.geometry.n_virtual:
            raise ValueError("n_sources must be below the coarray capacity")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if len(self.power.powers) != self.n_sources:
            raise ValueError("power prior length must equal n_sources")
        if self.selection.kind != "selection":
            raise ValueError("design target must be a selection combiner")


@dataclass(frozen=True)
class ExpectationMatrices:
    """The three design matrices; estimate = nominal + factor_gram / q."""

    nominal: np.ndarray
    factor_gram: np.ndarray
    estimate: np.ndarray


def mixing_matrix(scene: SourceScene, geometry: ArrayGeometry) -> np.ndarray:
    """Matrix A with R = A A^H and snapshots y = A x for white circular x.

    Columns are the power-scaled steering vectors followed by the scaled
    identity for the noise channels; shape (L, K + L).
    """
    s = steering_matrix(geometry, scene.thetas)
    return np.hstack(
        [
            s * np.sqrt(scene.powers)[None, :],
            np.sqrt(scene.noise_power) * np.eye(geometry.n_elements),
        ]
    )


def moment_transfer_matrix(scene: SourceScene, geometry: ArrayGeometry) -> np.ndarray:
    """Kronecker square kron(conj(A), A) mapping vec moments to vec(R).

    Satisfies r = V @ vec(I) and r_hat = V @ w for the vectorized sample
    second moment w of the whitened snapshots.
    """
    a = mixing_matrix(scene, geometry)
    return numerics.kron(a.conj(), a)


def _row_indices(geometry: ArrayGeometry):
    length = geometry.n_elements
    inner = np.tile(np.arange(length), length)   # row of the vec'd matrix entry
    outer = np.repeat(np.arange(length), length)  # column (conjugated side)
    return inner, outer


def moment_transfer_matrix_entrywise(
    scene: SourceScene, geometry: ArrayGeometry
) -> np.ndarray:
    """Entry-wise construction of the moment transfer matrix.

    Reproduces :func:`moment_transfer_matrix` case by case from the index
    arithmetic instead of an explicit Kronecker product; kept as a second
    route so the two constructions can cross-check each other.
    """
    length = geometry.n_elements
    k = scene.n_sources
    kl = k + length
    pos = geometry.positions
    inner, outer = _row_indices(geometry)
    p_inner = pos[inner]
    p_outer = pos[outer]
    col_inner = np.tile(np.arange(kl), kl)
    col_outer = np.repeat(np.arange(kl), kl)
    phase = np.exp(-1j * np.pi * np.sin(scene.thetas))
    sigma = np.sqrt(scene.noise_power)
    v = np.zeros((length * length, kl * kl), dtype=complex)
    for j in range(kl * kl):
        k1, k2 = col_outer[j], col_inner[j]  # conjugated / plain factor columns
        if k1 < k and k2 < k:
            v[:, j] = (
                np.sqrt(scene.powers[k1] * scene.powers[k2])
                * phase[k1] ** (-p_outer.astype(float))
                * phase[k2] ** (p_inner.astype(float))
            )
        elif k2 < k:
            rows = outer == (k1 - k)
            v[rows, j] = sigma * np.sqrt(scene.powers[k2]) * phase[k2] ** (
                p_inner[rows].astype(float)
            )
        elif k1 < k:
            rows = inner == (k2 - k)
            v[rows, j] = sigma * np.sqrt(scene.powers[k1]) * phase[k1] ** (
                -p_outer[rows].astype(float)
            )
        else:
            rows = (outer == (k1 - k)) & (inner == (k2 - k))
            v[rows, j] = scene.noise_power
    return v


def factor_product_table(scene: SourceScene, geometry: ArrayGeometry) -> np.ndarray:
    """Closed-form V[i, j] * conj(V[m, j]) for every (i, m, j), per scene.

    Each case of the entry-wise construction yields a product of powers and
    pure phase rotations at position differences, written out directly here
    rather than as a product of two entry lookups; pairing this with the
    Kronecker construction cross-checks both routes.
    """
    length = geometry.n_elements
    k = scene.n_sources
    kl = k + length
    pos = geometry.positions
    inner, outer = _row_indices(geometry)
    p_inner = pos[inner].astype(float)
    p_outer = pos[outer].astype(float)
    phase = np.exp(-1j * np.pi * np.sin(scene.thetas))
    d = scene.powers
    sigma2 = scene.noise_power
    diff_inner = p_inner[:, None] - p_inner[None, :]   # rows i, m
    diff_outer = p_outer[None, :] - p_outer[:, None]
    col_inner = np.tile(np.arange(kl), kl)
    col_outer = np.repeat(np.arange(kl), kl)
    n_sq = length * length
    out = np.zeros((n_sq, n_sq, kl * kl), dtype=complex)
    for j in range(kl * kl):
        k1, k2 = col_outer[j], col_inner[j]
        if k1 < k and k2 < k:
            out[:, :, j] = (
                d[k1] * d[k2] * phase[k1] ** diff_outer * phase[k2] ** diff_inner
            )
        elif k2 < k:
            rows = outer == (k1 - k)
            mask = np.outer(rows, rows)
            out[:, :, j] = np.where(mask, sigma2 * d[k2] * phase[k2] ** diff_inner, 0.0)
        elif k1 < k:
            rows = inner == (k2 - k)
            mask = np.outer(rows, rows)
            out[:, :, j] = np.where(mask, sigma2 * d[k1] * phase[k1] ** diff_outer, 0.0)
        else:
            idx = (k1 - k) * length + (k2 - k)
            out[idx, idx, j] = sigma2**2
    return out


def sample_moment_stats(n_sources: int, n_elements: int, q: int):
    """Mean and second moment of the vectorized whitened sample moment.

    For w = (1/q) * sum_q kron(conj(x_q), x_q) with x_q standard circular
    normal of dimension n_sources + n_elements: the mean is vec(I) and the
    second moment is vec(I) vec(I)^T + I/q.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    dim = n_sources + n_elements
    mean = numerics.vec(np.eye(dim))
    second = np.outer(mean, mean) + np.eye(dim * dim) / q
    return mean, second


def _integral_table(prior, values: np.ndarray) -> dict:
    """Characteristic integral evaluated at every distinct value."""
    return {v: characteristic_integral(prior, float(v)) for v in np.unique(values)}


def _lookup(table: dict, values: np.ndarray) -> np.ndarray:
    out = np.empty(values.shape, dtype=complex)
    for v, iv in table.items():
        out[values == v] = iv
    return out


def nominal_second_moment(inputs: MmseDesignInputs) -> np.ndarray:
    """Expected outer product of the nominal autocorrelation vector.

    Entry (i, m) combines the characteristic integral at the lag of index i,
    the lag of index m, and their difference with the total and squared
    source powers; it is Hermitian positive semidefinite by construction.
    """
    g = inputs.geometry
    lags = index_lags(g).astype(float)
    d = inputs.power.powers
    sigma2 = inputs.power.noise_power
    sum_d = d.sum()
    sq_d = float(d @ d)
    table = _integral_table(
        inputs.prior, np.concatenate([lags, (lags[:, None] - lags[None, :]).ravel()])
    )
    i_lag = _lookup(table, lags)
    i_diff = _lookup(table, lags[:, None] - lags[None, :])
    at_zero = (lags == 0).astype(float)
    return (
        sq_d * i_diff
        + sigma2**2 * np.outer(at_zero, at_zero)
        + (sum_d**2 - sq_d) * np.outer(i_lag, i_lag.conj())
        + sigma2 * sum_d * (np.outer(at_zero, i_lag.conj()) + np.outer(i_lag, at_zero))
    )


def expected_factor_products(inputs: MmseDesignInputs) -> np.ndarray:
    """Prior expectation of V[i, j] * conj(V[m, j]) for every (i, m, j).

    The product of two moment-transfer entries sharing a column j depends
    on which of the column's two factor indices address sources versus
    noise channels; each case reduces to powers times a characteristic
    integral of a position difference.  Summing over j gives
    :func:`factor_gram_expectation`.
    """
    g = inputs.geometry
    k = inputs.n_sources
    length = g.n_elements
    kl = k + length
    d = inputs.power.powers
    sigma2 = inputs.power.noise_power
    pos = g.positions
    inner, outer = _row_indices(g)
    p_inner = pos[inner]
    p_outer = pos[outer]

    # Position differences entering the expectations: conjugated factor sees
    # column-side positions, plain factor sees row-side positions.
    diff_inner = p_inner[:, None] - p_inner[None, :]   # rows i, m
    diff_outer = p_outer[None, :] - p_outer[:, None]
    table = _integral_table(
        inputs.prior,
        np.concatenate(
            [np.unique(diff_inner), np.unique(diff_outer), np.unique(diff_inner + diff_outer)]
        ),
    )
    i_inner = _lookup(table, diff_inner)
    i_outer = _lookup(table, diff_outer)
    i_both = _lookup(table, diff_inner + diff_outer)

    col_inner = np.tile(np.arange(kl), kl)
    col_outer = np.repeat(np.arange(kl), kl)
    n_sq = length * length
    out = np.zeros((n_sq, n_sq, kl * kl), dtype=complex)
    for j in range(kl * kl):
        k1, k2 = col_outer[j], col_inner[j]
        if k1 < k and k2 < k:
            if k1 == k2:
                out[:, :, j] = d[k1] ** 2 * i_both
            else:
                out[:, :, j] = d[k1] * d[k2] * i_outer * i_inner
        elif k2 < k:
            rows = outer == (k1 - k)
            mask = np.outer(rows, rows)
            out[:, :, j] = np.where(mask, sigma2 * d[k2] * i_inner, 0.0)
        elif k1 < k:
            rows = inner == (k2 - k)
            mask = np.outer(rows, rows)
            out[:, :, j] = np.where(mask, sigma2 * d[k1] * i_outer, 0.0)
        else:
            idx = (k1 - k) * length + (k2 - k)
            out[idx, idx, j] = sigma2**2
    return out


def factor_gram_expectation(inputs: MmseDesignInputs) -> np.ndarray:
    """Prior expectation of V @ V^H; Hermitian positive semidefinite."""
    return expected_factor_products(inputs).sum(axis=2)


def estimate_second_moment(
    nominal: np.ndarray, factor_gram: np.ndarray, q: int
) -> np.ndarray:
    """Second moment of the sample autocorrelation: nominal + factor_gram/q."""
    nominal = np.asarray(nominal)
    factor_gram = np.asarray(factor_gram)
    if nominal.shape != factor_gram.shape:
        raise ValueError(
            f"shape mismatch: {nominal.shape} vs {factor_gram.shape}"
        )
    if q < 1:
        raise ValueError("q must be >= 1")
    return nominal + factor_gram / q


def build_expectation_matrices(inputs: MmseDesignInputs) -> ExpectationMatrices:
    """All three design matrices for one (geometry, prior, powers, q)."""
    nominal = nominal_second_moment(inputs)
    gram = factor_gram_expectation(inputs)
    return ExpectationMatrices(
        nominal=nominal,
        factor_gram=gram,
        estimate=estimate_second_moment(nominal, gram, inputs.q),
    )


def solve_mmse_combiner(
    estimate_moment: np.ndarray,
    nominal_moment: np.ndarray,
    selection: Combiner,
    rank_tol: float = 1e-10,
) -> Combiner:
    """Solve the normal equations for the MMSE combiner, column by column.

    Each column solves estimate_moment @ e = c with c the matching column
    of nominal_moment @ selection.matrix, via a rank-revealing SVD and the
    minimum-norm least-squares solution (the free nullspace component is
    set to zero).  Never fails: if the system is rank deficient a
    RankDeficiencyWarning is issued and the least-squares solution is
    returned; per-column residuals are recorded on the result.
    """
    rhs = nominal_moment @ selection.matrix
    u, s, vh = numerics.svd(estimate_moment)
    rank = int(np.count_nonzero(s > rank_tol * s[0])) if s.size and s[0] > 0 else 0
    if rank < estimate_moment.shape[0]:
        warnings.warn(
            f"normal-equation matrix rank {rank} < {estimate_moment.shape[0]}",
            RankDeficiencyWarning,
        )
    coeff = vh[:rank].conj().T @ ((u[:, :rank].conj().T @ rhs) / s[:rank, None])
    residuals = np.linalg.norm(estimate_moment @ coeff - rhs, axis=0)
    return Combiner(matrix=coeff, kind="mmse", residuals=residuals)


def design_mmse_combiner(
    inputs: MmseDesignInputs, rank_tol: float = 1e-10
) -> Combiner:
    """Build the expectation matrices and solve for the MMSE combiner."""
    mats = build_expectation_matrices(inputs)
    return solve_mmse_combiner(mats.estimate, mats.nominal, inputs.selection, rank_tol)


def apply_combiner(combiner: Combiner, r_hat: np.ndarray) -> np.ndarray:
    """Combine a vectorized autocorrelation estimate into coarray lags.

    Selection and averaging apply the plain transpose; the MMSE combiner
    applies the adjoint, matching the objective its columns were solved
    for.  ``r_hat`` may be a vector or a (L^2, batch) stack.
    """
    r_hat = np.asarray(r_hat)
    if r_hat.shape[0] != combiner.matrix.shape[0]:
        raise ValueError(
            f"shape mismatch: combiner expects {combiner.matrix.shape[0]} rows, "
            f"got {r_hat.shape[0]}"
        )
    if combiner.kind == "mmse":
        return combiner.matrix.conj().T @ r_hat
    return combiner.matrix.T @ r_hat


def capon_power_estimates(
    z_avg: np.ndarray,
    doas: np.ndarray,
    geometry: ArrayGeometry,
    noise_power_mode: str = "singular_value",
    cond_limit: float = 1e12,
    ridge: float = 1e-8,
    power_floor: float = 1e-12,
) -> PowerPrior:
    """Capon (MVDR) source-power estimates plus a noise-power estimate.

    Each source power is the inverse of v^H Z^{-1} v at its estimated
    direction, with v the virtual-ULA steering vector.  If the smoothed
    matrix is ill conditioned a small ridge proportional to the average
    diagonal power is added before inversion.  The noise power defaults to
    the smallest singular value of the smoothed matrix;
    ``noise_power_mode="eigenvalue"`` instead uses the smallest eigenvalue
    of its Hermitian part.
    """
    z = np.asarray(z_avg)
    n_virtual = z.shape[0]
    if np.linalg.cond(z) > cond_limit:
        z = z + ridge * np.trace(z).real / n_virtual * np.eye(n_virtual)
    try:
        z_inv = np.linalg.inv(z)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc
    doas = np.atleast_1d(doas)
    powers = np.empty(len(doas))
    for k, theta in enumerate(doas):
        v = virtual_steering(n_virtual, theta)
        denom = float(np.real(v.conj() @ z_inv @ v))
        if denom <= 0:
            powers[k] = power_floor
        else:
            powers[k] = max(1.0 / denom, power_floor)
    if noise_power_mode == "singular_value":
        noise = float(np.linalg.svd(np.asarray(z_avg), compute_uv=False)[-1])
    elif noise_power_mode == "eigenvalue":
        herm = (np.asarray(z_avg) + np.asarray(z_avg).conj().T) / 2
        noise = float(np.linalg.eigvalsh(herm)[0])
    else:
        raise ValueError(f"unknown noise_power_mode {noise_power_mode!r}")
    noise = max(noise, power_floor)
    return PowerPrior.estimated(powers, noise)


def save_combiner(combiner: Combiner, path):
    """Write a combiner as a text matrix (rows = L^2, entries "re+imj")."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# combiner kind={combiner.kind} shape={combiner.matrix.shape[0]}x{combiner.matrix.shape[1]}\n")
        if combiner.picked_indices is not None:
            fh.write("# picked=" + ",".join(str(int(i)) for i in combiner.picked_indices) + "\n")
        for row in combiner.matrix:
            fh.write(" ".join(f"{z.real:.17e}{z.imag:+.17e}j" for z in row) + "\n")


def load_combiner(path) -> Combiner:
    """Read a combiner written by :func:`save_combiner`."""
    kind = None
    picked = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("kind="):
                        kind = tok[5:]
                    elif tok.startswith("picked="):
                        picked = np.array([int(x) for x in tok[7:].split(",")])
                continue
            rows.append([complex(tok) for tok in line.split()])
    if kind is None:
        raise ValueError(f"{path} is not a combiner file")
    return Combiner(matrix=np.array(rows, dtype=complex), kind=kind, picked_indices=picked)
