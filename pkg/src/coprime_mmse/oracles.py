"""Closed-form MSE expressions for combining and their empirical validators.

For a fixed scene, every entry of the sample autocorrelation vector has
the same per-entry MSE ``(total_power + noise)^2 / q``; stacking lags and
sliding smoothing windows multiplies that by constants.  Averaging within
a lag set suppresses the noise-dependent part of the error by the set
cardinality, with a residual cross term that depends on the scene through
phase-aligned power sums.  The empirical estimators here replay the exact
same statistics by seeded simulation so every formula can be validated at
a stated confidence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coarray import spatial_smooth
from .combining import apply_combiner
from .geometry import (
    ArrayGeometry,
    Combiner,
    LagIndexMap,
    averaging_combiner,
    coarray_lag_sets,
    selection_combiner,
)
from .simulation import (
    SourceScene,
    generate_snapshots,
    nominal_autocorrelation,
    sample_autocorrelation,
    trial_rng,
)

__all__ = [
    "LagOutOfRangeError",
    "MseEstimate",
    "MseReport",
    "mse_entry_selection",
    "mse_vector_selection",
    "mse_matrix_selection",
    "mse_entry_averaging",
    "mse_vector_averaging",
    "mse_matrix_averaging",
    "averaging_gain_lower_bound",
    "closed_form_report",
    "empirical_mse",
    "empirical_mse_suite",
]


class LagOutOfRangeError(ValueError):
    """Requested lag lies outside the coarray range."""


@dataclass(frozen=True)
class MseEstimate:
    """Monte-Carlo mean squared error with its standard error."""

    mean: float
    stderr: float
    trials: int


@dataclass(frozen=True)
class MseReport:
    """Closed-form MSE summary for one scene and sample support."""

    entry: float
    per_lag: dict[int, float]
    vector_selection: float
    vector_averaging: float
    matrix_selection: float
    matrix_averaging: float
    gain_bounds: dict[int, float]


def _total_power(scene: SourceScene) -> float:
    return float(scene.powers.sum())


def mse_entry_selection(scene: SourceScene, q: int) -> float:
    """Per-entry MSE of the sample autocorrelation: (sum d + noise)^2 / q.

    Identical for every entry, hence for whichever index selection keeps.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    return (_total_power(scene) + scene.noise_power) ** 2 / q


def mse_vector_selection(scene: SourceScene, geometry: ArrayGeometry, q: int) -> float:
    """MSE of the selection-combined coarray vector: (2*n_virtual - 1) entries."""
    return (2 * geometry.n_virtual - 1) * mse_entry_selection(scene, q)


def mse_matrix_selection(scene: SourceScene, geometry: ArrayGeometry, q: int) -> float:
    """Frobenius MSE of the selection-based smoothed matrix: n_virtual^2 entries."""
    return geometry.n_virtual**2 * mse_entry_selection(scene, q)


def _phase_power_sums(scene: SourceScene, geometry: ArrayGeometry, indices: np.ndarray):
    """|sum_k v(theta_k)^diff * d_k|^2 over all index pairs in one lag set.

    ``diff`` is the column-position difference of the two entries; within a
    lag set it equals the row-position difference, so either side works.
    """
    pos = geometry.positions
    length = geometry.n_elements
    col_pos = pos[indices // length]
    diffs = col_pos[:, None] - col_pos[None, :]
    phase = np.exp(-1j * np.pi * np.sin(scene.thetas))
    aligned = (phase[None, None, :] ** diffs[:, :, None].astype(float)) @ scene.powers
    return np.abs(aligned) ** 2


def mse_entry_averaging(
    scene: SourceScene,
    geometry: ArrayGeometry,
    lag: int,
    q: int,
    lag_map: LagIndexMap | None = None,
) -> float:
    """Per-lag MSE of the averaged autocorrelation estimate.

    Averaging a lag set of cardinality c divides the noise-driven error by
    c and replaces the signal-driven term by the average of the
    phase-aligned power sums over all ordered index pairs of the set.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    if lag_map is None:
        lag_map = coarray_lag_sets(geometry)
    if lag not in lag_map.sets:
        raise LagOutOfRangeError(f"lag {lag} outside +/-{lag_map.n_virtual - 1}")
    indices = lag_map.sets[lag]
    card = len(indices)
    noise = scene.noise_power
    noise_part = (2 * noise * _total_power(scene) + noise**2) / card
    signal_part = _phase_power_sums(scene, geometry, indices).sum() / card**2
    return (noise_part + signal_part) / q


def mse_vector_averaging(
    scene: SourceScene,
    geometry: ArrayGeometry,
    q: int,
    lag_map: LagIndexMap | None = None,
) -> float:
    """MSE of the averaging-combined coarray vector: sum of the per-lag MSEs."""
    if lag_map is None:
        lag_map = coarray_lag_sets(geometry)
    return sum(
        mse_entry_averaging(scene, geometry, lag, q, lag_map) for lag in lag_map.sets
    )


def mse_matrix_averaging(
    scene: SourceScene,
    geometry: ArrayGeometry,
    q: int,
    lag_map: LagIndexMap | None = None,
) -> float:
    """Frobenius MSE of the averaging-based smoothed matrix.

    Each lag appears in as many smoothing windows as the virtual array
    leaves room for, so the per-lag MSEs enter with those multiplicities.
    """
    if lag_map is None:
        lag_map = coarray_lag_sets(geometry)
    n_virtual = geometry.n_virtual
    per_lag = {
        lag: mse_entry_averaging(scene, geometry, lag, q, lag_map)
        for lag in lag_map.sets
    }
    total = 0.0
    for window in range(1, n_virtual + 1):
        for lag in range(1 - window, n_virtual - window + 1):
            total += per_lag[lag]
    return total


def averaging_gain_lower_bound(
    scene: SourceScene,
    geometry: ArrayGeometry,
    lag: int,
    q: int,
    lag_map: LagIndexMap | None = None,
) -> float:
    """Guaranteed per-lag MSE gain of averaging over selection.

    Equals (c-1)/(c*q) times the noise-driven error mass for a lag set of
    cardinality c; zero when the set is a singleton.  The per-entry MSE
    minus the per-lag averaging MSE is never below this bound.
    """
    if lag_map is None:
        lag_map = coarray_lag_sets(geometry)
    if lag not in lag_map.sets:
        raise LagOutOfRangeError(f"lag {lag} outside +/-{lag_map.n_virtual - 1}")
    card = len(lag_map.sets[lag])
    noise = scene.noise_power
    return (card - 1) / (card * q) * (2 * noise * _total_power(scene) + noise**2)


def closed_form_report(
    scene: SourceScene, geometry: ArrayGeometry, q: int
) -> MseReport:
    """Every closed-form MSE value for one scene in a single bundle."""
    lag_map = coarray_lag_sets(geometry)
    per_lag = {
        lag: mse_entry_averaging(scene, geometry, lag, q, lag_map)
        for lag in lag_map.sets
    }
    bounds = {
        lag: averaging_gain_lower_bound(scene, geometry, lag, q, lag_map)
        for lag in lag_map.sets
    }
    return MseReport(
        entry=mse_entry_selection(scene, q),
        per_lag=per_lag,
        vector_selection=mse_vector_selection(scene, geometry, q),
        vector_averaging=sum(per_lag.values()),
        matrix_selection=mse_matrix_selection(scene, geometry, q),
        matrix_averaging=mse_matrix_averaging(scene, geometry, q, lag_map),
        gain_bounds=bounds,
    )


# ---------------------------------------------------------------------------
# Empirical counterparts.
# ---------------------------------------------------------------------------

_LEVELS = ("entry", "vector", "matrix")
_KINDS = ("selection", "averaging", "mmse")


def _squared_errors(
    level: str,
    combiner: Combiner,
    scene: SourceScene,
    geometry: ArrayGeometry,
    q: int,
    trials: int,
    seed: int,
    lag: int,
    chunk: int = 2048,
) -> np.ndarray:
    """Per-trial squared errors of the combined estimate at one level."""
    _, r = nominal_autocorrelation(scene, geometry)
    r_co = apply_combiner(selection_combiner(coarray_lag_sets(geometry)), r)
    n_virtual = geometry.n_virtual
    z = spatial_smooth(r_co).matrix
    lag_col = lag + n_virtual - 1
    errors = np.empty(trials)
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        r_hats = np.empty((geometry.n_elements**2, size), dtype=complex)
        for t in range(size):
            batch = generate_snapshots(scene, geometry, q, trial_rng(seed, done + t))
            _, r_hats[:, t] = sample_autocorrelation(batch)
        combined = apply_combiner(combiner, r_hats)
        diff = combined - r_co[:, None]
        if level == "entry":
            errors[done : done + size] = np.abs(diff[lag_col]) ** 2
        elif level == "vector":
            errors[done : done + size] = np.sum(np.abs(diff) ** 2, axis=0)
        else:  # matrix
            idx = (n_virtual - 1) + np.subtract.outer(
                np.arange(n_virtual), np.arange(n_virtual)
            )
            z_hats = combined[idx, :]
            errors[done : done + size] = np.sum(
                np.abs(z_hats - z[:, :, None]) ** 2, axis=(0, 1)
            )
        done += size
    return errors


def empirical_mse(
    target: str,
    scene: SourceScene,
    geometry: ArrayGeometry,
    q: int,
    trials: int,
    seed: int,
    combiner: Combiner | None = None,
    lag: int = 0,
) -> MseEstimate:
    """Monte-Carlo MSE of one combining target.

    ``target`` is "<level>_<kind>" with level in {entry, vector, matrix}
    and kind in {selection, averaging, mmse}; an "mmse" target requires the
    designed combiner to be passed in.  Entry-level targets measure the
    squared error at one coarray lag of the combined vector.  Trials use
    independent per-(seed, index) streams, so results do not depend on
    scheduling.
    """
    if trials < 2:
        raise ValueError("trials must be >= 2")
    level, _, kind = target.partition("_")
    if level not in _LEVELS or kind not in _KINDS:
        raise ValueError(f"unknown target {target!r}")
    if kind == "mmse":
        if combiner is None or combiner.kind != "mmse":
            raise ValueError("mmse targets need a designed combiner")
    elif combiner is None:
        lag_map = coarray_lag_sets(geometry)
        combiner = (
            selection_combiner(lag_map) if kind == "selection" else averaging_combiner(lag_map)
        )
    errors = _squared_errors(level, combiner, scene, geometry, q, trials, seed, lag)
    return MseEstimate(
        mean=float(errors.mean()),
        stderr=float(errors.std(ddof=1) / np.sqrt(trials)),
        trials=trials,
    )


def empirical_mse_suite(
    scene: SourceScene,
    geometry: ArrayGeometry,
    q: int,
    trials: int,
    seed: int,
) -> dict[str, MseEstimate]:
    """Empirical MSE for every selection/averaging target in one pass.

    Shares the simulated trials across targets: one snapshot stream per
    trial feeds the entry (at every lag), vector, and matrix estimators of
    both classic combiners.  Keys: "entry_selection@<lag>",
    "entry_averaging@<lag>", "vector_*", "matrix_*".
    """
    if trials < 2:
        raise ValueError("trials must be >= 2")
    lag_map = coarray_lag_sets(geometry)
    sel = selection_combiner(lag_map)
    avg = averaging_combiner(lag_map)
    _, r = nominal_autocorrelation(scene, geometry)
    r_co = apply_combiner(sel, r)
    n_virtual = geometry.n_virtual
    lags = np.arange(1 - n_virtual, n_virtual)
    z = spatial_smooth(r_co).matrix

    sums = {}
    sq_sums = {}
    names = []
    for kind in ("selection", "averaging"):
        names += [f"entry_{kind}@{lag}" for lag in lags]
        names += [f"vector_{kind}", f"matrix_{kind}"]
    for name in names:
        sums[name] = 0.0
        sq_sums[name] = 0.0

    chunk = 2048
    done = 0
    idx = (n_virtual - 1) + np.subtract.outer(np.arange(n_virtual), np.arange(n_virtual))
    while done < trials:
        size = min(chunk, trials - done)
        r_hats = np.empty((geometry.n_elements**2, size), dtype=complex)
        for t in range(size):
            batch = generate_snapshots(scene, geometry, q, trial_rng(seed, done + t))
            _, r_hats[:, t] = sample_autocorrelation(batch)
        for kind, comb in (("selection", sel), ("averaging", avg)):
            combined = apply_combiner(comb, r_hats)
            diff = combined - r_co[:, None]
            entry_sq = np.abs(diff) ** 2
            for i, lag in enumerate(lags):
                name = f"entry_{kind}@{lag}"
                sums[name] += entry_sq[i].sum()
                sq_sums[name] += (entry_sq[i] ** 2).sum()
            vec_sq = entry_sq.sum(axis=0)
            sums[f"vector_{kind}"] += vec_sq.sum()
            sq_sums[f"vector_{kind}"] += (vec_sq**2).sum()
            z_hats = combined[idx, :]
            mat_sq = np.sum(np.abs(z_hats - z[:, :, None]) ** 2, axis=(0, 1))
            sums[f"matrix_{kind}"] += mat_sq.sum()
            sq_sums[f"matrix_{kind}"] += (mat_sq**2).sum()
        done += size

    out = {}
    for name in names:
        mean = sums[name] / trials
        var = max(sq_sums[name] / trials - mean**2, 0.0) * trials / (trials - 1)
        out[name] = MseEstimate(
            mean=float(mean), stderr=float(np.sqrt(var / trials)), trials=trials
        )
    return out
