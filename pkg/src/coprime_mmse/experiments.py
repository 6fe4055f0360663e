"""Monte-Carlo experiment runners with deterministic CSV emission.

Each runner draws one random scene per trial (DoAs from the configured
prior, equal source powers set by the SNR), simulates snapshots, applies
every configured combiner, and records estimation errors.  Output is a
UTF-8 CSV with a '#'-prefixed metadata header carrying the config hash,
seed, and the DoA pairing convention; a given (config, seed) pair always
produces byte-identical output.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .coarray import estimate_doas, music_spectrum, spatial_smooth
from .combining import (
    MmseDesignInputs,
    PowerPrior,
    apply_combiner,
    capon_power_estimates,
    design_mmse_combiner,
)
from .distributions import prior_from_config
from .geometry import (
    averaging_combiner,
    coarray_lag_sets,
    make_coprime_array,
    selection_combiner,
)
from .oracles import (
    closed_form_report,
    empirical_mse_suite,
    mse_matrix_selection,
)
from .simulation import (
    SourceScene,
    generate_snapshots,
    nominal_autocorrelation,
    sample_autocorrelation,
    trial_rng,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "config_from_dict",
    "run_cdf_experiment",
    "run_nmse_vs_q",
    "run_rmse_vs_q",
    "run_oracle_check",
    "run_spectrum",
    "run_experiment",
    "bootstrap_mean_diff",
    "EXPERIMENT_KINDS",
]

PAIRING_CONVENTION = "sorted-ascending-positional"
COMBINER_KINDS = ("selection", "averaging", "mmse")
POWER_MODES = ("oracle", "ratios", "estimated")
EXPERIMENT_KINDS = ("cdf", "nmse-vs-q", "rmse-vs-q", "oracle-check", "spectrum")

_DEFAULT_PRIOR = {"kind": "uniform", "a": -np.pi / 2, "b": np.pi / 2}


class ConfigError(ValueError):
    """An experiment config field is missing or invalid."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"config field {field_name!r}: {message}")
        self.field_name = field_name


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment parameters.

    Defaults mirror the standard evaluation setup: equal source powers at
    10 dB SNR over a 0 dB noise floor, 500 trials (desk scale), oracle
    powers for the MMSE design, and a 2001-point search grid over the
    prior support.
    """

    m: int = 2
    n: int = 3
    k: int = 5
    snr_db: float = 10.0
    sigma2_db: float = 0.0
    q: int = 10
    q_list: tuple[int, ...] = (1, 10, 100, 1000, 10000)
    trials: int = 500
    prior: dict = field(default_factory=lambda: dict(_DEFAULT_PRIOR))
    combiners: tuple[str, ...] = ("selection", "averaging", "mmse")
    power_mode: str = "oracle"
    grid_points: int = 2001
    seed: int = 20240901
    out: str | None = None

    @property
    def noise_power(self) -> float:
        return 10.0 ** (self.sigma2_db / 10.0)

    @property
    def source_power(self) -> float:
        return 10.0 ** ((self.snr_db + self.sigma2_db) / 10.0)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "k": self.k,
            "snr_db": self.snr_db,
            "sigma2_db": self.sigma2_db,
            "q": self.q,
            "q_list": list(self.q_list),
            "trials": self.trials,
            "prior": dict(self.prior),
            "combiners": list(self.combiners),
            "power_mode": self.power_mode,
            "grid_points": self.grid_points,
            "seed": self.seed,
        }

    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def config_from_dict(data: dict) -> ExperimentConfig:
    """Validate a plain dict (e.g. parsed JSON) into an ExperimentConfig."""
    cfg = ExperimentConfig()
    known = set(cfg.to_dict()) | {"out"}
    for key in data:
        if key not in known:
            raise ConfigError(key, "unknown field")
    kwargs = {}
    for key, value in data.items():
        if value is None:
            continue
        if key in ("m", "n", "k", "q", "trials", "grid_points", "seed"):
            try:
                kwargs[key] = int(value)
            except (TypeError, ValueError):
                raise ConfigError(key, f"expected an integer, got {value!r}") from None
        elif key in ("snr_db", "sigma2_db"):
            try:
                kwargs[key] = float(value)
            except (TypeError, ValueError):
                raise ConfigError(key, f"expected a number, got {value!r}") from None
        elif key == "q_list":
            try:
                kwargs[key] = tuple(int(v) for v in value)
            except (TypeError, ValueError):
                raise ConfigError(key, f"expected a list of integers, got {value!r}") from None
        elif key == "combiners":
            kinds = tuple(value)
            for kind in kinds:
                if kind not in COMBINER_KINDS:
                    raise ConfigError(key, f"unknown combiner {kind!r}")
            kwargs[key] = kinds
        elif key == "prior":
            if not isinstance(value, dict) or "kind" not in value:
                raise ConfigError(key, "expected a dict with a 'kind' field")
            kwargs[key] = dict(value)
        elif key == "power_mode":
            if value not in POWER_MODES:
                raise ConfigError(key, f"expected one of {POWER_MODES}, got {value!r}")
            kwargs[key] = value
        elif key == "out":
            kwargs[key] = str(value)
    cfg = replace(cfg, **kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    if cfg.m < 1 or cfg.n < 1:
        raise ConfigError("m/n", "must be positive")
    try:
        geometry = make_coprime_array(cfg.m, cfg.n)
    except ValueError as exc:
        raise ConfigError("m/n", str(exc)) from None
    if not (0 < cfg.k < geometry.n_virtual):
        raise ConfigError("k", f"must be in 1..{geometry.n_virtual - 1}")
    if cfg.q < 1:
        raise ConfigError("q", "must be >= 1")
    if any(q < 1 for q in cfg.q_list) or not cfg.q_list:
        raise ConfigError("q_list", "must be nonempty positive integers")
    if cfg.trials < 1:
        raise ConfigError("trials", "must be >= 1")
    if cfg.grid_points < 3:
        raise ConfigError("grid_points", "must be >= 3")
    try:
        prior_from_config(cfg.prior)
    except (ValueError, KeyError) as exc:
        raise ConfigError("prior", str(exc)) from None
    if not cfg.combiners:
        raise ConfigError("combiners", "must list at least one combiner")


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config file; overrides (e.g. CLI flags) win over the file."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError("<file>", "top level must be an object")
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# Shared per-run machinery.
# ---------------------------------------------------------------------------


@dataclass
class _Bench:
    """Everything derived from a config that trials share."""

    cfg: ExperimentConfig
    geometry: object
    lag_map: object
    prior: object
    combiners: dict
    grid: np.ndarray


def _design_bench(cfg: ExperimentConfig) -> _Bench:
    geometry = make_coprime_array(cfg.m, cfg.n)
    lag_map = coarray_lag_sets(geometry)
    prior = prior_from_config(cfg.prior)
    a, b = prior.support
    grid = np.linspace(a, b, cfg.grid_points)
    combiners = {}
    sel = selection_combiner(lag_map)
    for kind in cfg.combiners:
        if kind == "selection":
            combiners[kind] = sel
        elif kind == "averaging":
            combiners[kind] = averaging_combiner(lag_map)
        else:
            combiners[kind] = None  # resolved per power mode below / per trial
    if "mmse" in combiners and cfg.power_mode != "estimated":
        combiners["mmse"] = _design_mmse(cfg, geometry, prior, sel, cfg.q)
    return _Bench(
        cfg=cfg, geometry=geometry, lag_map=lag_map, prior=prior,
        combiners=combiners, grid=grid,
    )


def _design_mmse(cfg, geometry, prior, sel, q, power=None):
    if power is None:
        if cfg.power_mode == "ratios":
            ratios = np.ones(cfg.k - 1) if cfg.k > 1 else np.empty(0)
            power = PowerPrior.from_ratios(ratios, cfg.noise_power / cfg.source_power)
        else:
            power = PowerPrior.known(
                np.full(cfg.k, cfg.source_power), cfg.noise_power
            )
    inputs = MmseDesignInputs(
        geometry=geometry, n_sources=cfg.k, prior=prior, power=power,
        q=q, selection=sel,
    )
    return design_mmse_combiner(inputs)


def _trial_scene(cfg: ExperimentConfig, prior, rng) -> SourceScene:
    thetas = prior.sample(cfg.k, rng)
    return SourceScene(
        thetas=thetas,
        powers=np.full(cfg.k, cfg.source_power),
        noise_power=cfg.noise_power,
    )


def _mmse_for_trial(bench: _Bench, q: int, r_hat: np.ndarray):
    """Per-trial MMSE design from Capon-estimated powers."""
    cfg = bench.cfg
    avg = bench.combiners.get("averaging") or averaging_combiner(bench.lag_map)
    z_avg = spatial_smooth(apply_combiner(avg, r_hat), source="averaging")
    doas = estimate_doas(z_avg, cfg.k, bench.grid).estimates
    power = capon_power_estimates(z_avg.matrix, doas, bench.geometry)
    sel = bench.combiners.get("selection") or selection_combiner(bench.lag_map)
    return _design_mmse(cfg, bench.geometry, bench.prior, sel, q, power=power)


def _trial_z_errors(bench: _Bench, q: int, trial: int):
    """One trial: per-combiner Frobenius NMSE of the smoothed-matrix estimate."""
    cfg = bench.cfg
    rng = trial_rng(cfg.seed, trial)
    scene = _trial_scene(cfg, bench.prior, rng)
    _, r = nominal_autocorrelation(scene, bench.geometry)
    sel = bench.combiners.get("selection") or selection_combiner(bench.lag_map)
    z = spatial_smooth(apply_combiner(sel, r)).matrix
    z_norm = float(np.sum(np.abs(z) ** 2))
    batch = generate_snapshots(scene, bench.geometry, q, rng)
    _, r_hat = sample_autocorrelation(batch)
    out = {}
    for kind in cfg.combiners:
        comb = bench.combiners[kind]
        if kind == "mmse" and comb is None:
            comb = _mmse_for_trial(bench, q, r_hat)
        z_hat = spatial_smooth(apply_combiner(comb, r_hat)).matrix
        out[kind] = float(np.sum(np.abs(z - z_hat) ** 2)) / z_norm
    return out, scene, z_norm


# ---------------------------------------------------------------------------
# CSV plumbing.
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _render_csv(cfg: ExperimentConfig, kind: str, columns, rows, extra_meta=()) -> str:
    buf = io.StringIO()
    buf.write(f"# experiment={kind}\n")
    buf.write(f"# config_hash={cfg.hash()}\n")
    buf.write(f"# seed={cfg.seed}\n")
    buf.write(f"# pairing={PAIRING_CONVENTION}\n")
    buf.write(f"# power_mode={cfg.power_mode}\n")
    for line in extra_meta:
        buf.write(f"# {line}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Runners.
# ---------------------------------------------------------------------------


def run_cdf_experiment(cfg: ExperimentConfig) -> str:
    """Empirical CDF of the smoothed-matrix NMSE at fixed sample support.

    One NMSE measurement per (trial, combiner); rows are sorted by combiner
    (config order) and ascending NMSE with the empirical CDF alongside.
    """
    bench = _design_bench(cfg)
    values = {kind: [] for kind in cfg.combiners}
    for trial in range(cfg.trials):
        errors, _, _ = _trial_z_errors(bench, cfg.q, trial)
        for kind, err in errors.items():
            values[kind].append(err)
    rows = []
    for kind in cfg.combiners:
        ordered = np.sort(np.asarray(values[kind]))
        for rank, value in enumerate(ordered, start=1):
            rows.append((kind, float(value), rank / len(ordered)))
    return _render_csv(cfg, "cdf", ("combiner", "nmse", "cdf"), rows, (f"q={cfg.q}",))


def run_nmse_vs_q(cfg: ExperimentConfig) -> str:
    """Mean smoothed-matrix NMSE per combiner across the sample-support list.

    The selection combiner's closed-form prediction, normalized per trial
    by the trial's matrix norm and averaged, is included as an oracle
    overlay column.
    """
    bench = _design_bench(cfg)
    rows = []
    for q in cfg.q_list:
        if "mmse" in cfg.combiners and cfg.power_mode != "estimated":
            bench.combiners["mmse"] = _design_mmse(
                cfg, bench.geometry, bench.prior,
                bench.combiners.get("selection") or selection_combiner(bench.lag_map), q,
            )
        sums = {kind: 0.0 for kind in cfg.combiners}
        sq_sums = {kind: 0.0 for kind in cfg.combiners}
        oracle_sum = 0.0
        for trial in range(cfg.trials):
            errors, scene, z_norm = _trial_z_errors(bench, q, trial)
            for kind, err in errors.items():
                sums[kind] += err
                sq_sums[kind] += err * err
            oracle_sum += mse_matrix_selection(scene, bench.geometry, q) / z_norm
        oracle = oracle_sum / cfg.trials
        for kind in cfg.combiners:
            mean = sums[kind] / cfg.trials
            var = max(sq_sums[kind] / cfg.trials - mean**2, 0.0)
            stderr = float(np.sqrt(var / max(cfg.trials - 1, 1)))
            rows.append((q, kind, mean, stderr, oracle))
    return _render_csv(
        cfg,
        "nmse-vs-q",
        ("q", "combiner", "mean_nmse", "stderr_nmse", "oracle_selection_nmse"),
        rows,
    )


def run_rmse_vs_q(cfg: ExperimentConfig) -> str:
    """DoA RMSE in degrees per combiner across the sample-support list.

    Per trial the MUSIC estimates of each combiner's smoothed matrix are
    paired with the true DoAs by ascending sort; trials where MUSIC finds
    fewer minima than sources are padded and counted in the flagged column.
    """
    bench = _design_bench(cfg)
    rows = []
    for q in cfg.q_list:
        if "mmse" in cfg.combiners and cfg.power_mode != "estimated":
            bench.combiners["mmse"] = _design_mmse(
                cfg, bench.geometry, bench.prior,
                bench.combiners.get("selection") or selection_combiner(bench.lag_map), q,
            )
        sq_err = {kind: 0.0 for kind in cfg.combiners}
        flagged = {kind: 0 for kind in cfg.combiners}
        for trial in range(cfg.trials):
            rng = trial_rng(cfg.seed, trial)
            scene = _trial_scene(cfg, bench.prior, rng)
            truth = np.sort(scene.thetas)
            batch = generate_snapshots(scene, bench.geometry, q, rng)
            _, r_hat = sample_autocorrelation(batch)
            for kind in cfg.combiners:
                comb = bench.combiners[kind]
                if kind == "mmse" and comb is None:
                    comb = _mmse_for_trial(bench, q, r_hat)
                z_hat = spatial_smooth(apply_combiner(comb, r_hat), source=kind)
                result = estimate_doas(z_hat, cfg.k, bench.grid)
                if not result.complete:
                    flagged[kind] += 1
                sq_err[kind] += float(np.mean((np.sort(result.estimates) - truth) ** 2))
        for kind in cfg.combiners:
            rmse_rad = float(np.sqrt(sq_err[kind] / cfg.trials))
            rows.append((q, kind, np.degrees(rmse_rad), flagged[kind]))
    return _render_csv(
        cfg, "rmse-vs-q", ("q", "combiner", "rmse_degrees", "n_flagged"), rows
    )


def run_oracle_check(cfg: ExperimentConfig) -> tuple[str, bool]:
    """Closed-form MSE formulas versus Monte-Carlo, one row per assertion.

    The scene is drawn once from the configured prior; every closed form is
    checked against its empirical mean at five standard errors, and the
    averaging-gain bounds are checked as exact inequalities.  Returns the
    CSV text and the overall pass flag.
    """
    bench = _design_bench(cfg)
    rng = trial_rng(cfg.seed, 0)
    scene = _trial_scene(cfg, bench.prior, rng)
    report = closed_form_report(scene, bench.geometry, cfg.q)
    suite = empirical_mse_suite(
        scene, bench.geometry, cfg.q, cfg.trials, cfg.seed + 1
    )
    rows = []
    all_pass = True

    def add(name, closed, est):
        nonlocal all_pass
        dev = abs(est.mean - closed) / est.stderr if est.stderr > 0 else 0.0
        ok = dev <= 5.0
        all_pass &= ok
        rows.append(
            (name, closed, est.mean, est.stderr, est.trials, dev, "pass" if ok else "fail")
        )

    add("entry_selection@0", report.entry, suite["entry_selection@0"])
    for lag in sorted(report.per_lag):
        add(f"entry_averaging@{lag}", report.per_lag[lag], suite[f"entry_averaging@{lag}"])
    add("vector_selection", report.vector_selection, suite["vector_selection"])
    add("vector_averaging", report.vector_averaging, suite["vector_averaging"])
    add("matrix_selection", report.matrix_selection, suite["matrix_selection"])
    add("matrix_averaging", report.matrix_averaging, suite["matrix_averaging"])

    def add_bound(name, gap, bound):
        nonlocal all_pass
        ok = gap >= bound - 1e-12
        all_pass &= ok
        rows.append((name, bound, gap, 0.0, 0, 0.0, "pass" if ok else "fail"))

    total_bound = sum(report.gain_bounds.values())
    add_bound(
        "gap_vector>=bound",
        report.vector_selection - report.vector_averaging,
        total_bound,
    )
    n_virtual = bench.geometry.n_virtual
    matrix_bound = 0.0
    for window in range(1, n_virtual + 1):
        for lag in range(1 - window, n_virtual - window + 1):
            matrix_bound += report.gain_bounds[lag]
    add_bound(
        "gap_matrix>=bound",
        report.matrix_selection - report.matrix_averaging,
        matrix_bound,
    )
    csv = _render_csv(
        cfg,
        "oracle-check",
        ("check", "closed_form", "empirical", "stderr", "trials", "deviation_sigmas", "status"),
        rows,
        (f"q={cfg.q}", f"k={cfg.k}", f"all_pass={'true' if all_pass else 'false'}"),
    )
    return csv, all_pass


def run_spectrum(cfg: ExperimentConfig) -> str:
    """MUSIC pseudospectrum dump for one simulated scene.

    Uses the first configured combiner on a single batch of cfg.q
    snapshots; two columns, angle in radians and spectrum value.
    """
    bench = _design_bench(cfg)
    rng = trial_rng(cfg.seed, 0)
    scene = _trial_scene(cfg, bench.prior, rng)
    batch = generate_snapshots(scene, bench.geometry, cfg.q, rng)
    _, r_hat = sample_autocorrelation(batch)
    kind = cfg.combiners[0]
    comb = bench.combiners[kind]
    if kind == "mmse" and comb is None:
        comb = _mmse_for_trial(bench, cfg.q, r_hat)
    z_hat = spatial_smooth(apply_combiner(comb, r_hat), source=kind)
    result = music_spectrum(z_hat, cfg.k, bench.grid)
    rows = list(zip((float(g) for g in result.grid), (float(p) for p in result.spectrum)))
    return _render_csv(
        cfg, "spectrum", ("theta_rad", "p_music"), rows, (f"combiner={kind}",)
    )


def run_experiment(kind: str, cfg: ExperimentConfig) -> tuple[str, bool]:
    """Dispatch one experiment; returns (csv_text, success_flag)."""
    if kind == "cdf":
        return run_cdf_experiment(cfg), True
    if kind == "nmse-vs-q":
        return run_nmse_vs_q(cfg), True
    if kind == "rmse-vs-q":
        return run_rmse_vs_q(cfg), True
    if kind == "oracle-check":
        return run_oracle_check(cfg)
    if kind == "spectrum":
        return run_spectrum(cfg), True
    raise ConfigError("experiment", f"unknown kind {kind!r}")


def bootstrap_mean_diff(
    a: np.ndarray, b: np.ndarray, n_boot: int = 2000, seed: int = 0
) -> tuple[float, float]:
    """Percentile bootstrap CI (2.5%, 97.5%) of mean(a) - mean(b), paired."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired bootstrap needs equally many samples")
    rng = np.random.default_rng(seed)
    diffs = a - b
    idx = rng.integers(0, len(diffs), size=(n_boot, len(diffs)))
    means = diffs[idx].mean(axis=1)
    return float(np.quantile(means, 0.025)), float(np.quantile(means, 0.975))
