"""Coprime-array DoA processing with MMSE autocorrelation combining.

The package covers the full receive chain: coprime geometry and coarray
lag sets, snapshot simulation, selection / averaging / MMSE combining of
the estimated autocorrelations, spatial smoothing, MUSIC DoA estimation,
closed-form MSE formulas with Monte-Carlo validators, and reproducible
experiment runners.  A FastAPI service (``coprime_mmse.service``) wraps the
processing core; the ``coprime-mmse`` CLI drives the experiments either
in-process or against a running service.
"""

from .coarray import (
    MusicResult,
    SmoothedMatrix,
    estimate_doas,
    music_spectrum,
    spatial_smooth,
    virtual_steering,
)
from .combining import (
    ExpectationMatrices,
    MmseDesignInputs,
    PowerPrior,
    apply_combiner,
    build_expectation_matrices,
    capon_power_estimates,
    design_mmse_combiner,
    load_combiner,
    save_combiner,
    solve_mmse_combiner,
)
from .combining import RankDeficiencyWarning, SingularMatrixError
from .distributions import (
    QuadratureConvergenceError,
    TruncatedNormalPrior,
    UniformPrior,
    bessel_j0,
    characteristic_integral,
    prior_from_config,
    sample_doas,
)
from .geometry import (
    ArrayGeometry,
    Combiner,
    LagIndexMap,
    NotCoprimeError,
    OrderViolationError,
    averaging_combiner,
    coarray_lag_sets,
    make_coprime_array,
    selection_combiner,
    steering_vector,
)
from .simulation import (
    SnapshotBatch,
    SourceScene,
    generate_snapshots,
    nominal_autocorrelation,
    sample_autocorrelation,
    trial_rng,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "Combiner",
    "ExpectationMatrices",
    "LagIndexMap",
    "MmseDesignInputs",
    "MusicResult",
    "NotCoprimeError",
    "OrderViolationError",
    "PowerPrior",
    "QuadratureConvergenceError",
    "RankDeficiencyWarning",
    "SingularMatrixError",
    "SmoothedMatrix",
    "SnapshotBatch",
    "SourceScene",
    "TruncatedNormalPrior",
    "UniformPrior",
    "apply_combiner",
    "averaging_combiner",
    "bessel_j0",
    "build_expectation_matrices",
    "capon_power_estimates",
    "characteristic_integral",
    "coarray_lag_sets",
    "design_mmse_combiner",
    "estimate_doas",
    "generate_snapshots",
    "load_combiner",
    "make_coprime_array",
    "music_spectrum",
    "nominal_autocorrelation",
    "prior_from_config",
    "sample_autocorrelation",
    "sample_doas",
    "save_combiner",
    "selection_combiner",
    "solve_mmse_combiner",
    "spatial_smooth",
    "steering_vector",
    "trial_rng",
    "virtual_steering",
]
