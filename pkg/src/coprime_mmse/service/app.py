"""FastAPI service wrapping the coprime-array processing core.

Exposes the operations that make sense over the wire: geometry
inspection, prior evaluation, combiner design (with server-side caching,
since an MMSE design is the expensive step), DoA estimation from
submitted data, closed-form MSE reports, and experiment runs returning
CSV.  The CLI's ``--server`` mode is a thin client of these endpoints.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
from fastapi import FastAPI, HTTPException, Response

from .. import __version__
from ..coarray import music_spectrum, spatial_smooth
from ..combining import (
    MmseDesignInputs,
    PowerPrior,
    apply_combiner,
    capon_power_estimates,
    design_mmse_combiner,
)
from ..distributions import characteristic_integral, prior_from_config
from ..experiments import ConfigError, config_from_dict, run_experiment
from ..geometry import (
    Combiner,
    averaging_combiner,
    coarray_lag_sets,
    make_coprime_array,
    selection_combiner,
)
from ..oracles import closed_form_report
from ..simulation import SnapshotBatch, SourceScene, sample_autocorrelation
from .models import (
    CharacteristicIntegralRequest,
    CharacteristicIntegralResponse,
    ComplexMatrix,
    DesignRequest,
    DesignResponse,
    DoaRequest,
    DoaResponse,
    ExperimentRequest,
    GeometryRequest,
    GeometryResponse,
    HealthResponse,
    MseReportRequest,
    MseReportResponse,
    PdfRequest,
    PdfResponse,
)

__all__ = ["create_app", "app"]


def _design_key(req: DesignRequest) -> str:
    payload = json.dumps(req.model_dump(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _build_combiner(req: DesignRequest) -> Combiner:
    try:
        geometry = make_coprime_array(req.m, req.n)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None
    lag_map = coarray_lag_sets(geometry)
    if req.kind == "selection":
        return selection_combiner(lag_map, picker=req.picker)
    if req.kind == "averaging":
        return averaging_combiner(lag_map)
    try:
        prior = prior_from_config(req.prior.to_config())
        power = PowerPrior.known(np.asarray(req.power.powers), req.power.noise_power)
        inputs = MmseDesignInputs(
            geometry=geometry,
            n_sources=req.n_sources,
            prior=prior,
            power=power,
            q=req.q,
            selection=selection_combiner(lag_map, picker=req.picker),
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from None
    return design_mmse_combiner(inputs)


def create_app() -> FastAPI:
    app = FastAPI(
        title="coprime-mmse",
        version=__version__,
        description="Coprime-array autocorrelation combining and DoA estimation",
    )
    design_cache: dict[str, Combiner] = {}

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    @app.post("/geometry/info", response_model=GeometryResponse)
    def geometry_info(req: GeometryRequest):
        try:
            geometry = make_coprime_array(req.m, req.n)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        lag_map = coarray_lag_sets(geometry)
        return GeometryResponse(
            m=geometry.m,
            n=geometry.n,
            positions=geometry.positions.tolist(),
            n_elements=geometry.n_elements,
            n_virtual=geometry.n_virtual,
            lag_cardinalities={lag: len(idx) for lag, idx in lag_map.sets.items()},
        )

    @app.post("/priors/pdf", response_model=PdfResponse)
    def prior_pdf(req: PdfRequest):
        try:
            prior = prior_from_config(req.prior.to_config())
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return PdfResponse(values=prior.pdf(np.asarray(req.thetas)).tolist())

    @app.post(
        "/priors/characteristic-integral",
        response_model=CharacteristicIntegralResponse,
    )
    def prior_characteristic_integral(req: CharacteristicIntegralRequest):
        try:
            prior = prior_from_config(req.prior.to_config())
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        values = [characteristic_integral(prior, x) for x in req.x_values]
        return CharacteristicIntegralResponse(
            real=[v.real for v in values], imag=[v.imag for v in values]
        )

    @app.post("/combiners/design", response_model=DesignResponse)
    def design(req: DesignRequest):
        key = _design_key(req)
        cached = key in design_cache
        combiner = design_cache.get(key) or _build_combiner(req)
        design_cache[key] = combiner
        return DesignResponse(
            design_id=key,
            kind=combiner.kind,
            rows=combiner.matrix.shape[0],
            cols=combiner.matrix.shape[1],
            matrix=ComplexMatrix.from_array(combiner.matrix),
            picked_indices=(
                combiner.picked_indices.tolist()
                if combiner.picked_indices is not None
                else None
            ),
            max_residual=(
                float(combiner.residuals.max()) if combiner.residuals is not None else None
            ),
            cached=cached,
        )

    @app.post("/doa/estimate", response_model=DoaResponse)
    def doa_estimate(req: DoaRequest):
        try:
            geometry = make_coprime_array(req.m, req.n)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        if req.design_id is not None:
            combiner = design_cache.get(req.design_id)
            if combiner is None:
                raise HTTPException(status_code=404, detail="unknown design_id")
        else:
            key = _design_key(req.combiner)
            combiner = design_cache.get(key) or _build_combiner(req.combiner)
            design_cache[key] = combiner
        if req.snapshots is not None:
            y = req.snapshots.to_array()
            if y.shape[0] != geometry.n_elements:
                raise HTTPException(
                    status_code=422,
                    detail=f"snapshots need {geometry.n_elements} rows, got {y.shape[0]}",
                )
            _, r_hat = sample_autocorrelation(SnapshotBatch(y=y, q=y.shape[1]))
        else:
            r_hat = req.r_hat.to_array().ravel()
            if r_hat.size != geometry.n_elements**2:
                raise HTTPException(
                    status_code=422,
                    detail=f"r_hat needs {geometry.n_elements**2} entries, got {r_hat.size}",
                )
        if req.n_sources >= geometry.n_virtual:
            raise HTTPException(
                status_code=422,
                detail=f"n_sources must be below {geometry.n_virtual}",
            )
        z_hat = spatial_smooth(apply_combiner(combiner, r_hat), source=combiner.kind)
        grid = np.linspace(req.grid_start, req.grid_stop, req.grid_points)
        result = music_spectrum(z_hat, req.n_sources, grid)
        powers = None
        noise = None
        if result.estimates.size:
            estimate = capon_power_estimates(z_hat.matrix, result.estimates, geometry)
            powers = estimate.powers.tolist()
            noise = estimate.noise_power
        return DoaResponse(
            estimates_rad=result.estimates.tolist(),
            estimates_deg=np.degrees(result.estimates).tolist(),
            complete=result.complete,
            noise_power_estimate=noise,
            source_power_estimates=powers,
            grid=grid.tolist() if req.include_spectrum else None,
            spectrum=result.spectrum.tolist() if req.include_spectrum else None,
        )

    @app.post("/oracles/closed-form", response_model=MseReportResponse)
    def closed_form(req: MseReportRequest):
        try:
            geometry = make_coprime_array(req.m, req.n)
            scene = SourceScene(
                thetas=np.asarray(req.scene.thetas),
                powers=np.asarray(req.scene.powers),
                noise_power=req.scene.noise_power,
            )
            report = closed_form_report(scene, geometry, req.q)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return MseReportResponse(
            entry=report.entry,
            per_lag=report.per_lag,
            vector_selection=report.vector_selection,
            vector_averaging=report.vector_averaging,
            matrix_selection=report.matrix_selection,
            matrix_averaging=report.matrix_averaging,
            gain_bounds=report.gain_bounds,
        )

    @app.post("/experiments/run")
    def experiments_run(req: ExperimentRequest):
        try:
            cfg = config_from_dict(req.config)
            csv, ok = run_experiment(req.kind, cfg)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return Response(
            content=csv,
            media_type="text/csv",
            headers={"x-experiment-pass": "true" if ok else "false"},
        )

    return app


app = create_app()
