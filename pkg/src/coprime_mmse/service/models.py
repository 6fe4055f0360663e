"""Pydantic request/response models for the processing service."""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator


class ComplexMatrix(BaseModel):
    """Complex matrix as parallel real/imaginary nested lists."""

    real: list[list[float]]
    imag: list[list[float]]

    @model_validator(mode="after")
    def _same_shape(self):
        if len(self.real) != len(self.imag) or any(
            len(a) != len(b) for a, b in zip(self.real, self.imag)
        ):
            raise ValueError("real and imag parts must have identical shape")
        return self

    def to_array(self) -> np.ndarray:
        return np.asarray(self.real) + 1j * np.asarray(self.imag)

    @classmethod
    def from_array(cls, a: np.ndarray) -> "ComplexMatrix":
        a = np.atleast_2d(np.asarray(a, dtype=complex))
        return cls(real=a.real.tolist(), imag=a.imag.tolist())


class PriorModel(BaseModel):
    """DoA prior config; angles in radians."""

    kind: Literal["uniform", "truncated_normal"]
    a: float
    b: float
    mu: Optional[float] = None
    sigma2: Optional[float] = None

    @model_validator(mode="after")
    def _normal_params(self):
        if self.kind == "truncated_normal" and (self.mu is None or self.sigma2 is None):
            raise ValueError("truncated_normal needs mu and sigma2")
        return self

    def to_config(self) -> dict:
        cfg = {"kind": self.kind, "a": self.a, "b": self.b}
        if self.kind == "truncated_normal":
            cfg["mu"] = self.mu
            cfg["sigma2"] = self.sigma2
        return cfg


class GeometryRequest(BaseModel):
    m: int = Field(ge=1)
    n: int = Field(ge=1)


class GeometryResponse(BaseModel):
    m: int
    n: int
    positions: list[int]
    n_elements: int
    n_virtual: int
    lag_cardinalities: dict[int, int]


class PdfRequest(BaseModel):
    prior: PriorModel
    thetas: list[float]


class PdfResponse(BaseModel):
    values: list[float]


class CharacteristicIntegralRequest(BaseModel):
    prior: PriorModel
    x_values: list[float]


class CharacteristicIntegralResponse(BaseModel):
    real: list[float]
    imag: list[float]


class PowerModel(BaseModel):
    """Source/noise powers for the MMSE design (linear scale)."""

    powers: list[float]
    noise_power: float = Field(gt=0)


class DesignRequest(BaseModel):
    m: int = Field(ge=1)
    n: int = Field(ge=1)
    kind: Literal["selection", "averaging", "mmse"]
    picker: Literal["smallest", "largest"] = "smallest"
    n_sources: Optional[int] = None
    prior: Optional[PriorModel] = None
    power: Optional[PowerModel] = None
    q: Optional[int] = None

    @model_validator(mode="after")
    def _mmse_params(self):
        if self.kind == "mmse":
            missing = [
                name
                for name in ("n_sources", "prior", "power", "q")
                if getattr(self, name) is None
            ]
            if missing:
                raise ValueError(f"mmse design needs {', '.join(missing)}")
        return self


class DesignResponse(BaseModel):
    design_id: str
    kind: str
    rows: int
    cols: int
    matrix: ComplexMatrix
    picked_indices: Optional[list[int]] = None
    max_residual: Optional[float] = None
    cached: bool


class DoaRequest(BaseModel):
    """Estimate DoAs from snapshots or a vectorized autocorrelation estimate."""

    m: int = Field(ge=1)
    n: int = Field(ge=1)
    n_sources: int = Field(ge=1)
    combiner: DesignRequest | None = None
    design_id: Optional[str] = None
    snapshots: Optional[ComplexMatrix] = None
    r_hat: Optional[ComplexMatrix] = None
    grid_start: float = -np.pi / 2
    grid_stop: float = np.pi / 2
    grid_points: int = Field(default=2001, ge=3)
    include_spectrum: bool = False

    @model_validator(mode="after")
    def _one_input(self):
        if (self.snapshots is None) == (self.r_hat is None):
            raise ValueError("provide exactly one of snapshots or r_hat")
        if self.combiner is None and self.design_id is None:
            raise ValueError("provide combiner design parameters or a design_id")
        return self


class DoaResponse(BaseModel):
    estimates_rad: list[float]
    estimates_deg: list[float]
    complete: bool
    noise_power_estimate: Optional[float] = None
    source_power_estimates: Optional[list[float]] = None
    grid: Optional[list[float]] = None
    spectrum: Optional[list[float]] = None


class SceneModel(BaseModel):
    thetas: list[float]
    powers: list[float]
    noise_power: float = Field(gt=0)


class MseReportRequest(BaseModel):
    m: int = Field(ge=1)
    n: int = Field(ge=1)
    scene: SceneModel
    q: int = Field(ge=1)


class MseReportResponse(BaseModel):
    entry: float
    per_lag: dict[int, float]
    vector_selection: float
    vector_averaging: float
    matrix_selection: float
    matrix_averaging: float
    gain_bounds: dict[int, float]


class ExperimentRequest(BaseModel):
    kind: Literal["cdf", "nmse-vs-q", "rmse-vs-q", "oracle-check", "spectrum"]
    config: dict


class HealthResponse(BaseModel):
    status: str
    version: str
