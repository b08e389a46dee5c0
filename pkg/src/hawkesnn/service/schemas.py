"""Request and response models."""
from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field, model_validator


class GridSpec(BaseModel):
    horizon: Optional[float] = Field(None, gt=0)
    width: Optional[float] = Field(None, gt=0)
    widths: Optional[list[float]] = None
    times: Optional[list[float]] = None

    @model_validator(mode="after")
    def _one_form(self):
        if self.times is None and (self.horizon is None or (self.width is None and self.widths is None)):
            raise ValueError("give either times, or horizon with width/widths")
        return self


class SimulateRequest(BaseModel):
    params: dict
    grid: GridSpec
    seed: int = 0
    include_times: bool = False


class SimulateResponse(BaseModel):
    counts: list[int]
    grid_times: list[float]
    times: Optional[list[float]] = None


class CountsPayload(BaseModel):
    counts: list[int]
    grid: Optional[GridSpec] = None


class SummarizeRequest(CountsPayload):
    summary: dict


class SummarizeResponse(BaseModel):
    names: list[str]
    values: list[float]
    diagnostics: dict


class EstimateRequest(CountsPayload):
    bundle: str = "default"


class EstimateResponse(BaseModel):
    bundle: str
    names: list[str]
    theta: list[float]


class BootstrapRequest(EstimateRequest):
    B: int = Field(200, ge=2)
    seed: int = 0
    theta: Optional[list[float]] = None


class ReportResponse(BaseModel):
    bundle: str
    names: list[str]
    theta_hat: list[float]
    theta_bce: list[float]
    se_hat: list[float]
    ci_lo: list[float]
    ci_hi: list[float]
    B: int
    clipped: bool


class BandsRequest(BaseModel):
    params: dict
    grid: GridSpec
    n_sims: int = Field(100, ge=1)
    period: float = Field(52.0, gt=0)
    seed: int = 0


class BandsResponse(BaseModel):
    weeks: list[int]
    median: list[float]
    lo: list[float]
    hi: list[float]


class BundleInfo(BaseModel):
    name: str
    names: list[str]
    model: dict
    grid: dict
    statistic_dim: int


class Health(BaseModel):
    status: str
    version: str
    bundles: list[str]
