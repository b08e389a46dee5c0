"""HTTP front end for a set of trained estimator bundles.

Bundles are loaded once at start-up, so each request pays only for the
summary statistic and one network pass.
"""
from __future__ import annotations

import os

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..estimator import EstimatorBundle, bootstrap, estimate
from ..harness.outputs import predictive_bands
from ..process import HawkesParams
from ..simulate import CountSeries, ObservationGrid, censor, make_grid, simulate_path
from ..summary import SummaryConfig, summary_statistic
from .schemas import (BandsRequest, BandsResponse, BootstrapRequest, BundleInfo, EstimateRequest,
                      EstimateResponse, GridSpec, Health, ReportResponse, SimulateRequest,
                      SimulateResponse, SummarizeRequest, SummarizeResponse)

BUNDLES_ENV = "HAWKESNN_BUNDLES"


def _grid(spec: GridSpec | None, fallback: ObservationGrid | None = None) -> ObservationGrid:
    if spec is None:
        if fallback is None:
            raise ValueError("a grid is required")
        return fallback
    if spec.times is not None:
        return ObservationGrid(np.asarray(spec.times, dtype=float))
    return make_grid(spec.horizon, spec.widths if spec.widths is not None else spec.width)


def _counts(counts, spec, fallback=None) -> CountSeries:
    return CountSeries(_grid(spec, fallback), np.asarray(counts))


def _params(d: dict) -> HawkesParams:
    try:
        return HawkesParams.from_dict(d)
    except (KeyError, TypeError) as e:
        raise ValueError(f"malformed parameter object: missing or invalid {e}") from None


def parse_bundle_env(value: str) -> dict:
    """``name=path,name=path`` (a bare path is named ``default``)."""
    out = {}
    for item in filter(None, (v.strip() for v in value.split(","))):
        name, _, path = item.rpartition("=")
        out[name or "default"] = path
    return out


def create_app(bundles: dict | None = None) -> FastAPI:
    """App serving ``bundles`` (name -> bundle or path); defaults to ``$HAWKESNN_BUNDLES``."""
    if bundles is None:
        bundles = parse_bundle_env(os.environ.get(BUNDLES_ENV, ""))
    loaded = {k: (v if isinstance(v, EstimatorBundle) else EstimatorBundle.load(v))
              for k, v in bundles.items()}
    app = FastAPI(title="hawkesnn", version=__version__)
    app.state.bundles = loaded

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    def get_bundle(name: str) -> EstimatorBundle:
        try:
            return app.state.bundles[name]
        except KeyError:
            raise HTTPException(404, f"no bundle named {name!r}") from None

    @app.get("/health", response_model=Health)
    def health():
        return Health(status="ok", version=__version__, bundles=sorted(app.state.bundles))

    @app.get("/bundles", response_model=list[BundleInfo])
    def list_bundles():
        return [BundleInfo(name=k, names=list(b.names), model=b.family.to_dict(),
                           grid=b.grid.to_dict(), statistic_dim=b.summary.dim)
                for k, b in sorted(app.state.bundles.items())]

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest):
        params = _params(req.params)
        grid = _grid(req.grid)
        path = simulate_path(params, grid.horizon, req.seed)
        c = censor(path, grid)
        return SimulateResponse(counts=c.counts.tolist(), grid_times=grid.times.tolist(),
                                times=path.times.tolist() if req.include_times else None)

    @app.post("/summarize", response_model=SummarizeResponse)
    def summarize(req: SummarizeRequest):
        s = summary_statistic(_counts(req.counts, req.grid), SummaryConfig.from_dict(req.summary))
        return SummarizeResponse(names=list(s.names), values=s.values.tolist(),
                                 diagnostics={k: bool(v) for k, v in s.diagnostics.items()})

    @app.post("/estimate", response_model=EstimateResponse)
    def estimate_(req: EstimateRequest):
        b = get_bundle(req.bundle)
        theta = estimate(b, _counts(req.counts, req.grid, b.grid))
        return EstimateResponse(bundle=req.bundle, names=list(b.names), theta=theta.tolist())

    @app.post("/bootstrap", response_model=ReportResponse)
    def bootstrap_(req: BootstrapRequest):
        b = get_bundle(req.bundle)
        c = _counts(req.counts, req.grid, b.grid)
        theta = np.asarray(req.theta, dtype=float) if req.theta is not None else estimate(b, c)
        rep = bootstrap(b, theta, req.B, req.seed, grid=c.grid)
        return ReportResponse(bundle=req.bundle, **rep.to_dict())

    @app.post("/bands", response_model=BandsResponse)
    def bands(req: BandsRequest):
        bd = predictive_bands(_params(req.params), _grid(req.grid), req.n_sims,
                              req.period, req.seed)
        return BandsResponse(weeks=bd.weeks.tolist(), median=bd.median.tolist(),
                             lo=bd.lo.tolist(), hi=bd.hi.tolist())

    return app
