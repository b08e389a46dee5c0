"""Experiment configuration shared by the study runner and the CLI.

A config is a YAML mapping::

    name: table1
    model: {background: {kind: constant}, kernel: exponential}
    truth: [2.0, 0.6, 2.0]          # simulation studies only
    grid: {horizon: 400, width: 1.0} # or widths: [0.25, 0.75]
    prior: {sigma_nu: 0.25, isn: {beta: [5, 3]}}
    summary: {p: 0}
    train: {epochs: 300}
    M: 20000
    J: 200
    B: 200
    seed: 1
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from ..imputation import imputation_estimate
from ..neural import TrainConfig
from ..priors import PriorConfig
from ..process import HawkesParams, ModelFamily
from ..rng import PILOT, derive_seed
from ..simulate import CountSeries, ObservationGrid, make_grid, simulate_counts
from ..summary import SummaryConfig

SIGMA_NU_FACTOR = 0.125


@dataclass
class StudyConfig:
    name: str
    family: ModelFamily
    grid: ObservationGrid
    prior: dict
    summary: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    truth: np.ndarray | None = None
    M: int = 20_000
    J: int = 200
    B: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be at least 1")
        if self.M < 100:
            raise ValueError("M must be at least 100")
        if self.B == 1 or self.B < 0:
            raise ValueError("B must be 0 (no bootstrap) or at least 2")
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=float)
            self.family.make(self.truth)
        ps = self.lags
        if self.family.kernel != "exponential" and not all(p >= 1 for p in ps):
            raise ValueError("non-exponential kernels need p >= 1")

    # ---- derived pieces ----

    @property
    def lags(self) -> tuple:
        p = self.summary.get("p", 0)
        return tuple(int(v) for v in (p if isinstance(p, (list, tuple)) else [p]))

    @property
    def truth_params(self) -> HawkesParams:
        if self.truth is None:
            raise ValueError(f"study {self.name!r} has no true parameter")
        return self.family.make(self.truth)

    def summary_configs(self) -> list[SummaryConfig]:
        return [SummaryConfig.for_model(self.family.background, self.family.kernel, p,
                                        self.summary.get("offset_mode"), self.seed)
                for p in self.lags]

    def pilot_counts(self) -> CountSeries:
        return simulate_counts(self.truth_params, self.grid, derive_seed(self.seed, PILOT))

    def prior_config(self, data: CountSeries | None = None) -> PriorConfig:
        """Prior centred on the observed rate of ``data`` (or of a pilot path)."""
        p = self.prior
        rate = p.get("rate_hat")
        counts = data
        if rate is None or (self.family.background.kind == "spline" and "spline_center" not in p):
            counts = counts if counts is not None else self.pilot_counts()
            if rate is None:
                rate = counts.total / counts.grid.horizon
        if rate <= 0:
            raise ValueError("observed series has no events; cannot centre the prior")
        sigma = p.get("sigma_nu")
        if sigma is None:
            sigma = p.get("sigma_nu_factor", SIGMA_NU_FACTOR) * rate
        centre = p.get("spline_center")
        sd = p.get("spline_sd")
        if self.family.background.kind == "spline" and centre is None:
            sc = self.summary_configs()[0]
            imp = imputation_estimate(counts, self.family.background, sc.imputation_seed)
            centre = imp.theta[:self.family.background.size]
            if sd is None:
                sd = p.get("spline_sd_factor", 2.0) * np.abs(centre)
        return PriorConfig(self.family, float(rate), float(sigma),
                           {k: tuple(v) for k, v in p["isn"].items()},
                           float(p.get("eta_mean", 0.0)), float(p.get("eta_sd", 1.0)),
                           float(p.get("nu3_sd", 1.0)),
                           tuple(centre) if centre is not None else None,
                           tuple(sd) if sd is not None else None)

    # ---- (de)serialisation ----

    def to_dict(self) -> dict:
        d = {"name": self.name, "model": self.family.to_dict(), "grid": self.grid.to_dict(),
             "prior": _plain(self.prior), "summary": _plain(self.summary),
             "train": self.train.to_dict(), "M": int(self.M), "J": int(self.J), "B": int(self.B),
             "seed": int(self.seed)}
        if self.truth is not None:
            d["truth"] = [float(v) for v in self.truth]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StudyConfig":
        d = copy.deepcopy(d)
        unknown = set(d) - {"name", "model", "grid", "prior", "summary", "train", "truth",
                            "M", "J", "B", "seed"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(name=str(d.get("name", "study")), family=ModelFamily.from_dict(d["model"]),
                   grid=ObservationGrid.from_dict(d["grid"]), prior=d["prior"],
                   summary=d.get("summary", {}), train=TrainConfig.from_dict(d.get("train", {})),
                   truth=d.get("truth"), M=int(d.get("M", 20_000)), J=int(d.get("J", 200)),
                   B=int(d.get("B", 200)), seed=int(d.get("seed", 0)))

    @classmethod
    def load(cls, path) -> "StudyConfig":
        with open(path) as fh:
            d = yaml.safe_load(fh)
        if not isinstance(d, dict):
            raise ValueError(f"{path}: config must be a mapping")
        return cls.from_dict(d)

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **kw) -> "StudyConfig":
        d = self.to_dict()
        d.update(kw)
        return StudyConfig.from_dict(d)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def grid_from_args(horizon: float, width=None, widths=None) -> ObservationGrid:
    return make_grid(horizon, widths if widths is not None else width)
