"""Fixed-dimension summary statistic of a count series.

The statistic is the uniform-imputation estimate, followed (for non-exponential
models) by the NBAR(p) coefficients and dispersion.  Coordinates are on their
natural scale; ``feature_transforms`` tells the network how to map each one
before standardisation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imputation import ImputationEstimate, imputation_estimate
from .nbar import OFFSET_MODES, NbarFit, fit_nbar
from .process import BackgroundFamily
from .rng import IMPUTATION, derive_seed
from .simulate import CountSeries

DEFAULT_OFFSETS = {"constant": "unit", "trig": "background-volume", "spline": "background-volume"}


@dataclass(frozen=True)
class SummaryConfig:
    background: BackgroundFamily = BackgroundFamily()
    exponential_only: bool = True
    p: int = 0
    offset_mode: str = "unit"
    imputation_seed: int = 0

    def __post_init__(self):
        if self.offset_mode not in OFFSET_MODES:
            raise ValueError(f"unknown offset mode {self.offset_mode!r}")
        if not self.exponential_only and self.p < 1:
            raise ValueError("non-exponential models need at least one NBAR lag")

    @classmethod
    def for_model(cls, background: BackgroundFamily, kernel: str, p: int = 0,
                  offset_mode: str | None = None, master_seed: int = 0) -> "SummaryConfig":
        """Configuration with the imputation seed derived from ``master_seed``."""
        exp_only = kernel == "exponential"
        mode = offset_mode or DEFAULT_OFFSETS[background.kind]
        return cls(background, exp_only, 0 if exp_only else int(p), mode,
                   derive_seed(master_seed, IMPUTATION))

    @property
    def imputation_names(self) -> tuple:
        return tuple(f"imp_{n}" for n in self.background.names) + ("imp_eta", "imp_beta")

    @property
    def names(self) -> tuple:
        names = self.imputation_names
        if not self.exponential_only:
            names += tuple(f"gamma{i}" for i in range(self.p + 1)) + ("delta",)
        return names

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def feature_transforms(self) -> tuple:
        bg = self.background
        if bg.kind == "constant":
            t = ["log"]
        elif bg.kind == "trig":
            t = ["log"] + ["identity"] * (bg.size - 1)
        else:
            t = ["identity"] * bg.size
        t += ["logit", "log"]
        if not self.exponential_only:
            t += ["identity"] * (self.p + 1) + ["log"]
        return tuple(t)

    def to_dict(self) -> dict:
        return {"background": self.background.to_dict(), "exponential_only": self.exponential_only,
                "p": int(self.p), "offset_mode": self.offset_mode,
                "imputation_seed": int(self.imputation_seed)}

    @classmethod
    def from_dict(cls, d: dict) -> "SummaryConfig":
        return cls(BackgroundFamily.from_dict(d["background"]), bool(d["exponential_only"]),
                   int(d["p"]), d["offset_mode"], int(d["imputation_seed"]))


@dataclass(frozen=True, eq=False)
class SummaryStatistic:
    values: np.ndarray
    names: tuple
    diagnostics: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.values.size

    def block(self, prefix: str) -> np.ndarray:
        idx = [i for i, n in enumerate(self.names) if n.startswith(prefix)]
        return self.values[idx]


def summary_statistic(counts: CountSeries, cfg: SummaryConfig,
                      imputation: ImputationEstimate | None = None) -> SummaryStatistic:
    """``theta_imp`` (exponential models) or ``theta_imp ++ gamma_0..p ++ delta``.

    A precomputed ``imputation`` for the same counts and seed may be passed to
    share it across several lag choices.
    """
    if counts.total <= 0:
        raise ValueError("summary statistic is undefined for all-zero counts")
    imp = imputation or imputation_estimate(counts, cfg.background, cfg.imputation_seed)
    diag = {"imputation_converged": imp.converged}
    parts = [imp.theta]
    if not cfg.exponential_only:
        bg = None
        if cfg.offset_mode == "background-volume":
            bg = imp.fit.params.background
        nb: NbarFit = fit_nbar(counts, cfg.p, cfg.offset_mode, bg)
        diag["nbar_converged"] = nb.converged
        parts += [nb.gamma, [nb.delta]]
    values = np.concatenate(parts).astype(float)
    return SummaryStatistic(values, cfg.names, diag)


def save_statistics(path, S: np.ndarray, names) -> None:
    np.savetxt(path, np.atleast_2d(S), delimiter=",", header=",".join(names), comments="")


def load_statistics(path) -> tuple[np.ndarray, tuple]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    S = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return S, tuple(header)
