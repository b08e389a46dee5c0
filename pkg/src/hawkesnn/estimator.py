"""Amortised estimation: training sets, fitted bundles, point estimates and
the parametric bootstrap."""
from __future__ import annotations

import json
import logging
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .imputation import imputation_estimate
from .neural import History, Mlp, TrainConfig, train
from .priors import PriorConfig, draw, sample_prior, to_training_scale
from .process import ModelFamily
from .rng import BOOTSTRAP, PRIOR_RESAMPLE, SIMULATE, derive_seed, substream
from .simulate import CountSeries, ObservationGrid, simulate_counts
from .summary import SummaryConfig, load_statistics, save_statistics, summary_statistic

log = logging.getLogger(__name__)

ETA_CLIP = 1.0 - 1e-6
POS_FLOOR = 1e-8
MAX_ATTEMPTS = 100
BUNDLE_FORMAT = "hawkesnn-bundle"
BUNDLE_VERSION = 1


# ---------------------------------------------------------------------------
# Parameter-space projection
# ---------------------------------------------------------------------------

def project(theta, family: ModelFamily) -> tuple[np.ndarray, bool]:
    """Clip a parameter vector into the legal space; returns ``(theta, clipped)``."""
    th = np.array(theta, dtype=float)
    orig = th.copy()
    bg = family.background
    q = bg.size
    if bg.kind == "constant":
        th[0] = max(th[0], POS_FLOOR)
    elif bg.kind == "trig":
        th[0] = max(th[0], POS_FLOOR)
        amp = float(np.linalg.norm(th[1:q]))
        if amp >= th[0]:
            th[1:q] *= (1.0 - 1e-9) * th[0] / amp
    else:
        try:
            bg.make(th[:q])
        except ValueError:
            th[:q] = np.maximum(th[:q], POS_FLOOR)
    th[q] = min(max(th[q], 0.0), ETA_CLIP)
    th[q + 1:] = np.maximum(th[q + 1:], POS_FLOOR)
    return th, bool(np.any(th != orig))


# ---------------------------------------------------------------------------
# Training set
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class TrainingSet:
    S: np.ndarray
    theta: np.ndarray
    scaled: np.ndarray
    stat_names: tuple
    param_names: tuple
    transforms: tuple
    summary: SummaryConfig
    prior: PriorConfig
    grid: ObservationGrid
    seed: int
    resampled: int = 0

    @property
    def M(self) -> int:
        return self.S.shape[0]

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        save_statistics(os.path.join(directory, "statistics.csv"), self.S, self.stat_names)
        save_statistics(os.path.join(directory, "theta.csv"), self.theta, self.param_names)
        meta = {"summary": self.summary.to_dict(), "prior": self.prior.to_dict(),
                "grid": self.grid.to_dict(), "seed": int(self.seed), "resampled": int(self.resampled)}
        with open(os.path.join(directory, "meta.json"), "w") as fh:
            json.dump(meta, fh, indent=1)

    @classmethod
    def load(cls, directory) -> "TrainingSet":
        with open(os.path.join(directory, "meta.json")) as fh:
            meta = json.load(fh)
        S, sn = load_statistics(os.path.join(directory, "statistics.csv"))
        theta, pn = load_statistics(os.path.join(directory, "theta.csv"))
        prior = PriorConfig.from_dict(meta["prior"])
        return cls(S, theta, to_training_scale(theta, prior.transforms), sn, pn, prior.transforms,
                   SummaryConfig.from_dict(meta["summary"]), prior,
                   ObservationGrid.from_dict(meta["grid"]), meta["seed"], meta.get("resampled", 0))


def _row(prior: PriorConfig, theta0, grid, sumcfgs, seed: int, m: int):
    """Statistics for training row ``m``; degenerate paths redraw ``theta``."""
    fam = prior.family
    theta = theta0
    for attempt in range(MAX_ATTEMPTS):
        if attempt:
            theta = draw(prior, 1, substream(seed, PRIOR_RESAMPLE, m, attempt))[0]
        counts = simulate_counts(fam.make(theta), grid, derive_seed(seed, SIMULATE, m, attempt))
        if counts.total == 0:
            continue
        imp = imputation_estimate(counts, sumcfgs[0].background, sumcfgs[0].imputation_seed)
        stats = [summary_statistic(counts, c, imp).values for c in sumcfgs]
        if all(np.all(np.isfinite(s)) for s in stats):
            return theta, stats, attempt
    raise RuntimeError(f"training row {m}: {MAX_ATTEMPTS} consecutive degenerate paths; "
                       "the prior puts too much mass on near-empty paths")


def _rows_chunk(args):
    prior, thetas, grid, sumcfgs, seed, start = args
    out = []
    for i, th in enumerate(thetas):
        out.append(_row(prior, th, grid, sumcfgs, seed, start + i))
    return out


def _run_rows(prior, theta, grid, sumcfgs, seed, threads):
    M = theta.shape[0]
    if threads <= 1 or M < 2 * threads:
        return _rows_chunk((prior, theta, grid, sumcfgs, seed, 0))
    edges = np.linspace(0, M, 4 * threads + 1).astype(int)
    jobs = [(prior, theta[a:b], grid, sumcfgs, seed, a) for a, b in zip(edges[:-1], edges[1:])]
    with ProcessPoolExecutor(threads, mp_context=mp.get_context("fork")) as ex:
        return [r for chunk in ex.map(_rows_chunk, jobs) for r in chunk]


def generate_training_sets(prior: PriorConfig, grid: ObservationGrid, sumcfgs, M: int,
                           seed: int, threads: int = 1) -> list[TrainingSet]:
    """Training sets for several summary configurations on shared paths.

    All configurations must share the background family and imputation seed,
    so each simulated path is imputed once.
    """
    sumcfgs = list(sumcfgs)
    first = sumcfgs[0]
    for c in sumcfgs:
        if c.background != prior.family.background or c.imputation_seed != first.imputation_seed:
            raise ValueError("summary configurations must share the background and imputation seed")
    ps = sample_prior(prior, M, seed)
    rows = _run_rows(prior, ps.theta, grid, sumcfgs, seed, threads)
    theta = np.array([r[0] for r in rows])
    resampled = sum(1 for r in rows if r[2])
    if resampled:
        log.info("resampled %d degenerate training rows", resampled)
    scaled = to_training_scale(theta, prior.transforms)
    out = []
    for k, c in enumerate(sumcfgs):
        S = np.array([r[1][k] for r in rows])
        out.append(TrainingSet(S, theta, scaled, c.names, prior.names, prior.transforms, c, prior,
                               grid, seed, resampled))
    return out


def generate_training_set(prior: PriorConfig, grid: ObservationGrid, sumcfg: SummaryConfig,
                          M: int, seed: int, threads: int = 1) -> TrainingSet:
    return generate_training_sets(prior, grid, [sumcfg], M, seed, threads)[0]


# ---------------------------------------------------------------------------
# Bundle
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class EstimatorBundle:
    net: Mlp
    summary: SummaryConfig
    prior: PriorConfig
    grid: ObservationGrid
    history: History = field(default_factory=History)

    def __post_init__(self):
        if self.net.sizes[0] != self.summary.dim:
            raise ValueError("statistic dimension does not match the network input size")
        if self.net.sizes[-1] != self.family.dim:
            raise ValueError("network output size does not match the parameter dimension")

    @property
    def family(self) -> ModelFamily:
        return self.prior.family

    @property
    def names(self) -> tuple:
        return self.family.names

    @property
    def any_grid(self) -> bool:
        """Constant-background exponential bundles accept any observation grid."""
        return self.family.background.kind == "constant" and self.summary.exponential_only

    def check_grid(self, grid: ObservationGrid) -> None:
        if self.any_grid:
            return
        if grid.K != self.grid.K or not np.allclose(grid.times, self.grid.times, rtol=0, atol=1e-9):
            raise ValueError("observation grid does not match the grid the estimator was trained on")

    def to_dict(self) -> dict:
        return {"format": BUNDLE_FORMAT, "version": BUNDLE_VERSION, "net": self.net.to_dict(),
                "summary": self.summary.to_dict(), "prior": self.prior.to_dict(),
                "grid": self.grid.to_dict(), "history": self.history.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorBundle":
        if d.get("format") != BUNDLE_FORMAT:
            raise ValueError("not an estimator bundle")
        if d.get("version") != BUNDLE_VERSION:
            raise ValueError(f"unsupported bundle version {d.get('version')!r}")
        h = d.get("history", {})
        return cls(Mlp.from_dict(d["net"]), SummaryConfig.from_dict(d["summary"]),
                   PriorConfig.from_dict(d["prior"]), ObservationGrid.from_dict(d["grid"]),
                   History(h.get("train", []), h.get("val", []), h.get("lr", []), h.get("best_epoch", -1)))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "EstimatorBundle":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"bundle file is not valid JSON: {e}") from None
        return cls.from_dict(d)


def fit_estimator(ts: TrainingSet, cfg: TrainConfig = TrainConfig(), log_fn=None) -> EstimatorBundle:
    net, hist = train(ts.S, ts.scaled, cfg, input_transforms=ts.summary.feature_transforms,
                      output_transforms=ts.transforms, log=log_fn)
    return EstimatorBundle(net, ts.summary, ts.prior, ts.grid, hist)


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

def predict_statistics(bundle: EstimatorBundle, S: np.ndarray) -> np.ndarray:
    """Batched network pass on statistic rows, projected into the parameter space."""
    raw = np.atleast_2d(bundle.net.predict(S))
    out = np.empty_like(raw)
    for i, row in enumerate(raw):
        out[i], clipped = project(row, bundle.family)
        if clipped:
            log.info("network output clipped into the parameter space")
    return out


def estimate(bundle: EstimatorBundle, counts: CountSeries) -> np.ndarray:
    """Point estimate on the natural scale."""
    bundle.check_grid(counts.grid)
    s = summary_statistic(counts, bundle.summary)
    return predict_statistics(bundle, s.values[None, :])[0]


def estimate_many(bundle: EstimatorBundle, series) -> np.ndarray:
    """Estimates for several count series with one batched network pass."""
    S = []
    for c in series:
        bundle.check_grid(c.grid)
        S.append(summary_statistic(c, bundle.summary).values)
    return predict_statistics(bundle, np.array(S))


@dataclass(frozen=True, eq=False)
class EstimateReport:
    names: tuple
    theta_hat: np.ndarray
    theta_bce: np.ndarray
    se_hat: np.ndarray
    B: int
    clipped: bool = False
    replicates: np.ndarray | None = None

    @property
    def ci_lo(self) -> np.ndarray:
        return self.theta_bce - 1.96 * self.se_hat

    @property
    def ci_hi(self) -> np.ndarray:
        return self.theta_bce + 1.96 * self.se_hat

    def to_text(self) -> str:
        lines = ["name,est,bce,se,ci_lo,ci_hi"]
        for i, n in enumerate(self.names):
            vals = (self.theta_hat[i], self.theta_bce[i], self.se_hat[i], self.ci_lo[i], self.ci_hi[i])
            lines.append(n + "," + ",".join(f"{v:.6g}" for v in vals))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {"names": list(self.names), "theta_hat": self.theta_hat.tolist(),
                "theta_bce": self.theta_bce.tolist(), "se_hat": self.se_hat.tolist(),
                "ci_lo": self.ci_lo.tolist(), "ci_hi": self.ci_hi.tolist(), "B": int(self.B),
                "clipped": bool(self.clipped)}


def bias_correct(theta_hat, replicates, family: ModelFamily) -> tuple[np.ndarray, bool]:
    """``2 theta_hat - median(replicates)``, clipped into the parameter space."""
    med = np.median(np.asarray(replicates, dtype=float), axis=0)
    return project(2.0 * np.asarray(theta_hat, dtype=float) - med, family)


def _boot_chunk(args):
    params, grid, sumcfg, seed, idx = args
    out = []
    for b in idx:
        for attempt in range(MAX_ATTEMPTS):
            counts = simulate_counts(params, grid, derive_seed(seed, BOOTSTRAP, b, attempt))
            if counts.total > 0:
                out.append(summary_statistic(counts, sumcfg).values)
                break
        else:
            raise RuntimeError(f"bootstrap replicate {b}: {MAX_ATTEMPTS} empty paths in a row")
    return out


def bootstrap_statistics(bundle: EstimatorBundle, theta_hat, B: int, seed: int,
                         grid: ObservationGrid | None = None, threads: int = 1) -> np.ndarray:
    params = bundle.family.make(theta_hat)
    grid = grid or bundle.grid
    if threads <= 1 or B < 2 * threads:
        return np.array(_boot_chunk((params, grid, bundle.summary, seed, range(B))))
    parts = np.array_split(np.arange(B), 4 * threads)
    jobs = [(params, grid, bundle.summary, seed, p) for p in parts]
    with ProcessPoolExecutor(threads, mp_context=mp.get_context("fork")) as ex:
        return np.array([s for chunk in ex.map(_boot_chunk, jobs) for s in chunk])


def bootstrap(bundle: EstimatorBundle, theta_hat, B: int, seed: int,
              grid: ObservationGrid | None = None, threads: int = 1,
              keep_replicates: bool = False) -> EstimateReport:
    """Parametric bootstrap from ``theta_hat`` on the bundle grid.

    Empty bootstrap paths are re-simulated from the same ``theta_hat`` with a
    fresh seed.
    """
    if B < 2:
        raise ValueError("bootstrap needs B >= 2")
    theta_hat = np.asarray(theta_hat, dtype=float)
    bundle.family.make(theta_hat)
    if grid is not None:
        bundle.check_grid(grid)
    reps = predict_statistics(bundle, bootstrap_statistics(bundle, theta_hat, B, seed, grid, threads))
    se = reps.std(axis=0, ddof=1)
    bce, clipped = bias_correct(theta_hat, reps, bundle.family)
    if clipped:
        log.info("bias-corrected estimate clipped into the parameter space")
    return EstimateReport(bundle.names, theta_hat, bce, se, B, clipped,
                          reps if keep_replicates else None)
