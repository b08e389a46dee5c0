"""Simulation studies: train once, estimate J test paths, bootstrap each."""
from __future__ import annotations

import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from ..estimator import (EstimatorBundle, bias_correct, bootstrap_statistics, fit_estimator,
                         generate_training_sets, predict_statistics)
from ..imputation import imputation_estimate
from ..rng import BOOTSTRAP, TEST_PATH, derive_seed
from ..simulate import simulate_counts
from ..summary import summary_statistic
from .config import StudyConfig

Z95 = 1.96


class StudyError(RuntimeError):
    pass


@contextmanager
def _stage(name: str):
    try:
        yield
    except StudyError:
        raise
    except Exception as e:
        raise StudyError(f"[{name}] {type(e).__name__}: {e}") from e


@dataclass(eq=False)
class StudyTable:
    """Est/SE (and BCE/SE-hat/CP when bootstrapped) per coordinate."""

    names: tuple
    truth: np.ndarray
    estimates: np.ndarray
    bce: np.ndarray | None = None
    se_hat: np.ndarray | None = None
    label: str = ""

    @property
    def J(self) -> int:
        return self.estimates.shape[0]

    @property
    def est(self) -> np.ndarray:
        return self.estimates.mean(axis=0)

    @property
    def se(self) -> np.ndarray:
        return self.estimates.std(axis=0, ddof=1)

    @property
    def bce_mean(self) -> np.ndarray | None:
        return None if self.bce is None else self.bce.mean(axis=0)

    @property
    def se_hat_mean(self) -> np.ndarray | None:
        return None if self.se_hat is None else self.se_hat.mean(axis=0)

    @property
    def cp(self) -> np.ndarray | None:
        if self.bce is None:
            return None
        lo, hi = self.bce - Z95 * self.se_hat, self.bce + Z95 * self.se_hat
        return np.mean((lo <= self.truth) & (self.truth <= hi), axis=0)

    def mc_se(self, which: str = "est") -> np.ndarray:
        """Monte-Carlo standard error of a column mean."""
        X = self.estimates if which == "est" else self.bce
        return X.std(axis=0, ddof=1) / np.sqrt(X.shape[0])

    def rows(self) -> list[tuple[str, np.ndarray]]:
        out = [("Est", self.est), ("SE", self.se)]
        if self.bce is not None:
            out += [("BCE", self.bce_mean), ("SEhat", self.se_hat_mean), ("CP", self.cp)]
        return out

    def to_text(self) -> str:
        head = "row," + ",".join(self.names)
        lines = [head, "truth," + ",".join(f"{v:.4f}" for v in self.truth)]
        lines += [f"{r}," + ",".join(f"{v:.4f}" for v in vals) for r, vals in self.rows()]
        return "\n".join(lines) + "\n"

    def save_replicates(self, path) -> None:
        cols = [f"est_{n}" for n in self.names]
        blocks = [self.estimates]
        if self.bce is not None:
            cols += [f"bce_{n}" for n in self.names] + [f"sehat_{n}" for n in self.names]
            blocks += [self.bce, self.se_hat]
        np.savetxt(path, np.hstack(blocks), delimiter=",", header=",".join(cols), comments="")

    @classmethod
    def load_replicates(cls, path, truth, label: str = "") -> "StudyTable":
        with open(path) as fh:
            cols = fh.readline().strip().split(",")
        X = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        names = tuple(c[4:] for c in cols if c.startswith("est_"))
        d = len(names)
        if len(cols) == 3 * d:
            return cls(names, np.asarray(truth, float), X[:, :d], X[:, d:2 * d], X[:, 2 * d:], label)
        return cls(names, np.asarray(truth, float), X[:, :d], label=label)


@dataclass(eq=False)
class StudyResult:
    config: StudyConfig
    tables: list
    bundles: list
    timings: dict

    def table(self, label: str | None = None) -> StudyTable:
        if label is None:
            return self.tables[0]
        return next(t for t in self.tables if t.label == label)


def _labels(cfg: StudyConfig) -> list[str]:
    if cfg.family.kernel == "exponential":
        return ["main"]
    return [f"p{p}" for p in cfg.lags]


def _test_counts(cfg: StudyConfig, j: int):
    for attempt in range(100):
        c = simulate_counts(cfg.truth_params, cfg.grid, derive_seed(cfg.seed, TEST_PATH, j, attempt))
        if c.total > 0:
            return c
    raise RuntimeError(f"test path {j}: no events in 100 attempts")


def load_study(out_dir) -> StudyResult | None:
    meta_path = os.path.join(out_dir, "study.json")
    if not os.path.exists(meta_path):
        return None
    with open(meta_path) as fh:
        meta = json.load(fh)
    cfg = StudyConfig.from_dict(meta["config"])
    if cfg.hash != meta.get("hash"):
        return None
    tables, bundles = [], []
    for label in meta["labels"]:
        tables.append(StudyTable.load_replicates(os.path.join(out_dir, f"replicates_{label}.csv"),
                                                 cfg.truth, label))
        bp = os.path.join(out_dir, f"bundle_{label}.json")
        bundles.append(EstimatorBundle.load(bp) if os.path.exists(bp) else None)
    return StudyResult(cfg, tables, bundles, meta.get("timings", {}))


def run_study(cfg: StudyConfig, out_dir=None, threads: int = 1, log=None,
              reuse: bool = True) -> StudyResult:
    """Train, evaluate ``J`` test paths and aggregate into tables.

    With ``out_dir`` set, results are written there (config, config hash,
    per-label replicate matrices, bundles, tables).  A directory holding a run
    of the identical config is loaded instead of recomputed when ``reuse``.
    """
    say = log or (lambda msg: None)
    if out_dir and reuse:
        prev = load_study(out_dir)
        if prev is not None and prev.config.hash == cfg.hash:
            say(f"reusing cached study in {out_dir} (hash {cfg.hash})")
            return prev
    timings = {}
    labels = _labels(cfg)
    t0 = time.time()
    with _stage("prior"):
        prior = cfg.prior_config()
        sumcfgs = cfg.summary_configs()
    with _stage("training-set"):
        say(f"generating {cfg.M} training rows")
        sets = generate_training_sets(prior, cfg.grid, sumcfgs, cfg.M, cfg.seed, threads)
    timings["training_set"] = time.time() - t0
    t0 = time.time()
    bundles = []
    with _stage("train"):
        for label, ts in zip(labels, sets):
            say(f"training network {label}")
            bundles.append(fit_estimator(ts, cfg.train))
    timings["train"] = time.time() - t0

    t0 = time.time()
    with _stage("test-paths"):
        S = [[] for _ in labels]
        for j in range(cfg.J):
            c = _test_counts(cfg, j)
            imp = imputation_estimate(c, sumcfgs[0].background, sumcfgs[0].imputation_seed)
            for k, sc in enumerate(sumcfgs):
                S[k].append(summary_statistic(c, sc, imp).values)
        estimates = [predict_statistics(b, np.array(s)) for b, s in zip(bundles, S)]
    timings["estimate"] = time.time() - t0

    t0 = time.time()
    tables = []
    with _stage("bootstrap"):
        for label, b, est in zip(labels, bundles, estimates):
            bce = se_hat = None
            if cfg.B:
                bce, se_hat = np.empty_like(est), np.empty_like(est)
                for j in range(cfg.J):
                    reps = predict_statistics(b, bootstrap_statistics(
                        b, est[j], cfg.B, derive_seed(cfg.seed, BOOTSTRAP, j), threads=threads))
                    se_hat[j] = reps.std(axis=0, ddof=1)
                    bce[j] = bias_correct(est[j], reps, b.family)[0]
                    if log and (j + 1) % 20 == 0:
                        say(f"bootstrap {label}: {j + 1}/{cfg.J}")
            tables.append(StudyTable(cfg.family.names, cfg.truth, est, bce, se_hat, label))
    timings["bootstrap"] = time.time() - t0

    result = StudyResult(cfg, tables, bundles, timings)
    if out_dir:
        with _stage("write"):
            write_study(result, out_dir)
    return result


def write_study(result: StudyResult, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    cfg = result.config
    cfg.dump(os.path.join(out_dir, "config.yaml"))
    labels = []
    for t, b in zip(result.tables, result.bundles):
        labels.append(t.label)
        t.save_replicates(os.path.join(out_dir, f"replicates_{t.label}.csv"))
        with open(os.path.join(out_dir, f"table_{t.label}.csv"), "w") as fh:
            fh.write(t.to_text())
        if b is not None:
            b.save(os.path.join(out_dir, f"bundle_{t.label}.json"))
    meta = {"config": cfg.to_dict(), "hash": cfg.hash, "labels": labels, "timings": result.timings}
    with open(os.path.join(out_dir, "study.json"), "w") as fh:
        json.dump(meta, fh, indent=1)
