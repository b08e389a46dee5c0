"""Training prior: logit-normal branching ratio, data-informed background,
inverse-softplus-normal (ISN) kernel parameters.

The network is trained on a transformed scale.  Each coordinate carries a
tag: ``logit`` (branching ratio), ``softplus`` (ISN coordinates, stored as
``softplus^{-1}`` of the value) or ``identity``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .process import ModelFamily
from .rng import PRIOR, substream
from .spline import PeriodicBSpline

BLOCK = 4096
MAX_REJECTIONS = 1_000_000
SPLINE_MARGIN = 1e-9
ETA_MAX = float(np.nextafter(1.0, 0.0))


def softplus(x):
    """``log(1 + e^x)``, stable for large ``|x|``."""
    x = np.asarray(x, dtype=float)
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    """Inverse of :func:`softplus` for ``y > 0``."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(y > 30.0, y + np.log(-np.expm1(-y)), np.log(np.expm1(y)))


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


TRANSFORMS = {"identity": (lambda v: np.asarray(v, dtype=float), lambda z: np.asarray(z, dtype=float)),
              "logit": (logit, sigmoid),
              "softplus": (softplus_inv, softplus),
              "log": (np.log, np.exp)}


def to_training_scale(theta, tags) -> np.ndarray:
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    return np.column_stack([TRANSFORMS[t][0](theta[:, j]) for j, t in enumerate(tags)])


def from_training_scale(z, tags) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return np.column_stack([TRANSFORMS[t][1](z[:, j]) for j, t in enumerate(tags)])


@dataclass(frozen=True)
class PriorConfig:
    """Prior over one model family.

    ``isn`` maps each kernel parameter name to ``(mu, sigma)``.  For spline
    backgrounds the coefficients are normal around ``spline_center`` with sd
    ``spline_sd`` (default ``2 |center|``).
    """

    family: ModelFamily
    rate_hat: float
    sigma_nu: float
    isn: dict
    eta_mean: float = 0.0
    eta_sd: float = 1.0
    nu3_sd: float = 1.0
    spline_center: tuple | None = None
    spline_sd: tuple | None = None

    def __post_init__(self):
        if not self.rate_hat > 0:
            raise ValueError("observed rate must be positive")
        for name, v in (("sigma_nu", self.sigma_nu), ("eta_sd", self.eta_sd), ("nu3_sd", self.nu3_sd)):
            if not v >= 0:
                raise ValueError(f"{name} must be nonnegative")
        kernel_names = self.family.names[self.family.eta_index + 1:]
        missing = [n for n in kernel_names if n not in self.isn]
        if missing:
            raise ValueError(f"missing ISN prior for {missing}")
        object.__setattr__(self, "isn", {k: (float(m), float(s)) for k, (m, s) in self.isn.items()})
        if any(s < 0 for _, s in self.isn.values()):
            raise ValueError("ISN sd must be nonnegative")
        if self.family.background.kind == "spline":
            if self.spline_center is None:
                raise ValueError("spline prior needs a centre (the imputation estimate)")
            c = tuple(float(v) for v in self.spline_center)
            if len(c) != self.family.background.size:
                raise ValueError("spline centre has the wrong length")
            object.__setattr__(self, "spline_center", c)
            sd = self.spline_sd if self.spline_sd is not None else tuple(2.0 * abs(v) for v in c)
            sd = tuple(float(v) for v in sd)
            if len(sd) != len(c) or any(v < 0 for v in sd):
                raise ValueError("invalid spline prior sd")
            object.__setattr__(self, "spline_sd", sd)

    @property
    def names(self) -> tuple:
        return self.family.names

    @property
    def transforms(self) -> tuple:
        q = self.family.background.size
        k = self.family.dim - q - 1
        return ("identity",) * q + ("logit",) + ("softplus",) * k

    def to_dict(self) -> dict:
        d = {"family": self.family.to_dict(), "rate_hat": float(self.rate_hat),
             "sigma_nu": float(self.sigma_nu), "isn": {k: list(v) for k, v in self.isn.items()},
             "eta_mean": float(self.eta_mean), "eta_sd": float(self.eta_sd),
             "nu3_sd": float(self.nu3_sd)}
        if self.spline_center is not None:
            d["spline_center"] = list(self.spline_center)
            d["spline_sd"] = list(self.spline_sd)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PriorConfig":
        return cls(ModelFamily.from_dict(d["family"]), float(d["rate_hat"]), float(d["sigma_nu"]),
                   {k: tuple(v) for k, v in d["isn"].items()}, float(d.get("eta_mean", 0.0)),
                   float(d.get("eta_sd", 1.0)), float(d.get("nu3_sd", 1.0)),
                   tuple(d["spline_center"]) if d.get("spline_center") is not None else None,
                   tuple(d["spline_sd"]) if d.get("spline_sd") is not None else None)


def sample_eta(mean: float, sd: float, rng: np.random.Generator, size=None):
    eta = sigmoid(rng.normal(mean, sd, size))
    eta = np.minimum(eta, ETA_MAX)
    return eta if size is not None else float(eta)


def sample_nu_given_eta(eta, rate_hat: float, sigma_nu: float, rng: np.random.Generator):
    """``r_hat (1 - eta) + N(0, sigma_nu^2)``, redrawing the noise while ``nu <= 0``."""
    eta = np.asarray(eta, dtype=float)
    scalar = eta.ndim == 0
    eta = np.atleast_1d(eta)
    centre = rate_hat * (1.0 - eta)
    nu = centre + sigma_nu * rng.standard_normal(eta.size)
    bad = np.flatnonzero(nu <= 0)
    tries = 0
    while bad.size:
        tries += 1
        if tries > MAX_REJECTIONS:
            raise RuntimeError("background prior rejected too many draws")
        nu[bad] = centre[bad] + sigma_nu * rng.standard_normal(bad.size)
        bad = bad[nu[bad] <= 0]
    return float(nu[0]) if scalar else nu


def sample_isn(mu: float, sigma: float, rng: np.random.Generator, size=None):
    return softplus(rng.normal(mu, sigma, size)) if size is not None else float(softplus(rng.normal(mu, sigma)))


def _spline_grid(family) -> np.ndarray:
    bg = family.background
    b = PeriodicBSpline(bg.knots, bg.period, bg.order)
    return b.basis(np.linspace(0.0, bg.period, 1001))


def _draw_background(cfg: PriorConfig, eta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    bg = cfg.family.background
    n = eta.size
    if bg.kind == "constant":
        return sample_nu_given_eta(eta, cfg.rate_hat, cfg.sigma_nu, rng)[:, None]
    if bg.kind == "trig":
        nu1 = sample_nu_given_eta(eta, cfg.rate_hat, cfg.sigma_nu, rng)
        nu2 = rng.uniform(0.0, nu1)
        if not bg.cos_term:
            return np.column_stack([nu1, nu2])
        nu3 = cfg.nu3_sd * rng.standard_normal(n)
        bad = np.flatnonzero(np.hypot(nu2, nu3) >= nu1)
        tries = 0
        while bad.size:
            tries += 1
            if tries > MAX_REJECTIONS:
                raise RuntimeError("trigonometric prior rejected too many draws")
            nu3[bad] = cfg.nu3_sd * rng.standard_normal(bad.size)
            bad = bad[np.hypot(nu2[bad], nu3[bad]) >= nu1[bad]]
        return np.column_stack([nu1, nu2, nu3])
    B = _spline_grid(cfg.family)
    c, s = np.array(cfg.spline_center), np.array(cfg.spline_sd)
    out = c + s * rng.standard_normal((n, c.size))
    bad = np.flatnonzero((out @ B.T).min(axis=1) <= SPLINE_MARGIN)
    tries = 0
    while bad.size:
        tries += 1
        if tries > MAX_REJECTIONS:
            raise RuntimeError("spline prior rejected 10^6 consecutive draws")
        out[bad] = c + s * rng.standard_normal((bad.size, c.size))
        bad = bad[(out[bad] @ B.T).min(axis=1) <= SPLINE_MARGIN]
    return out


def draw(cfg: PriorConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` prior rows on the natural scale from one generator."""
    eta = sample_eta(cfg.eta_mean, cfg.eta_sd, rng, n)
    bg = _draw_background(cfg, eta, rng)
    fam = cfg.family
    kernel_names = fam.names[fam.eta_index + 1:]
    kern = [sample_isn(*cfg.isn[k], rng, n) for k in kernel_names]
    return np.column_stack([bg, eta] + kern)


@dataclass(frozen=True, eq=False)
class PriorSample:
    theta: np.ndarray
    scaled: np.ndarray
    names: tuple
    transforms: tuple


def sample_prior(cfg: PriorConfig, M: int, seed: int) -> PriorSample:
    """``M`` rows drawn in blocks of ``BLOCK``, each block on its own substream."""
    if M < 1:
        raise ValueError("M must be at least 1")
    blocks = [draw(cfg, min(BLOCK, M - b * BLOCK), substream(seed, PRIOR, b))
              for b in range((M + BLOCK - 1) // BLOCK)]
    theta = np.vstack(blocks)
    return PriorSample(theta, to_training_scale(theta, cfg.transforms), cfg.names, cfg.transforms)
