"""Hawkes process parameters: excitation kernels, background rates, intensity."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import special

from .spline import DEFAULT_ORDER, PeriodicBSpline

TWO_PI = 2.0 * np.pi
SIMPSON_POINTS = 1024


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentialKernel:
    """Exponential density with mean (scale) ``beta``."""

    beta: float

    kind = "exponential"
    names = ("beta",)

    def __post_init__(self):
        if not np.isfinite(self.beta) or self.beta <= 0:
            raise ValueError(f"exponential scale must be positive, got {self.beta}")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.beta], dtype=float)

    @property
    def rate(self) -> float:
        return 1.0 / self.beta

    @property
    def mean(self) -> float:
        return self.beta

    def density(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t > 0, np.exp(-np.maximum(t, 0.0) / self.beta) / self.beta, 0.0)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return -np.expm1(-np.maximum(t, 0.0) / self.beta)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {"beta": float(self.beta)}}


@dataclass(frozen=True)
class GammaKernel:
    """Gamma density with shape ``alpha`` and scale ``beta``."""

    alpha: float
    beta: float

    kind = "gamma"
    names = ("alpha", "beta")

    def __post_init__(self):
        for name in self.names:
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"gamma kernel {name} must be positive, got {v}")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.alpha, self.beta], dtype=float)

    @property
    def rate(self) -> float:
        return 1.0 / self.beta

    @property
    def mean(self) -> float:
        return self.alpha * self.beta

    @property
    def mode(self) -> float:
        return max(self.alpha - 1.0, 0.0) * self.beta

    def density(self, t):
        t = np.asarray(t, dtype=float)
        pos = t > 0
        tt = np.where(pos, t, 1.0)
        logd = ((self.alpha - 1.0) * np.log(tt) - tt / self.beta
                - self.alpha * np.log(self.beta) - special.gammaln(self.alpha))
        return np.where(pos, np.exp(logd), 0.0)

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        return special.gammainc(self.alpha, np.maximum(t, 0.0) / self.beta)

    def to_dict(self) -> dict:
        return {"kind": self.kind,
                "params": {"alpha": float(self.alpha), "beta": float(self.beta)}}


KERNELS = {"exponential": ExponentialKernel, "gamma": GammaKernel}


def kernel_from_dict(d: dict):
    kind = d["kind"]
    if kind not in KERNELS:
        raise ValueError(f"unknown kernel kind {kind!r}")
    return KERNELS[kind](**{k: float(v) for k, v in d["params"].items()})


# ---------------------------------------------------------------------------
# Backgrounds.  Every background is linear in its parameters,
# nu(t) = params . design(t), which the likelihood code relies on.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantBackground:
    nu: float

    kind = "constant"
    period = None

    def __post_init__(self):
        if not np.isfinite(self.nu) or self.nu <= 0:
            raise ValueError(f"background rate must be positive, got {self.nu}")

    @property
    def params(self) -> np.ndarray:
        return np.array([self.nu], dtype=float)

    @property
    def names(self) -> tuple:
        return ("nu",)

    def rate(self, t):
        return np.full(np.shape(t), self.nu) if np.ndim(t) else float(self.nu)

    def design(self, t) -> np.ndarray:
        return np.ones((np.size(t), 1))

    def integral_design(self, a: float, b: float) -> np.ndarray:
        return np.array([b - a], dtype=float)

    def integral(self, a: float, b: float) -> float:
        return self.nu * (b - a)

    def time_average(self) -> float:
        return self.nu

    def window_bounds(self, nwin: int) -> np.ndarray:
        return np.full(nwin, self.nu)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {"nu": float(self.nu)}}


@dataclass(frozen=True)
class TrigBackground:
    """``nu1 + nu2 sin(2 pi t / period) + nu3 cos(2 pi t / period)``.

    With ``cos_term=False`` the cosine coefficient is fixed at zero and is not
    a free parameter.
    """

    nu1: float
    nu2: float
    nu3: float = 0.0
    period: float = 100.0
    cos_term: bool = True

    kind = "trig"

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be positive")
        if not self.cos_term and self.nu3 != 0.0:
            raise ValueError("nu3 must be zero when the cosine term is disabled")
        vals = (self.nu1, self.nu2, self.nu3)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("non-finite background coefficient")
        if self.min_rate() <= 0:
            raise ValueError("trigonometric background is not strictly positive")

    @property
    def params(self) -> np.ndarray:
        if self.cos_term:
            return np.array([self.nu1, self.nu2, self.nu3], dtype=float)
        return np.array([self.nu1, self.nu2], dtype=float)

    @property
    def names(self) -> tuple:
        return ("nu1", "nu2", "nu3") if self.cos_term else ("nu1", "nu2")

    @property
    def amplitude(self) -> float:
        return float(np.hypot(self.nu2, self.nu3))

    def min_rate(self) -> float:
        # exact minimum; the dense-grid check is kept as a cross-check in tests
        return self.nu1 - self.amplitude

    def rate(self, t):
        w = TWO_PI * np.asarray(t, dtype=float) / self.period
        v = self.nu1 + self.nu2 * np.sin(w) + self.nu3 * np.cos(w)
        return v if np.ndim(t) else float(v)

    def design(self, t) -> np.ndarray:
        w = TWO_PI * np.atleast_1d(np.asarray(t, dtype=float)) / self.period
        cols = [np.ones_like(w), np.sin(w)]
        if self.cos_term:
            cols.append(np.cos(w))
        return np.column_stack(cols)

    def integral_design(self, a: float, b: float) -> np.ndarray:
        c = self.period / TWO_PI
        wa, wb = TWO_PI * a / self.period, TWO_PI * b / self.period
        out = [b - a, c * (np.cos(wa) - np.cos(wb))]
        if self.cos_term:
            out.append(c * (np.sin(wb) - np.sin(wa)))
        return np.array(out, dtype=float)

    def integral(self, a: float, b: float) -> float:
        return float(self.params @ self.integral_design(a, b))

    def time_average(self) -> float:
        return _simpson_period_average(self.rate, self.period)

    def window_bounds(self, nwin: int) -> np.ndarray:
        # grid max plus Lipschitz slack is a guaranteed upper bound
        h = self.period / nwin
        grid = np.linspace(0.0, h, 65)
        slack = self.amplitude * TWO_PI / self.period * (grid[1] - grid[0])
        return np.array([self.rate(w * h + grid).max() + slack for w in range(nwin)])

    def to_dict(self) -> dict:
        p = {"nu1": float(self.nu1), "nu2": float(self.nu2)}
        if self.cos_term:
            p["nu3"] = float(self.nu3)
        return {"kind": self.kind, "params": p, "period": float(self.period)}


@dataclass(frozen=True)
class SplineBackground:
    """Periodic B-spline background ``sum_i coeffs[i] B_i(t)``."""

    knots: tuple
    coeffs: tuple
    period: float
    order: int = DEFAULT_ORDER
    check_grid: int = field(default=1000, repr=False, compare=False)

    kind = "spline"

    def __post_init__(self):
        object.__setattr__(self, "knots", tuple(float(k) for k in self.knots))
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if len(self.coeffs) != self.basis.n:
            raise ValueError(f"expected {self.basis.n} spline coefficients, got {len(self.coeffs)}")
        if not all(np.isfinite(self.coeffs)):
            raise ValueError("non-finite spline coefficient")
        if self.min_rate() <= 0:
            raise ValueError("spline background is not strictly positive")

    @cached_property
    def basis(self) -> PeriodicBSpline:
        return PeriodicBSpline(self.knots, self.period, self.order)

    @property
    def params(self) -> np.ndarray:
        return np.array(self.coeffs, dtype=float)

    @property
    def names(self) -> tuple:
        return tuple(f"nu{i + 1}" for i in range(len(self.coeffs)))

    def min_rate(self) -> float:
        grid = np.linspace(0.0, self.period, self.check_grid + 1)
        return float(self.rate(grid).min())

    def rate(self, t):
        return self.basis(self.params, t)

    def design(self, t) -> np.ndarray:
        return self.basis.basis(np.atleast_1d(np.asarray(t, dtype=float)))

    def integral_design(self, a: float, b: float) -> np.ndarray:
        return self.basis.integrals(a, b)

    def integral(self, a: float, b: float) -> float:
        return float(self.params @ self.integral_design(a, b))

    def time_average(self) -> float:
        return _simpson_period_average(self.rate, self.period)

    def window_bounds(self, nwin: int) -> np.ndarray:
        h = self.period / nwin
        return np.array([self.basis.convex_hull_bound(self.params, w * h, (w + 1) * h)
                         for w in range(nwin)])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": {"coeffs": [float(c) for c in self.coeffs]},
                "period": float(self.period), "knots": [float(k) for k in self.knots],
                "order": int(self.order)}


def _simpson_period_average(f, period: float) -> float:
    x = np.linspace(0.0, period, SIMPSON_POINTS + 1)
    y = f(x)
    h = period / SIMPSON_POINTS
    s = y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()
    return float(s * h / 3.0 / period)


def background_volume(bg, t0, t1):
    """Midpoint-rule volume ``nu((t0 + t1) / 2) (t1 - t0)``; vectorised over arrays."""
    t0 = np.asarray(t0, dtype=float)
    t1 = np.asarray(t1, dtype=float)
    if np.any(t1 <= t0):
        raise ValueError("need t1 > t0")
    v = np.asarray(bg.rate(0.5 * (t0 + t1))) * (t1 - t0)
    return v if v.ndim else float(v)


def background_from_dict(d: dict):
    kind = d["kind"]
    p = d.get("params", {})
    if kind == "constant":
        return ConstantBackground(float(p["nu"]))
    if kind == "trig":
        period = float(d.get("period", p.get("period", 100.0)))
        if "nu3" in p:
            return TrigBackground(float(p["nu1"]), float(p["nu2"]), float(p["nu3"]), period)
        return TrigBackground(float(p["nu1"]), float(p["nu2"]), 0.0, period, cos_term=False)
    if kind == "spline":
        return SplineBackground(tuple(d["knots"]), tuple(p["coeffs"]), float(d["period"]),
                                int(d.get("order", DEFAULT_ORDER)))
    raise ValueError(f"unknown background kind {kind!r}")


# ---------------------------------------------------------------------------
# Families: the parameter layout shared by priors, fits and the network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BackgroundFamily:
    kind: str = "constant"
    period: float | None = None
    knots: tuple | None = None
    cos_term: bool = True
    order: int = DEFAULT_ORDER

    def __post_init__(self):
        if self.kind not in ("constant", "trig", "spline"):
            raise ValueError(f"unknown background kind {self.kind!r}")
        if self.kind != "constant" and not (self.period and self.period > 0):
            raise ValueError(f"{self.kind} background needs a positive period")
        if self.kind == "spline":
            if self.knots is None:
                raise ValueError("spline background needs knots")
            object.__setattr__(self, "knots", tuple(float(k) for k in self.knots))

    @property
    def names(self) -> tuple:
        if self.kind == "constant":
            return ("nu",)
        if self.kind == "trig":
            return ("nu1", "nu2", "nu3") if self.cos_term else ("nu1", "nu2")
        n = PeriodicBSpline(self.knots, self.period, self.order).n
        return tuple(f"nu{i + 1}" for i in range(n))

    @property
    def size(self) -> int:
        return len(self.names)

    def make(self, values):
        v = [float(x) for x in values]
        if self.kind == "constant":
            return ConstantBackground(v[0])
        if self.kind == "trig":
            if self.cos_term:
                return TrigBackground(v[0], v[1], v[2], self.period)
            return TrigBackground(v[0], v[1], 0.0, self.period, cos_term=False)
        return SplineBackground(self.knots, tuple(v), self.period, self.order)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.period is not None:
            d["period"] = float(self.period)
        if self.kind == "trig":
            d["cos_term"] = bool(self.cos_term)
        if self.kind == "spline":
            d["knots"] = list(self.knots)
            d["order"] = int(self.order)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BackgroundFamily":
        knots = d.get("knots")
        return cls(kind=d.get("kind", "constant"), period=d.get("period"),
                   knots=tuple(knots) if knots is not None else None,
                   cos_term=bool(d.get("cos_term", True)), order=int(d.get("order", DEFAULT_ORDER)))

    @classmethod
    def of(cls, bg) -> "BackgroundFamily":
        if bg.kind == "constant":
            return cls()
        if bg.kind == "trig":
            return cls("trig", bg.period, cos_term=bg.cos_term)
        return cls("spline", bg.period, tuple(bg.knots), order=bg.order)


@dataclass(frozen=True)
class ModelFamily:
    background: BackgroundFamily = BackgroundFamily()
    kernel: str = "exponential"

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel kind {self.kernel!r}")

    @property
    def names(self) -> tuple:
        return self.background.names + ("eta",) + KERNELS[self.kernel].names

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def eta_index(self) -> int:
        return self.background.size

    def make(self, vec) -> "HawkesParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} parameters, got shape {vec.shape}")
        q = self.background.size
        kernel = KERNELS[self.kernel](*vec[q + 1:])
        return HawkesParams(self.background.make(vec[:q]), float(vec[q]), kernel)

    def to_dict(self) -> dict:
        return {"background": self.background.to_dict(), "kernel": self.kernel}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelFamily":
        return cls(BackgroundFamily.from_dict(d.get("background", {})), d.get("kernel", "exponential"))


# ---------------------------------------------------------------------------
# Parameters and paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HawkesParams:
    background: object
    eta: float
    kernel: object

    def __post_init__(self):
        if not (0.0 <= self.eta < 1.0):
            raise ValueError(f"branching ratio must lie in [0, 1), got {self.eta}")

    @property
    def family(self) -> ModelFamily:
        return ModelFamily(BackgroundFamily.of(self.background), self.kernel.kind)

    @property
    def names(self) -> tuple:
        return tuple(self.background.names) + ("eta",) + tuple(self.kernel.names)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.background.params, [self.eta], self.kernel.params])

    @property
    def dim(self) -> int:
        return self.vector.size

    def to_dict(self) -> dict:
        return {"background": self.background.to_dict(), "eta": float(self.eta),
                "kernel": self.kernel.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "HawkesParams":
        return cls(background_from_dict(d["background"]), float(d["eta"]),
                   kernel_from_dict(d["kernel"]))


@dataclass(frozen=True, eq=False)
class EventPath:
    times: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if t.ndim != 1:
            raise ValueError("times must be one-dimensional")
        if t.size:
            if t[0] <= 0 or t[-1] > self.horizon:
                raise ValueError("event times must lie in (0, horizon]")
            if np.any(np.diff(t) <= 0):
                raise ValueError("event times must be strictly increasing")

    def __len__(self) -> int:
        return self.times.size


def intensity(params: HawkesParams, path: EventPath, t: float) -> float:
    """Conditional intensity at ``t`` using the events strictly before ``t``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    past = path.times[path.times < t]
    lam = float(params.background.rate(float(t)))
    if params.eta > 0 and past.size:
        lam += params.eta * float(np.sum(params.kernel.density(t - past)))
    return lam


def stationary_rate(params: HawkesParams) -> float:
    """Long-run event rate: time-averaged background over ``1 - eta``."""
    if not params.eta < 1:
        raise ValueError("stationary rate requires eta < 1")
    return params.background.time_average() / (1.0 - params.eta)


def spline_basis(order: int, knots, period: float, t) -> np.ndarray:
    """Periodic B-spline basis weights at ``t``."""
    return PeriodicBSpline(knots, period, order).basis(t)
