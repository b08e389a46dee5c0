"""Fully connected feed-forward network in plain numpy.

The net maps a raw statistic vector to parameters on the training scale:

    x -> input transforms (log/logit/identity) -> standardise -> hidden layers
      -> linear output -> unstandardise

Training minimises the mean squared error on standardised targets with Adam,
halving the step size on validation plateaus and keeping the best-validation
weights.  Everything runs in float64 on one thread, so a fixed seed gives
bit-identical nets.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .priors import TRANSFORMS
from .rng import NN_INIT, NN_SHUFFLE, substream

FORMAT = "hawkesnn-mlp"
VERSION = 1
SD_FLOOR = 1e-12


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z):
    return (z > 0).astype(z.dtype)


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "linear": (lambda z: z, np.ones_like),
}


def apply_transforms(X, tags, inverse: bool = False) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    k = 1 if inverse else 0
    return np.column_stack([TRANSFORMS[t][k](X[:, j]) for j, t in enumerate(tags)])


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    sd: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        sd = X.std(axis=0)
        # constant columns pass through centred
        sd = np.where(sd > SD_FLOOR, sd, 1.0)
        return cls(X.mean(axis=0), sd)

    @classmethod
    def identity(cls, n: int) -> "Standardizer":
        return cls(np.zeros(n), np.ones(n))

    def __call__(self, X):
        return (X - self.mean) / self.sd

    def inverse(self, Z):
        return Z * self.sd + self.mean


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 256
    lr: float = 1e-3
    lr_decay: float = 0.5
    plateau_patience: int = 10
    early_stop_patience: int = 30
    val_fraction: float = 0.1
    seed: int = 0
    hidden: tuple = (128, 128, 128)
    activation: str = "relu"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not 0.0 < self.val_fraction <= 0.5:
            raise ValueError("validation fraction must lie in (0, 0.5]")
        if self.batch_size < 1 or self.lr <= 0:
            raise ValueError("batch size and learning rate must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)


class Mlp:
    """Multilayer perceptron with hidden activations and a linear output."""

    def __init__(self, weights, biases, activations, in_std=None, out_std=None,
                 input_transforms=None, output_transforms=None):
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.activations = tuple(activations)
        if len(self.weights) != len(self.biases) or len(self.activations) != len(self.weights) - 1:
            raise ValueError("layer lists do not line up")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {l}: bad weight/bias shapes {w.shape}, {b.shape}")
            if l and w.shape[0] != self.weights[l - 1].shape[1]:
                raise ValueError(f"layer {l}: input size {w.shape[0]} does not chain")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        s, d = self.sizes[0], self.sizes[-1]
        self.in_std = in_std or Standardizer.identity(s)
        self.out_std = out_std or Standardizer.identity(d)
        if np.any(self.in_std.sd <= 0) or np.any(self.out_std.sd <= 0):
            raise ValueError("standardizer sds must be positive")
        self.input_transforms = tuple(input_transforms or ("identity",) * s)
        self.output_transforms = tuple(output_transforms or ("identity",) * d)
        if len(self.input_transforms) != s or len(self.output_transforms) != d:
            raise ValueError("transform tags do not match layer sizes")

    @classmethod
    def init(cls, sizes, activation: str = "relu", seed: int = 0, **kw) -> "Mlp":
        """He-uniform weights ``U(-sqrt(6/fan_in), sqrt(6/fan_in))``, zero biases."""
        rng = substream(seed, NN_INIT)
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            lim = np.sqrt(6.0 / fan_in)
            ws.append(rng.uniform(-lim, lim, (fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs, (activation,) * (len(sizes) - 2), **kw)

    @property
    def sizes(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    # ---- forward / backward on the standardised scale ----

    def _forward(self, Z):
        pre, post = [], [Z]
        a = Z
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            if l < len(self.activations):
                pre.append(z)
                a = ACTIVATIONS[self.activations[l]][0](z)
                post.append(a)
            else:
                a = z
        return a, pre, post

    def loss_and_grad(self, Z, Yz):
        """Mean squared error over all entries and its gradient."""
        out, pre, post = self._forward(Z)
        n, d = Yz.shape
        r = out - Yz
        loss = float(np.mean(r * r))
        delta = 2.0 * r / (n * d)
        gw = [None] * len(self.weights)
        gb = [None] * len(self.weights)
        for l in range(len(self.weights) - 1, -1, -1):
            gw[l] = post[l].T @ delta
            gb[l] = delta.sum(axis=0)
            if l:
                delta = (delta @ self.weights[l].T) * ACTIVATIONS[self.activations[l - 1]][1](pre[l - 1])
        return loss, gw, gb

    # ---- public prediction ----

    def features(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.sizes[0]:
            raise ValueError(f"expected {self.sizes[0]} inputs, got {X.shape[1]}")
        return self.in_std(apply_transforms(X, self.input_transforms))

    def forward(self, x) -> np.ndarray:
        """Training-scale output for one vector or a batch of rows."""
        single = np.ndim(x) == 1
        out = self.out_std.inverse(self._forward(self.features(x))[0])
        return out[0] if single else out

    def predict(self, x) -> np.ndarray:
        """Output mapped back through the inverse output transforms."""
        single = np.ndim(x) == 1
        z = np.atleast_2d(self.forward(x))
        out = apply_transforms(z, self.output_transforms, inverse=True)
        return out[0] if single else out

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   self.activations, self.in_std, self.out_std,
                   self.input_transforms, self.output_transforms)

    # ---- persistence ----

    def to_dict(self) -> dict:
        body = {
            "sizes": list(self.sizes),
            "activations": list(self.activations),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "in_mean": self.in_std.mean.tolist(), "in_sd": self.in_std.sd.tolist(),
            "out_mean": self.out_std.mean.tolist(), "out_sd": self.out_std.sd.tolist(),
            "input_transforms": list(self.input_transforms),
            "output_transforms": list(self.output_transforms),
        }
        return {"format": FORMAT, "version": VERSION, "checksum": _checksum(body), "body": body}

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        if not isinstance(d, dict) or d.get("format") != FORMAT:
            raise ValueError("not a network file")
        if d.get("version") != VERSION:
            raise ValueError(f"unsupported network file version {d.get('version')!r}")
        body = d.get("body")
        if not isinstance(body, dict) or d.get("checksum") != _checksum(body):
            raise ValueError("network file is corrupt (checksum mismatch)")
        net = cls(body["weights"], body["biases"], body["activations"],
                  Standardizer(np.array(body["in_mean"]), np.array(body["in_sd"])),
                  Standardizer(np.array(body["out_mean"]), np.array(body["out_sd"])),
                  body["input_transforms"], body["output_transforms"])
        if list(net.sizes) != body["sizes"]:
            raise ValueError("network file sizes disagree with its weights")
        return net

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Mlp":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"network file is not valid JSON: {e}") from None
        return cls.from_dict(d)


def _checksum(body: dict) -> str:
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


@dataclass
class History:
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = -1

    def to_dict(self) -> dict:
        return dict(train=self.train, val=self.val, lr=self.lr, best_epoch=self.best_epoch)


class _Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def train(X, Y, cfg: TrainConfig = TrainConfig(), input_transforms=None, output_transforms=None,
          net: Mlp | None = None, log=None) -> tuple[Mlp, History]:
    """Fit a net to rows ``X`` (raw statistics) and ``Y`` (training-scale targets)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must be matrices with the same number of rows")
    M = X.shape[0]
    if M < 100:
        raise ValueError(f"need at least 100 training rows, got {M}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("training data contain NaN or inf")

    rng = substream(cfg.seed, NN_SHUFFLE)
    perm = rng.permutation(M)
    n_val = max(1, int(round(cfg.val_fraction * M)))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]

    s, d = X.shape[1], Y.shape[1]
    if net is None:
        net = Mlp.init((s,) + cfg.hidden + (d,), cfg.activation, cfg.seed,
                       input_transforms=input_transforms, output_transforms=output_transforms)
    F = apply_transforms(X, net.input_transforms)
    if not np.all(np.isfinite(F)):
        raise ValueError("input transforms produced NaN or inf")
    in_std = Standardizer.fit(F[tr_idx])
    out_std = Standardizer.fit(Y[tr_idx])
    net.in_std, net.out_std = in_std, out_std
    Z, Yz = in_std(F), out_std(Y)
    Ztr, Ytr, Zva, Yva = Z[tr_idx], Yz[tr_idx], Z[val_idx], Yz[val_idx]
    # a constant target is predicted exactly by its mean: its output unit is
    # pinned to zero on the standardised scale and never updated
    fixed = Y[tr_idx].std(axis=0) <= SD_FLOOR
    net.weights[-1][:, fixed] = 0.0
    net.biases[-1][fixed] = 0.0

    params = net.weights + net.biases
    opt = _Adam(params, cfg.lr)
    hist = History()
    best, best_loss = net.copy(), np.inf
    since_best = since_decay = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(Ztr.shape[0])
        for k in range(0, order.size, cfg.batch_size):
            b = order[k:k + cfg.batch_size]
            loss, gw, gb = net.loss_and_grad(Ztr[b], Ytr[b])
            gw[-1][:, fixed] = 0.0
            gb[-1][fixed] = 0.0
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"training loss became {loss} at epoch {epoch}; the learning rate "
                    f"{opt.lr:g} is probably too high")
            opt.step(params, gw + gb)
        tr_loss = float(np.mean((net._forward(Ztr)[0] - Ytr) ** 2))
        va_loss = float(np.mean((net._forward(Zva)[0] - Yva) ** 2))
        if not (np.isfinite(tr_loss) and np.isfinite(va_loss)):
            raise FloatingPointError(f"loss became non-finite at epoch {epoch}; lower the learning rate")
        hist.train.append(tr_loss)
        hist.val.append(va_loss)
        hist.lr.append(opt.lr)
        if log:
            log(f"epoch {epoch:4d}  train {tr_loss:.5f}  val {va_loss:.5f}  lr {opt.lr:.2e}")
        if va_loss < best_loss:
            best_loss, best, hist.best_epoch = va_loss, net.copy(), epoch
            since_best = since_decay = 0
        else:
            since_best += 1
            since_decay += 1
            if since_best >= cfg.early_stop_patience:
                break
            if since_decay >= cfg.plateau_patience:
                opt.lr *= cfg.lr_decay
                since_decay = 0
    return best, hist


def gradient_check(net: Mlp, x, y, h: float = 1e-5) -> float:
    """Max relative error between backprop and central differences over all weights.

    ``x`` and ``y`` are taken on the standardised scale.
    """
    Z = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    _, gw, gb = net.loss_and_grad(Z, Y)
    worst = 0.0
    for params, grads in ((net.weights, gw), (net.biases, gb)):
        for p, g in zip(params, grads):
            it = np.nditer(p, flags=["multi_index"])
            for _ in it:
                i = it.multi_index
                old = p[i]
                p[i] = old + h
                up = net.loss_and_grad(Z, Y)[0]
                p[i] = old - h
                down = net.loss_and_grad(Z, Y)[0]
                p[i] = old
                num = (up - down) / (2.0 * h)
                scale = max(abs(num), abs(g[i]), 1e-8)
                worst = max(worst, abs(num - g[i]) / scale)
    return worst
