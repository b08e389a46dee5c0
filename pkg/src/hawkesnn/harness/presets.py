"""Built-in study configurations (desk scale)."""
from __future__ import annotations

from .config import StudyConfig

_GAMMA_ISN = {"alpha": [1.5, 1.5], "beta": [-1.0, 1.5]}

PRESETS = {
    # exponential kernel, constant background, T = 400
    "table1": {
        "model": {"background": {"kind": "constant"}, "kernel": "exponential"},
        "truth": [2.0, 0.6, 2.0],
        "grid": {"horizon": 400.0, "width": 1.0},
        "prior": {"sigma_nu": 0.25, "isn": {"beta": [5.0, 3.0]}},
    },
    # Gamma(1.5, 0.25) kernel, p = 1 / width
    "table2": {
        "model": {"background": {"kind": "constant"}, "kernel": "gamma"},
        "truth": [2.0, 0.6, 1.5, 0.25],
        "grid": {"horizon": 1000.0, "width": 0.5},
        "prior": {"isn": _GAMMA_ISN},
        "summary": {"p": 2},
    },
    # lag sweep with Gamma(1.5, 1.0) at width 0.1; no bootstrap
    "table3": {
        "model": {"background": {"kind": "constant"}, "kernel": "gamma"},
        "truth": [2.0, 0.6, 1.5, 1.0],
        "grid": {"horizon": 1000.0, "width": 0.1},
        "prior": {"isn": _GAMMA_ISN},
        "summary": {"p": [3, 12, 48]},
        "B": 0,
    },
    # sine background with period 100 and an exponential kernel; no bootstrap
    "table5": {
        "model": {"background": {"kind": "trig", "period": 100.0, "cos_term": False},
                  "kernel": "exponential"},
        "truth": [5.0, 3.0, 0.6, 0.25],
        "grid": {"horizon": 1000.0, "width": 1.0},
        "prior": {"isn": {"beta": [0.0, 2.0]}},
        "B": 0,
    },
    # alternating widths 0.25 / 0.75 with Gamma(1.5, 0.25), p = 10
    "table9": {
        "model": {"background": {"kind": "constant"}, "kernel": "gamma"},
        "truth": [2.0, 0.6, 1.5, 0.25],
        "grid": {"horizon": 1000.0, "widths": [0.25, 0.75]},
        "prior": {"isn": _GAMMA_ISN},
        "summary": {"p": 10, "offset_mode": "interval-width"},
    },
    # tiny run for smoke tests
    "smoke": {
        "model": {"background": {"kind": "constant"}, "kernel": "exponential"},
        "truth": [2.0, 0.6, 2.0],
        "grid": {"horizon": 100.0, "width": 1.0},
        "prior": {"sigma_nu": 0.25, "isn": {"beta": [5.0, 3.0]}},
        "M": 500, "J": 10, "B": 10,
        "train": {"epochs": 20, "hidden": [32, 32]},
    },
}


def preset(name: str, **overrides) -> StudyConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    d = {"name": name, "seed": 1, **PRESETS[name]}
    d.update(overrides)
    return StudyConfig.from_dict(d)
