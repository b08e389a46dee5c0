"""Amortised neural estimation of Hawkes processes from interval-censored counts."""
from .estimator import (EstimateReport, EstimatorBundle, bootstrap, estimate, fit_estimator,
                        generate_training_set)
from .neural import Mlp, TrainConfig
from .priors import PriorConfig, sample_prior
from .process import (BackgroundFamily, ConstantBackground, EventPath, ExponentialKernel,
                      GammaKernel, HawkesParams, ModelFamily, SplineBackground, TrigBackground)
from .simulate import CountSeries, ObservationGrid, censor, make_grid, simulate_counts, simulate_path
from .summary import SummaryConfig, summary_statistic

__version__ = "0.1.0"
