import numpy as np
import pytest

from hawkesnn.estimator import fit_estimator, generate_training_set
from hawkesnn.harness import save_counts_csv
from hawkesnn.neural import TrainConfig
from hawkesnn.priors import PriorConfig
from hawkesnn.process import BackgroundFamily, ModelFamily
from hawkesnn.simulate import make_grid, simulate_counts
from hawkesnn.summary import SummaryConfig

EXP = ModelFamily(BackgroundFamily(), "exponential")


@pytest.fixture(scope="session")
def tiny_bundle():
    prior = PriorConfig(EXP, 5.0, 0.25, {"beta": (5.0, 3.0)})
    grid = make_grid(100.0, 1.0)
    ts = generate_training_set(prior, grid, SummaryConfig.for_model(EXP.background, "exponential"), 200, 1)
    return fit_estimator(ts, TrainConfig(epochs=10, hidden=(16,)))


@pytest.fixture(scope="session")
def tiny_files(tiny_bundle, tmp_path_factory):
    d = tmp_path_factory.mktemp("tiny")
    tiny_bundle.save(d / "bundle.json")
    counts = simulate_counts(EXP.make(np.array([2.0, 0.6, 2.0])), make_grid(100.0, 1.0), 4)
    save_counts_csv(counts, d / "counts.csv")
    return d


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
