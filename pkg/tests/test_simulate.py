import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hawkesnn.process import (ConstantBackground, EventPath, ExponentialKernel, GammaKernel,
                              HawkesParams, SplineBackground, TrigBackground, intensity,
                              stationary_rate)
from hawkesnn.simulate import (CountSeries, ObservationGrid, censor, gamma_truncation, make_grid,
                               simulate_counts, simulate_path)


def empty_start_mean(nu, eta, mean_lag, T):
    # E N(T) from an empty history: nu T/(1-eta) minus the transient deficit
    return nu * T / (1 - eta) - nu * eta * mean_lag / (1 - eta) ** 2


class TestSimulatePath:
    def test_poisson_counts(self):
        p = HawkesParams(ConstantBackground(2.0), 0.0, ExponentialKernel(2.0))
        n = np.array([len(simulate_path(p, 400.0, s)) for s in range(500)])
        assert abs(n.mean() - 800) < 3 * np.sqrt(800 / 500)
        assert n.var(ddof=1) == pytest.approx(800, rel=0.2)

    def test_exponential_rate(self):
        p = HawkesParams(ConstantBackground(2.0), 0.6, ExponentialKernel(2.0))
        r = np.array([len(simulate_path(p, 400.0, s)) / 400.0 for s in range(500)])
        se = r.std(ddof=1) / np.sqrt(r.size)
        assert stationary_rate(p) == 5.0
        assert abs(r.mean() - empty_start_mean(2.0, 0.6, 2.0, 400.0) / 400.0) < 3 * se

    @pytest.mark.parametrize("method", ["cluster", "thinning"])
    def test_gamma_rate(self, method):
        p = HawkesParams(ConstantBackground(2.0), 0.6, GammaKernel(1.5, 0.25))
        n = np.array([len(simulate_path(p, 200.0, s, method=method)) for s in range(300)])
        se = n.std(ddof=1) / np.sqrt(n.size)
        assert abs(n.mean() - empty_start_mean(2.0, 0.6, 0.375, 200.0)) < 3 * se

    def test_exponential_cluster_agrees_with_thinning(self):
        p = HawkesParams(ConstantBackground(1.0), 0.5, ExponentialKernel(1.5))
        a = np.array([len(simulate_path(p, 300.0, s, method="cluster")) for s in range(300)])
        b = np.array([len(simulate_path(p, 300.0, s, method="thinning")) for s in range(300)])
        se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
        assert abs(a.mean() - b.mean()) < 3 * se

    def test_offspring_lag_distribution(self):
        # eta small: almost all excited events are direct offspring of immigrants
        p = HawkesParams(ConstantBackground(0.05), 0.5, GammaKernel(2.0, 0.5))
        gaps = []
        for s in range(200):
            t = simulate_path(p, 2000.0, s).times
            gaps.extend(np.diff(t)[np.diff(t) < 5.0])
        gaps = np.array(gaps)
        # first-offspring gaps concentrate near the kernel scale, not the immigrant spacing
        assert 0.3 < np.median(gaps) < 2.0

    def test_trig_counts_follow_background(self):
        bg = TrigBackground(5.0, 3.0, 0.0, 100.0, cos_term=False)
        p = HawkesParams(bg, 0.0, ExponentialKernel(1.0))
        grid = make_grid(1000.0, 1.0)
        c = simulate_counts(p, grid, 7)
        assert np.corrcoef(c.counts, bg.rate(grid.midpoints))[0, 1] > 0.5

    def test_spline_counts_follow_background(self):
        bg = SplineBackground((0.0, 2.5, 5.0, 38.0, 52.0), (6.0, 13.0, 1.6, 0.5), 52.0)
        p = HawkesParams(bg, 0.0, ExponentialKernel(1.0))
        grid = make_grid(52.0 * 20, 1.0)
        c = simulate_counts(p, grid, 3)
        assert c.total == pytest.approx(bg.integral(0, grid.horizon), rel=0.05)
        assert np.corrcoef(c.counts, bg.rate(grid.midpoints))[0, 1] > 0.5

    @pytest.mark.parametrize("p", [
        HawkesParams(ConstantBackground(2.0), 0.6, ExponentialKernel(2.0)),
        HawkesParams(TrigBackground(5.0, 3.0, 1.0, 50.0), 0.5, ExponentialKernel(0.25)),
        HawkesParams(ConstantBackground(2.0), 0.6, GammaKernel(1.5, 0.25)),
    ])
    def test_reproducible(self, p):
        a = simulate_path(p, 300.0, 11)
        b = simulate_path(p, 300.0, 11)
        assert a.times.tobytes() == b.times.tobytes()
        assert len(simulate_path(p, 300.0, 12)) != len(a) or not np.array_equal(
            simulate_path(p, 300.0, 12).times, a.times)

    @pytest.mark.parametrize("bg", [ConstantBackground(1.5), TrigBackground(4.0, 2.0, 1.0, 30.0),
                                    SplineBackground((0.0, 2.5, 5.0, 38.0, 52.0),
                                                     (6.0, 13.0, 1.6, 0.5), 52.0)])
    def test_recursive_intensity_matches_direct(self, bg):
        p = HawkesParams(bg, 0.7, ExponentialKernel(0.8))
        path, lams = simulate_path(p, 150.0, 5, return_intensity=True)
        assert len(path) > 50
        direct = np.array([intensity(p, path, t) for t in path.times])
        np.testing.assert_allclose(lams, direct, rtol=0, atol=1e-9)

    def test_gamma_thinning_intensity_matches_direct(self):
        p = HawkesParams(TrigBackground(4.0, 2.0, 1.0, 30.0), 0.6, GammaKernel(1.5, 0.25))
        path, lams = simulate_path(p, 150.0, 5, method="thinning", return_intensity=True)
        direct = np.array([intensity(p, path, t) for t in path.times])
        np.testing.assert_allclose(lams, direct, rtol=1e-9, atol=1e-9)

    def test_path_valid(self):
        p = HawkesParams(ConstantBackground(2.0), 0.9, ExponentialKernel(0.1))
        path = simulate_path(p, 100.0, 1)
        assert np.all(np.diff(path.times) > 0)
        assert path.times[0] > 0 and path.times[-1] <= 100.0

    def test_rejects_bad_input(self):
        p = HawkesParams(ConstantBackground(2.0), 0.5, ExponentialKernel(1.0))
        with pytest.raises(ValueError):
            simulate_path(p, 0.0, 1)
        with pytest.raises(ValueError):
            simulate_path(HawkesParams(ConstantBackground(2.0), 0.5, GammaKernel(0.5, 1.0)), 10.0, 1,
                          method="thinning")

    def test_truncation_lag(self):
        lag = gamma_truncation(1.5, 4.0)
        k = GammaKernel(1.5, 0.25)
        assert float(k.density(lag)) == pytest.approx(1e-12 * float(k.density(k.mode)), rel=1e-6)


class TestGrid:
    def test_regular(self):
        g = make_grid(400.0, 1.0)
        assert g.K == 400 and g.is_regular()

    def test_alternating(self):
        g = make_grid(1000.0, (0.25, 0.75))
        assert g.K == 2000
        np.testing.assert_allclose(g.widths[:4], [0.25, 0.75, 0.25, 0.75])
        assert g.horizon == 1000.0

    def test_single_interval(self):
        np.testing.assert_array_equal(make_grid(1.0, 1.0).times, [0.0, 1.0])

    @pytest.mark.parametrize("w", [0.0, -1.0, (0.5, -0.5)])
    def test_nonpositive(self, w):
        with pytest.raises(ValueError):
            make_grid(10.0, w)

    def test_non_dividing(self):
        with pytest.raises(ValueError):
            make_grid(10.0, 3.0)

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            ObservationGrid(np.array([0.5, 1.0]))
        with pytest.raises(ValueError):
            ObservationGrid(np.array([0.0, 1.0, 1.0]))


class TestCensor:
    def test_empty(self):
        c = censor(EventPath(np.zeros(0), 5.0), make_grid(5.0, 1.0))
        np.testing.assert_array_equal(c.counts, 0)

    def test_half_open(self):
        c = censor(EventPath(np.array([0.05, 0.15, 0.95]), 1.0), ObservationGrid(np.array([0, 0.1, 1.0])))
        np.testing.assert_array_equal(c.counts, [1, 2])

    def test_right_endpoint_inclusive(self):
        c = censor(EventPath(np.array([0.1, 1.0]), 1.0), ObservationGrid(np.array([0, 0.1, 1.0])))
        np.testing.assert_array_equal(c.counts, [1, 1])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(1e-6, 10.0), max_size=200, unique=True),
           st.sampled_from([0.1, 0.5, 1.0, 2.5]))
    def test_conservation(self, times, width):
        path = EventPath(np.sort(times), 10.0)
        c = censor(path, make_grid(10.0, width))
        assert c.total == len(path)

    def test_horizon_mismatch(self):
        with pytest.raises(ValueError):
            censor(EventPath(np.array([1.0]), 5.0), make_grid(4.0, 1.0))

    def test_count_validation(self):
        g = make_grid(2.0, 1.0)
        with pytest.raises(ValueError):
            CountSeries(g, np.array([1, -1]))
        with pytest.raises(ValueError):
            CountSeries(g, np.array([1, 2, 3]))
