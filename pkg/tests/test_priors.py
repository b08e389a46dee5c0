import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from hawkesnn.priors import (PriorConfig, from_training_scale, logit, sample_eta, sample_isn,
                             sample_nu_given_eta, sample_prior, sigmoid, softplus, softplus_inv,
                             to_training_scale)
from hawkesnn.process import BackgroundFamily, ModelFamily
from hawkesnn.spline import PeriodicBSpline

EXP = ModelFamily(BackgroundFamily(), "exponential")
KNOTS = (0.0, 2.5, 5.0, 38.0, 52.0)


def isn_moments(mu, sigma):
    f = lambda z: softplus(z) * stats.norm.pdf(z, mu, sigma)
    m = integrate.quad(f, mu - 12 * sigma, mu + 12 * sigma)[0]
    v = integrate.quad(lambda z: (softplus(z) - m) ** 2 * stats.norm.pdf(z, mu, sigma),
                       mu - 12 * sigma, mu + 12 * sigma)[0]
    return m, v


class TestTransforms:
    def test_softplus_zero(self):
        assert softplus(0.0) == pytest.approx(math.log(2), abs=1e-15)

    def test_softplus_round_trip(self):
        x = np.linspace(-20, 20, 4001)
        np.testing.assert_allclose(softplus_inv(softplus(x)), x, rtol=0, atol=1e-12)

    def test_logit_round_trip(self):
        # sigmoid rounds towards 1 for large x, so that direction is only
        # well conditioned on the negative half-line
        x = np.linspace(-20, 0, 2001)
        np.testing.assert_allclose(logit(sigmoid(x)), x, rtol=0, atol=1e-12)
        p = np.linspace(1e-6, 1 - 1e-6, 999)
        np.testing.assert_allclose(sigmoid(logit(p)), p, rtol=0, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(-20, 20))
    def test_softplus_positive_and_invertible(self, x):
        y = float(softplus(x))
        assert y > 0
        assert float(softplus_inv(y)) == pytest.approx(x, abs=1e-12)

    def test_training_scale_round_trip(self):
        theta = np.array([[2.0, 0.6, 1.5], [0.1, 0.01, 40.0]])
        tags = ("identity", "logit", "softplus")
        np.testing.assert_allclose(from_training_scale(to_training_scale(theta, tags), tags), theta,
                                   rtol=1e-12)


class TestSamplers:
    def test_eta_median(self):
        eta = sample_eta(0.0, 1.0, np.random.default_rng(0), 100_000)
        assert abs(np.median(eta) - 0.5) < 0.01
        assert np.all((eta > 0) & (eta < 1))

    def test_eta_zero_sd(self):
        eta = sample_eta(0.4, 0.0, np.random.default_rng(0), 10)
        np.testing.assert_array_equal(eta, float(sigmoid(0.4)))

    def test_nu_band(self):
        rng = np.random.default_rng(1)
        eta = sample_eta(0.0, 1.0, rng, 100_000)
        nu = sample_nu_given_eta(eta, 5.225, 0.25, rng)
        assert np.all(nu > 0)
        near = np.abs(eta - 0.6) < 0.01
        assert np.mean(nu[near]) == pytest.approx(2.09, abs=0.03)
        resid = nu - 5.225 * (1 - eta)
        assert resid.std() == pytest.approx(0.25, rel=0.02)

    def test_nu_zero_sd(self):
        eta = np.array([0.1, 0.5, 0.9])
        np.testing.assert_array_equal(sample_nu_given_eta(eta, 4.0, 0.0, np.random.default_rng(0)),
                                      4.0 * (1 - eta))

    def test_nu_rejection(self):
        nu = sample_nu_given_eta(np.full(10_000, 0.99), 1.0, 0.5, np.random.default_rng(2))
        assert np.all(nu > 0)

    def test_isn_moments(self):
        a = sample_isn(5.0, 3.0, np.random.default_rng(3), 200_000)
        m, v = isn_moments(5.0, 3.0)
        se = math.sqrt(v / a.size)
        assert abs(a.mean() - m) < 4 * se
        assert a.var() == pytest.approx(v, rel=0.03)
        # "approximately 5" and about 8
        assert m == pytest.approx(5.0, rel=0.05) and v == pytest.approx(8.0, rel=0.05)
        assert np.all(a > 0)

    def test_isn_more_mass_near_zero_than_gamma(self):
        m, v = isn_moments(5.0, 3.0)
        g = stats.gamma(m * m / v, scale=v / m)
        a = sample_isn(5.0, 3.0, np.random.default_rng(4), 200_000)
        assert np.mean(a < 0.5) > g.cdf(0.5)


class TestSamplePrior:
    def test_exponential_shape_and_scale(self):
        cfg = PriorConfig(EXP, 5.225, 0.25, {"beta": (5.0, 3.0)})
        s = sample_prior(cfg, 5000, 1)
        assert s.theta.shape == (5000, 3) and s.names == ("nu", "eta", "beta")
        np.testing.assert_allclose(s.scaled, to_training_scale(s.theta, s.transforms))
        assert np.all(s.theta > 0) and np.all(s.theta[:, 1] < 1)
        for row in s.theta[:50]:
            EXP.make(row)

    def test_deterministic(self):
        cfg = PriorConfig(EXP, 5.0, 0.25, {"beta": (5.0, 3.0)})
        a, b = sample_prior(cfg, 5000, 7), sample_prior(cfg, 5000, 7)
        assert a.theta.tobytes() == b.theta.tobytes()
        assert not np.array_equal(a.theta, sample_prior(cfg, 5000, 8).theta)

    def test_transformed_marginals_normal(self):
        fam = ModelFamily(BackgroundFamily(), "gamma")
        cfg = PriorConfig(fam, 5.0, 0.25, {"alpha": (1.5, 1.5), "beta": (-1.0, 1.5)})
        z = sample_prior(cfg, 100_000, 2).scaled
        for j in (1, 2, 3):
            assert abs(stats.skew(z[:, j])) < 0.05
            assert abs(stats.kurtosis(z[:, j])) < 0.1

    def test_trig_support(self):
        fam = ModelFamily(BackgroundFamily("trig", 52.0, cos_term=False), "gamma")
        cfg = PriorConfig(fam, 10.0, 1.0, {"alpha": (1.5, 1.5), "beta": (-1.0, 1.5)})
        th = sample_prior(cfg, 20_000, 3).theta
        assert np.all((0 < th[:, 1]) & (th[:, 1] < th[:, 0]))

    def test_trig_cos_term_positive_rate(self):
        fam = ModelFamily(BackgroundFamily("trig", 52.0), "exponential")
        cfg = PriorConfig(fam, 10.0, 1.0, {"beta": (0.0, 2.0)}, nu3_sd=3.0)
        th = sample_prior(cfg, 5000, 3).theta
        assert np.all(np.hypot(th[:, 1], th[:, 2]) < th[:, 0])

    def test_spline_positive(self):
        fam = ModelFamily(BackgroundFamily("spline", 52.0, KNOTS), "exponential")
        cfg = PriorConfig(fam, 5.0, 0.5, {"beta": (0.0, 2.0)}, spline_center=(6.0, 13.0, 1.6, 0.5))
        th = sample_prior(cfg, 3000, 4).theta
        for row in th:
            fam.make(row)
        B = PeriodicBSpline(KNOTS, 52.0).basis(np.linspace(0, 52.0, 1001))
        assert (th[:, :4] @ B.T).min() > 0
        assert cfg.spline_sd == (12.0, 26.0, 3.2, 1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            PriorConfig(EXP, 0.0, 0.25, {"beta": (5.0, 3.0)})
        with pytest.raises(ValueError):
            PriorConfig(EXP, 1.0, 0.25, {})
        with pytest.raises(ValueError):
            sample_prior(PriorConfig(EXP, 1.0, 0.25, {"beta": (5.0, 3.0)}), 0, 1)

    def test_config_round_trip(self):
        fam = ModelFamily(BackgroundFamily("spline", 52.0, KNOTS), "gamma")
        cfg = PriorConfig(fam, 5.0, 0.5, {"alpha": (1.5, 1.5), "beta": (0.0, 2.0)},
                          spline_center=(6.0, 13.0, 1.6, 0.5))
        assert PriorConfig.from_dict(cfg.to_dict()) == cfg
