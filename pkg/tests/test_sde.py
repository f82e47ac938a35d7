import math

import numpy as np
import pytest
from scipy.integrate import quad

from sdehawkes import (
    Constant,
    ExpLangevin,
    GapSeries,
    Gbm,
    IidGamma,
    gaps_from_events,
    EventSequence,
    exp_langevin_step,
    exp_langevin_transition_logpdf,
    gbm_step,
    gbm_transition_logpdf,
    sample_path,
)


class TestGbmStep:
    def test_zero_drift_zero_noise_is_identity(self):
        assert gbm_step(2.0, 1.0, 0.0, 1.0, 0.0) == pytest.approx(2.0)

    def test_pure_drift(self):
        assert gbm_step(1.0, 2.0, 0.5, 1e-12, 0.0) == pytest.approx(math.e)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            gbm_step(0.0, 1.0, 0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            gbm_step(1.0, 0.0, 0.0, 1.0, 0.0)

    def test_log_increment_mean(self, rng):
        mu, sigma2, dt, n = 0.3, 0.49, 1.7, 100_000
        eps = rng.standard_normal(n)
        y = gbm_step(2.0, dt, mu, sigma2, eps)
        inc = np.log(y / 2.0)
        tol = 4.0 * math.sqrt(sigma2 * dt / n)
        assert abs(inc.mean() - mu * dt) < tol

    def test_composition_over_partition_matches_in_distribution(self, rng):
        # one jump over dt vs four chained sub-steps: same first two moments
        # of log Y, the transition being exact at any gap
        mu, sigma2, dt, n = 0.2, 0.25, 1.0, 100_000
        one = np.log(gbm_step(1.0, dt, mu, sigma2, rng.standard_normal(n)))
        y = np.ones(n)
        for _ in range(4):
            y = gbm_step(y, dt / 4, mu, sigma2, rng.standard_normal(n))
        split = np.log(y)
        se_mean = math.sqrt(2.0 * sigma2 * dt / n)
        assert abs(one.mean() - split.mean()) < 4.0 * se_mean
        assert split.var() / one.var() == pytest.approx(1.0, abs=0.05)


class TestGbmLogpdf:
    def test_standard_normal_point(self):
        val = gbm_transition_logpdf(1.0, 1.0, 1.0, 0.0, 1.0)
        assert val == pytest.approx(-0.5 * math.log(2.0 * math.pi))

    def test_mode_in_log_space(self):
        y_prev, dt, mu, s2 = 1.7, 0.8, 0.4, 0.3
        x_star = math.log(y_prev) + mu * dt

        def logdens_logspace(x):
            return gbm_transition_logpdf(y_prev, math.exp(x), dt, mu, s2) + x

        center = logdens_logspace(x_star)
        assert center > logdens_logspace(x_star - 0.1)
        assert center > logdens_logspace(x_star + 0.1)

    def test_normalization(self):
        y_prev, dt, mu, s2 = 0.9, 1.3, -0.2, 0.5
        total, _ = quad(
            lambda y: math.exp(gbm_transition_logpdf(y_prev, y, dt, mu, s2)),
            0.0,
            np.inf,
            limit=200,
        )
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_neg_inf_for_nonpositive_levels(self):
        assert gbm_transition_logpdf(1.0, 0.0, 1.0, 0.0, 1.0) == -math.inf
        assert gbm_transition_logpdf(1.0, -2.0, 1.0, 0.0, 1.0) == -math.inf


class TestExpLangevinStep:
    def test_full_reversion_hits_asymptotic_mean(self):
        val = exp_langevin_step(3.0, 1000.0, 5.0, -0.7, 0.4, 0.0)
        assert val == pytest.approx(math.exp(-0.7))

    def test_tiny_gap_freezes_state(self):
        val = exp_langevin_step(3.0, 1e-12, 1.0, 5.0, 0.4, 0.0)
        assert val == pytest.approx(3.0, rel=1e-9)

    def test_rejects_nonpositive_reversion(self):
        with pytest.raises(ValueError):
            exp_langevin_step(1.0, 1.0, 0.0, 0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            exp_langevin_step(1.0, 1.0, -1.0, 0.0, 1.0, 0.0)

    def test_conditional_moments(self, rng):
        k, mu, s2, dt, n = 1.3, 0.4, 0.36, 0.9, 100_000
        y_prev = 2.0
        phi = math.exp(-k * dt)
        y = exp_langevin_step(y_prev, dt, k, mu, s2, rng.standard_normal(n))
        ly = np.log(y)
        expected_mean = phi * math.log(y_prev) + mu * (1 - phi)
        expected_var = s2 * (1 - phi**2) / (2 * k)
        assert abs(ly.mean() - expected_mean) < 4 * math.sqrt(expected_var / n)
        assert ly.var() == pytest.approx(expected_var, rel=0.05)


class TestExpLangevinLogpdf:
    def test_normalization(self):
        total, _ = quad(
            lambda y: math.exp(
                exp_langevin_transition_logpdf(1.4, y, 0.7, 1.1, 0.3, 0.5)
            ),
            0.0,
            np.inf,
            limit=200,
        )
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_long_gap_forgets_start(self):
        # phi -> 0: stationary lognormal, independent of y_prev
        k, mu, s2 = 0.8, 0.2, 0.5
        a = exp_langevin_transition_logpdf(0.3, 1.1, 500.0, k, mu, s2)
        b = exp_langevin_transition_logpdf(9.0, 1.1, 500.0, k, mu, s2)
        assert a == pytest.approx(b, rel=1e-12)
        stat_var = s2 / (2 * k)
        x = math.log(1.1)
        expected = (
            -0.5 * (math.log(2 * math.pi * stat_var) + (x - mu) ** 2 / stat_var) - x
        )
        assert a == pytest.approx(expected)

    def test_mode_in_log_space(self):
        y_prev, dt, k, mu, s2 = 2.2, 0.6, 1.1, -0.3, 0.4
        phi = math.exp(-k * dt)
        x_star = phi * math.log(y_prev) + mu * (1 - phi)

        def logdens_logspace(x):
            return exp_langevin_transition_logpdf(y_prev, math.exp(x), dt, k, mu, s2) + x

        center = logdens_logspace(x_star)
        assert center > logdens_logspace(x_star - 0.1)
        assert center > logdens_logspace(x_star + 0.1)


class TestSamplePath:
    def test_constant(self, rng):
        gaps = GapSeries(np.array([1.0, 0.5, 2.0]))
        path = sample_path(Constant(1.5), gaps, rng)
        assert np.all(path.levels == 1.5)

    def test_gbm_degenerates_to_y0(self, rng):
        gaps = GapSeries(np.full(50, 0.3))
        path = sample_path(Gbm(mu=0.0, sigma2=1e-20, y0=0.8), gaps, rng)
        assert np.allclose(path.levels, 0.8)

    def test_iid_gamma_mean(self, rng):
        n = 100_000
        gaps = GapSeries(np.full(n, 0.1))
        path = sample_path(IidGamma(tau=2.0, omega=1.0), gaps, rng)
        assert abs(path.levels.mean() - 2.0) < 4.0 * math.sqrt(2.0 / n)

    def test_positivity_across_all_laws(self, rng):
        specs = [
            Constant(0.7),
            IidGamma(1.5, 2.0),
            Gbm(-0.4, 0.8, 1.2),
            ExpLangevin(1.0, -0.5, 0.9, 0.6),
        ]
        for spec in specs:
            for _ in range(2500):
                gaps = GapSeries(rng.uniform(0.01, 1.0, size=4))
                assert np.all(sample_path(spec, gaps, rng).levels > 0)

    def test_fixed_seed_reproducible(self):
        gaps = GapSeries(np.array([0.2, 0.9, 0.4]))
        spec = ExpLangevin(0.7, 0.1, 0.5, 1.0)
        a = sample_path(spec, gaps, np.random.default_rng(11)).levels
        b = sample_path(spec, gaps, np.random.default_rng(11)).levels
        assert np.array_equal(a, b)

    def test_rejects_empty_gaps(self, rng):
        with pytest.raises(ValueError):
            sample_path(Constant(1.0), GapSeries(np.array([])), rng)


def test_gaps_from_events_sum_to_last_time():
    ev = EventSequence(np.array([0.5, 1.25, 3.0]), 4.0)
    gaps = gaps_from_events(ev)
    assert gaps.gaps.sum() == pytest.approx(3.0)
    assert np.all(gaps.gaps > 0)
