import math

import numpy as np
import pytest
from scipy import stats as st
from scipy.integrate import solve_ivp

from sdehawkes import (
    Constant,
    ContagionPath,
    EventSequence,
    Gbm,
    HawkesParams,
    Hyperparams,
    IidGamma,
    McmcConfig,
    chain_summary,
    effective_sample_size,
    expected_intensity_curve,
    geweke_joint_test,
    mean_level_fn,
    run_mcmc,
    simulate,
    split_rhat,
    time_rescaling_test,
)
from sdehawkes.diagnostics import compensator_at_events
from sdehawkes import integrated_intensity

from conftest import random_instance


class TestTimeRescaling:
    def test_compensator_recursion_matches_direct_formula(self, rng):
        for _ in range(50):
            events, y, params = random_instance(rng)
            fast = compensator_at_events(events, y, params)
            direct = [
                integrated_intensity(t, events, y, params) for t in events.times
            ]
            assert np.max(np.abs(fast - np.asarray(direct))) < 1e-10

    def test_calibrated_on_true_model(self):
        params = HawkesParams(2.0, 2.0, 2.0)
        spec = IidGamma(2.0, 2.5)
        passes = 0
        for seed in range(20):
            sim = simulate(params, spec, 120.0, np.random.default_rng(seed))
            res = time_rescaling_test(sim.events, sim.contagion, params)
            passes += res.pvalue > 0.01
        assert passes >= 17

    def test_uniform_pvalues_under_homogeneous_poisson(self):
        params = HawkesParams(2.0, 2.0, 1.0)
        pvals = []
        for seed in range(60):
            sim = simulate(params, Constant(0.0), 100.0, np.random.default_rng(seed))
            res = time_rescaling_test(sim.events, sim.contagion, params)
            pvals.append(res.pvalue)
        assert st.kstest(pvals, "uniform").pvalue > 0.005

    def test_power_against_rate_misspecification(self):
        # data at rate 2a, tested at rate a: decisively rejected
        truth = HawkesParams(4.0, 4.0, 1.0)
        wrong = HawkesParams(2.0, 2.0, 1.0)
        sim = simulate(truth, Constant(0.0), 600.0, np.random.default_rng(3))
        assert sim.events.n >= 2000
        res = time_rescaling_test(sim.events, sim.contagion, wrong)
        assert res.pvalue < 0.01

    def test_insufficient_data_signal(self):
        params = HawkesParams(1.0, 1.0, 1.0)
        events = EventSequence(np.linspace(0.1, 5.0, 20), 6.0)
        with pytest.raises(ValueError, match="at least 50"):
            time_rescaling_test(events, ContagionPath(np.ones(20)), params)

    def test_joint_shift_invariance_with_constant_base(self):
        # with lambda0 = a the compensator gaps depend only on inter-event
        # gaps; shifting data and horizon jointly changes nothing except the
        # first residual, which is measured from the window origin
        params = HawkesParams(2.0, 2.0, 1.5)
        sim = simulate(params, Constant(0.7), 80.0, np.random.default_rng(8))
        shift = 13.0
        shifted = EventSequence(sim.events.times + shift, 80.0 + shift)
        base = np.diff(compensator_at_events(sim.events, sim.contagion, params))
        moved = np.diff(compensator_at_events(shifted, sim.contagion, params))
        assert np.max(np.abs(base - moved)) < 1e-9
        r1 = st.kstest(base, "expon")
        r2 = st.kstest(moved, "expon")
        assert r2.statistic == pytest.approx(r1.statistic, abs=1e-9)


class TestExpectedIntensityCurve:
    def test_zero_excitation_returns_base(self):
        params = HawkesParams(1.0, 3.0, 1.5)
        grid = np.linspace(0.0, 5.0, 21)
        curve = expected_intensity_curve(params, lambda t: np.zeros_like(t), grid)
        base = params.a + (params.lambda0 - params.a) * np.exp(-params.delta * grid)
        assert np.max(np.abs(curve - base)) < 1e-8

    def test_constant_excitation_closed_form(self):
        # m(t) = a d/(d-c) + (lambda0 - a d/(d-c)) e^{-(d-c) t}
        a, lam0, delta, c = 1.2, 2.0, 2.0, 0.8
        params = HawkesParams(a, lam0, delta)
        grid = np.linspace(0.0, 10.0 / delta, 40)
        curve = expected_intensity_curve(params, lambda t: np.full_like(t, c), grid)
        m_inf = a * delta / (delta - c)
        closed = m_inf + (lam0 - m_inf) * np.exp(-(delta - c) * grid)
        assert np.max(np.abs(curve - closed) / closed) < 1e-6

    def test_against_stiff_ode_oracle_for_gbm_mean(self):
        params = HawkesParams(1.0, 2.5, 2.2)
        fn = mean_level_fn(Gbm(mu=-0.3, sigma2=0.2, y0=0.9))
        grid = np.linspace(0.0, 6.0, 25)
        curve = expected_intensity_curve(params, fn, grid)

        def rhs(t, m):
            return (float(fn(t)) - params.delta) * m + params.a * params.delta

        sol = solve_ivp(
            rhs, (0.0, grid[-1]), [params.lambda0], t_eval=grid,
            method="LSODA", rtol=1e-11, atol=1e-12,
        )
        oracle = sol.y[0]
        assert np.max(np.abs(curve - oracle) / oracle) < 1e-6

    def test_rejects_bad_grid(self):
        params = HawkesParams(1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            expected_intensity_curve(params, lambda t: t, np.array([0.0, 2.0, 1.0]))
        with pytest.raises(ValueError):
            expected_intensity_curve(params, lambda t: t, np.array([1.0, 2.0]))


class TestChainQuality:
    def test_constant_chain_flags_degenerate(self):
        assert effective_sample_size(np.full(500, 1.3)) <= 1.0

    def test_iid_draws_have_full_ess(self, rng):
        x = rng.standard_normal(4000)
        assert effective_sample_size(x) == pytest.approx(4000, rel=0.2)

    def test_correlated_chain_has_reduced_ess(self, rng):
        x = np.empty(4000)
        x[0] = 0.0
        for i in range(1, 4000):  # AR(1), rho = 0.9: ESS ~ n/19
            x[i] = 0.9 * x[i - 1] + rng.standard_normal()
        ess = effective_sample_size(x)
        assert ess < 1000

    def test_identical_chains_rhat_one(self, rng):
        x = rng.standard_normal(2000)
        assert split_rhat([x, x]) == pytest.approx(1.0, abs=0.01)

    def test_diverged_chains_rhat_large(self, rng):
        x = rng.standard_normal(1000)
        assert split_rhat([x, x + 10.0]) > 2.0

    def test_chain_summary_structure(self):
        rng = np.random.default_rng(14)
        sim = simulate(HawkesParams(2.0, 2.0, 2.0), Constant(0.6), 40.0, rng)
        chain = run_mcmc(
            sim.events, Constant(0.6), Hyperparams(),
            McmcConfig(iterations=400, burnin=100, seed=2),
        )
        summary = chain_summary(chain)
        assert set(summary) == {"a", "lambda0", "delta"}
        for stats_ in summary.values():
            assert stats_["ci_low"] <= stats_["median"] <= stats_["ci_high"]
            assert stats_["ess"] > 1


class TestGeweke:
    def test_zero_rounds_rejected(self):
        with pytest.raises(ValueError, match="rounds"):
            geweke_joint_test(Constant(0.5), Hyperparams(), rounds=0, horizon=1.0)

    def test_smoke_constant_kind(self):
        hyper = Hyperparams(a=(4.0, 4.0), lambda0=(4.0, 4.0), delta=(6.0, 3.0))
        records = geweke_joint_test(
            Constant(0.3), hyper, rounds=400, horizon=2.0, seed=1
        )
        assert {r["param"] for r in records} == {"a", "lambda0", "delta"}
        assert all(np.isfinite(r["z"]) for r in records)

    def test_mutation_flag_runs(self):
        hyper = Hyperparams(
            a=(4.0, 4.0), lambda0=(4.0, 4.0), delta=(6.0, 2.0),
            mu=(-0.1, 0.04), sigma2=(6.0, 0.5),
        )
        records = geweke_joint_test(
            Gbm(0.0, 0.1, 0.5), hyper, rounds=300, horizon=2.0, seed=2,
            flip_exposure_sign=True,
        )
        assert all(np.isfinite(r["z"]) for r in records)
