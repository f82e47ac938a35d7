import itertools
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import logsumexp

from sdehawkes import (
    BranchingStructure,
    ContagionPath,
    EventSequence,
    HawkesParams,
    base_intensity,
    integrated_intensity,
    intensity_at,
    log_likelihood,
)

from conftest import random_branching, random_instance


def quad_compensator(t, events, y, params, tol=1e-12):
    """Independent oracle: adaptive quadrature of the intensity."""
    interior = [x for x in events.times if 0.0 < x < t]
    val, err = quad(
        lambda s: intensity_at(s, events, y, params),
        0.0,
        t,
        points=interior,
        limit=400,
        epsabs=tol,
        epsrel=tol,
    )
    return val


class TestBaseIntensity:
    def test_at_zero_returns_lambda0(self):
        p = HawkesParams(a=1.0, lambda0=3.0, delta=1.0)
        assert base_intensity(0.0, p) == pytest.approx(3.0)

    def test_decays_to_a(self):
        p = HawkesParams(a=1.0, lambda0=3.0, delta=1.0)
        assert base_intensity(200.0, p) == pytest.approx(1.0)

    def test_halfway_point(self):
        p = HawkesParams(a=1.0, lambda0=3.0, delta=1.0)
        assert base_intensity(math.log(2.0), p) == pytest.approx(2.0)

    def test_rejects_negative_time(self):
        p = HawkesParams(a=1.0, lambda0=3.0, delta=1.0)
        with pytest.raises(ValueError):
            base_intensity(-0.1, p)

    def test_positive_for_random_params(self, rng):
        for _ in range(200):
            _, _, p = random_instance(rng)
            assert base_intensity(rng.uniform(0, 10), p) > 0


class TestIntensityAt:
    def test_no_events_equals_base(self):
        p = HawkesParams(a=1.2, lambda0=2.5, delta=0.7)
        ev = EventSequence(np.array([]), 5.0)
        y = ContagionPath(np.array([]))
        for t in (0.0, 1.3, 5.0):
            assert intensity_at(t, ev, y, p) == pytest.approx(base_intensity(t, p))

    def test_just_after_single_event(self):
        p = HawkesParams(a=1.0, lambda0=1.0, delta=1.0)
        ev = EventSequence(np.array([1.0]), 5.0)
        y = ContagionPath(np.array([2.0]))
        assert intensity_at(1.0 + 1e-12, ev, y, p) == pytest.approx(3.0, rel=1e-9)

    def test_one_half_life_later(self):
        p = HawkesParams(a=1.0, lambda0=1.0, delta=1.0)
        ev = EventSequence(np.array([1.0]), 5.0)
        y = ContagionPath(np.array([2.0]))
        assert intensity_at(1.0 + math.log(2.0), ev, y, p) == pytest.approx(2.0)

    def test_rejects_misaligned_path(self):
        p = HawkesParams(a=1.0, lambda0=1.0, delta=1.0)
        ev = EventSequence(np.array([1.0, 2.0]), 5.0)
        with pytest.raises(ValueError):
            intensity_at(1.5, ev, ContagionPath(np.array([1.0])), p)

    def test_jump_at_event_equals_level(self, rng):
        # left limit at T_i excludes the event's own jump
        for _ in range(100):
            events, y, params = random_instance(rng)
            i = rng.integers(0, events.n)
            ti = events.times[i]
            left = intensity_at(ti, events, y, params)
            right = intensity_at(min(ti + 1e-12, events.horizon), events, y, params)
            assert right - left == pytest.approx(y.levels[i], rel=1e-6, abs=1e-9)


class TestIntegratedIntensity:
    def test_homogeneous_poisson(self):
        p = HawkesParams(a=2.0, lambda0=2.0, delta=1.0)
        ev = EventSequence(np.array([1.0, 2.0]), 6.0)
        y = ContagionPath(np.array([0.0, 0.0]))
        assert integrated_intensity(5.0, ev, y, p) == pytest.approx(10.0)

    def test_zero_at_origin(self, rng):
        for _ in range(20):
            events, y, params = random_instance(rng)
            assert integrated_intensity(0.0, events, y, params) == 0.0

    def test_matches_quadrature_on_fixed_instance(self):
        p = HawkesParams(a=1.0, lambda0=2.0, delta=0.5)
        ev = EventSequence(np.array([1.0, 2.0]), 4.0)
        y = ContagionPath(np.array([1.5, 0.7]))
        closed = integrated_intensity(4.0, ev, y, p)
        oracle = quad_compensator(4.0, ev, y, p)
        assert abs(closed - oracle) / oracle < 1e-8

    def test_matches_quadrature_on_random_instances(self, rng):
        for _ in range(50):
            events, y, params = random_instance(rng)
            t = rng.uniform(0.0, events.horizon)
            closed = integrated_intensity(t, events, y, params)
            oracle = quad_compensator(t, events, y, params)
            assert abs(closed - oracle) <= 1e-8 * max(oracle, 1.0)

    def test_monotone_in_time(self, rng):
        for _ in range(1000):
            events, y, params = random_instance(rng)
            t1, t2 = np.sort(rng.uniform(0.0, events.horizon, size=2))
            v1 = integrated_intensity(t1, events, y, params)
            v2 = integrated_intensity(t2, events, y, params)
            assert v2 >= v1 - 1e-12

    def test_rejects_negative_time(self):
        p = HawkesParams(a=1.0, lambda0=1.0, delta=1.0)
        ev = EventSequence(np.array([1.0]), 5.0)
        with pytest.raises(ValueError):
            integrated_intensity(-1.0, ev, ContagionPath(np.array([1.0])), p)


def all_branchings(n):
    return itertools.product(*(range(i + 1) for i in range(n)))


class TestLogLikelihood:
    def test_single_event(self):
        p = HawkesParams(a=1.0, lambda0=2.0, delta=1.5)
        ev = EventSequence(np.array([0.7]), 3.0)
        y = ContagionPath(np.array([1.1]))
        z = BranchingStructure(np.array([0]))
        expected = math.log(base_intensity(0.7, p)) - integrated_intensity(3.0, ev, y, p)
        assert log_likelihood(ev, z, y, p) == pytest.approx(expected)

    def test_marginalization_identity(self, rng):
        # summing the complete-data likelihood over every branching structure
        # recovers the point-process likelihood prod lambda(T_i-) e^{-Lambda_T}
        for _ in range(25):
            events, y, params = random_instance(rng)
            lls = [
                log_likelihood(events, BranchingStructure(np.array(z)), y, params)
                for z in all_branchings(events.n)
            ]
            total = logsumexp(lls)
            target = sum(
                math.log(intensity_at(t, events, y, params)) for t in events.times
            ) - integrated_intensity(events.horizon, events, y, params)
            assert abs(total - target) < 1e-8

    def test_zero_levels_all_immigrants_is_poisson(self, rng):
        for _ in range(20):
            events, _, params = random_instance(rng)
            y = ContagionPath(np.zeros(events.n))
            z = BranchingStructure(np.zeros(events.n, dtype=int))
            expected = sum(
                math.log(base_intensity(t, params)) for t in events.times
            ) - integrated_intensity(events.horizon, events, y, params)
            assert log_likelihood(events, z, y, params) == pytest.approx(expected)

    def test_homogeneous_poisson_reduction(self):
        # constant zero excitation with lambda0 = a collapses to N log a - a T
        a, horizon = 1.7, 6.0
        p = HawkesParams(a=a, lambda0=a, delta=1.0)
        times = np.array([0.4, 1.1, 2.2, 5.9])
        ev = EventSequence(times, horizon)
        y = ContagionPath(np.zeros(4))
        z = BranchingStructure(np.zeros(4, dtype=int))
        assert log_likelihood(ev, z, y, p) == pytest.approx(
            4 * math.log(a) - a * horizon
        )

    def test_zero_parent_level_gives_neg_inf(self):
        p = HawkesParams(a=1.0, lambda0=1.0, delta=1.0)
        ev = EventSequence(np.array([1.0, 2.0]), 3.0)
        y = ContagionPath(np.array([0.0, 1.0]))
        z = BranchingStructure(np.array([0, 1]))  # event 2 claims parent 1
        assert log_likelihood(ev, z, y, p) == -math.inf


class TestTypeInvariants:
    def test_event_sequence_rejects_unsorted(self):
        with pytest.raises(ValueError):
            EventSequence(np.array([2.0, 1.0]), 5.0)

    def test_event_sequence_rejects_out_of_window(self):
        with pytest.raises(ValueError):
            EventSequence(np.array([1.0, 6.0]), 5.0)
        with pytest.raises(ValueError):
            EventSequence(np.array([0.0, 1.0]), 5.0)

    def test_params_reject_nonpositive(self):
        for bad in ({"a": 0.0}, {"lambda0": -1.0}, {"delta": 0.0}):
            kwargs = {"a": 1.0, "lambda0": 1.0, "delta": 1.0, **bad}
            with pytest.raises(ValueError):
                HawkesParams(**kwargs)

    def test_branching_rejects_future_parent(self):
        with pytest.raises(ValueError):
            BranchingStructure(np.array([0, 2]))
        with pytest.raises(ValueError):
            BranchingStructure(np.array([1]))

    def test_contagion_rejects_negative(self):
        with pytest.raises(ValueError):
            ContagionPath(np.array([1.0, -0.5]))
