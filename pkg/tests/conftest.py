import numpy as np
import pytest

from sdehawkes import BranchingStructure, ContagionPath, EventSequence, HawkesParams


def random_instance(rng, n_max=6, n_min=1):
    """Random parameters, event times and excitation levels on a random window."""
    params = HawkesParams(
        a=rng.uniform(0.5, 3.0),
        lambda0=rng.uniform(0.3, 4.0),
        delta=rng.uniform(0.5, 3.0),
    )
    horizon = rng.uniform(2.0, 8.0)
    n = rng.integers(n_min, n_max + 1)
    times = np.sort(rng.uniform(0.05, horizon, size=n))
    while np.any(np.diff(times) <= 1e-9):
        times = np.sort(rng.uniform(0.05, horizon, size=n))
    events = EventSequence(times, horizon)
    y = ContagionPath(np.exp(rng.normal(0.0, 0.5, size=n)))
    return events, y, params


def random_branching(rng, n):
    parent = np.array([rng.integers(0, i + 1) for i in range(n)])
    return BranchingStructure(parent)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
