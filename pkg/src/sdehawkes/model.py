"""Core types and closed-form quantities for Hawkes processes with
time-varying excitation levels.

The conditional intensity of the process is

    lambda(t) = a + (lambda0 - a) exp(-delta t)
                + sum_{i : T_i < t} Y_i exp(-delta (t - T_i))

where the excitation level ``Y_i`` attached to event ``i`` scales how much
that event lifts the future rate.  Because the kernel is exponential and
shares its decay rate with the base intensity, the compensator (integrated
intensity) and the branching-structure likelihood both have closed forms.
Everything in this module is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EventSequence",
    "HawkesParams",
    "ContagionPath",
    "BranchingStructure",
    "base_intensity",
    "intensity_at",
    "integrated_intensity",
    "log_likelihood",
]


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class EventSequence:
    """Strictly increasing event times on an observation window [0, horizon].

    All times must lie in (0, horizon].  A horizon of zero is allowed only
    for the degenerate empty sequence (it arises when simulating over an
    empty window).
    """

    times: np.ndarray
    horizon: float

    def __post_init__(self):
        times = _as_float_array(self.times, "times")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "horizon", float(self.horizon))
        if not np.isfinite(self.horizon) or self.horizon < 0:
            raise ValueError("horizon must be finite and nonnegative")
        if self.horizon == 0 and times.size:
            raise ValueError("horizon 0 admits no events")
        if times.size:
            if np.any(np.diff(times) <= 0):
                raise ValueError("times must be strictly increasing")
            if times[0] <= 0 or times[-1] > self.horizon:
                raise ValueError("times must lie in (0, horizon]")

    @property
    def n(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class HawkesParams:
    """Base-rate parameters: asymptotic rate ``a``, initial rate ``lambda0``
    and shared exponential decay ``delta`` (all strictly positive)."""

    a: float
    lambda0: float
    delta: float

    def __post_init__(self):
        for name in ("a", "lambda0", "delta"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be finite and positive, got {v}")


@dataclass(frozen=True, eq=False)
class ContagionPath:
    """Excitation levels Y_1..Y_n, aligned index-for-index with an event
    sequence.

    Levels are nonnegative; the ``Constant(0)`` excitation law (which turns
    the model into an inhomogeneous Poisson process) is the one place a zero
    level is meaningful, so zeros are admitted here and rejected only where
    a level is actually used as a jump size in a log.
    """

    levels: np.ndarray

    def __post_init__(self):
        levels = _as_float_array(self.levels, "levels")
        object.__setattr__(self, "levels", levels)
        if np.any(levels < 0):
            raise ValueError("excitation levels must be nonnegative")

    def __len__(self) -> int:
        return int(self.levels.size)


@dataclass(frozen=True, eq=False)
class BranchingStructure:
    """Parent assignment for each event, using 1-based event labels.

    ``parent[idx]`` is the assignment for event number ``idx + 1``: the
    value 0 marks an immigrant (generated by the base intensity), and a
    value j in 1..idx marks event ``idx + 1`` as an offspring of event j.
    """

    parent: np.ndarray

    def __post_init__(self):
        parent = np.asarray(self.parent, dtype=np.int64)
        if parent.ndim != 1:
            raise ValueError("parent must be one-dimensional")
        object.__setattr__(self, "parent", parent)
        idx = np.arange(parent.size)
        if np.any(parent < 0) or np.any(parent > idx):
            raise ValueError("parent[i] must lie in {0, 1, ..., i} (1-based labels)")

    def __len__(self) -> int:
        return int(self.parent.size)

    def offspring_counts(self) -> np.ndarray:
        """Number of events assigned to each event as parent."""
        off = self.parent[self.parent > 0] - 1
        return np.bincount(off, minlength=self.parent.size).astype(np.int64)


def base_intensity(t, params: HawkesParams):
    """Background rate a + (lambda0 - a) exp(-delta t).

    Accepts a scalar or an array of times; rejects negative times.
    Strictly positive for any valid ``HawkesParams``.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be nonnegative")
    out = params.a + (params.lambda0 - params.a) * np.exp(-params.delta * t_arr)
    return float(out) if np.ndim(t) == 0 else out


def _check_aligned(events: EventSequence, y: ContagionPath):
    if len(y) != events.n:
        raise ValueError(
            f"contagion path has {len(y)} levels for {events.n} events"
        )


def intensity_at(
    t: float, events: EventSequence, y: ContagionPath, params: HawkesParams
) -> float:
    """Conditional intensity at time t (left limit at event times).

    Only events strictly before ``t`` contribute, so the value at an event
    time excludes that event's own jump; the right limit at T_i is this
    value plus Y_i.
    """
    _check_aligned(events, y)
    if t < 0 or t > events.horizon:
        raise ValueError("t must lie in [0, horizon]")
    mask = events.times < t
    excit = float(
        np.sum(y.levels[mask] * np.exp(-params.delta * (t - events.times[mask])))
    )
    return base_intensity(t, params) + excit


def _compensator_arrays(
    t: float, times: np.ndarray, levels: np.ndarray, a: float, lam0: float, delta: float
) -> float:
    base_part = a * t + (lam0 - a) * (-np.expm1(-delta * t)) / delta
    mask = times <= t
    tail = -np.expm1(-delta * (t - times[mask]))
    return float(base_part + np.dot(levels[mask], tail) / delta)


def integrated_intensity(
    t: float, events: EventSequence, y: ContagionPath, params: HawkesParams
) -> float:
    """Compensator Lambda(t) = integral of the intensity over [0, t].

        Lambda(t) = a t + (lambda0 - a)(1 - e^{-delta t}) / delta
                    + (1/delta) sum_{T_i <= t} Y_i (1 - e^{-delta (t - T_i)})

    Nondecreasing in t with Lambda(0) = 0.
    """
    _check_aligned(events, y)
    if t < 0 or t > events.horizon:
        raise ValueError("t must lie in [0, horizon]")
    return _compensator_arrays(
        t, events.times, y.levels, params.a, params.lambda0, params.delta
    )


def _loglik_arrays(
    times: np.ndarray,
    horizon: float,
    parent: np.ndarray,
    levels: np.ndarray,
    a: float,
    lam0: float,
    delta: float,
) -> float:
    ll = -_compensator_arrays(horizon, times, levels, a, lam0, delta)
    imm = parent == 0
    if np.any(imm):
        ll += float(np.sum(np.log(a + (lam0 - a) * np.exp(-delta * times[imm]))))
    off = ~imm
    if np.any(off):
        pj = parent[off] - 1
        yj = levels[pj]
        if np.any(yj <= 0):
            return float("-inf")
        ll += float(np.sum(np.log(yj) - delta * (times[off] - times[pj])))
    return float(ll)


def log_likelihood(
    events: EventSequence,
    z: BranchingStructure,
    y: ContagionPath,
    params: HawkesParams,
) -> float:
    """Log of the complete-data likelihood P(events | z, y, params).

        -Lambda(T) + sum_i [ 1{z_i = 0} log(a + (lambda0 - a) e^{-delta T_i})
                             + 1{z_i = j} (log Y_j - delta (T_i - T_j)) ]

    Returns -inf when any event is assigned a parent whose excitation
    level is nonpositive.
    """
    _check_aligned(events, y)
    if len(z) != events.n:
        raise ValueError(
            f"branching structure has {len(z)} entries for {events.n} events"
        )
    return _loglik_arrays(
        events.times, events.horizon, z.parent, y.levels,
        params.a, params.lambda0, params.delta,
    )
