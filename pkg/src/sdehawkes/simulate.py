"""Forward simulation of the point process.

``simulate`` is the constant-work-per-event sampler: it decomposes each
inter-arrival time into the first arrival of the constant background rate
``a`` (exponential) and the first arrival of the decaying excess intensity
(inverse-CDF), then advances by the minimum.  Cost is Theta(1) per emitted
event, and no stationarity condition is needed on a finite window.

``simulate_ogata`` is a deliberately naive thinning sampler that rescans
the whole event history at every candidate (Theta(n) per candidate).  It is
distributionally equivalent and exists purely as a validation oracle and a
quadratic-cost baseline for benchmarks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ContagionPath, EventSequence, HawkesParams, base_intensity
from .sde import Constant, ExpLangevin, Gbm, IidGamma, SdeSpec

__all__ = ["SimulationResult", "simulate", "simulate_ogata", "intensity_on_grid"]


@dataclass(frozen=True, eq=False)
class SimulationResult:
    """A simulated event sequence with its excitation path and, optionally,
    a sampled (t, lambda(t-)) trace for plotting."""

    events: EventSequence
    contagion: ContagionPath
    intensity_trace: np.ndarray | None = None


class _LevelSampler:
    """Draws the next excitation level given the previous one and the gap."""

    def __init__(self, spec: SdeSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        if isinstance(spec, (Gbm, ExpLangevin)):
            self.log_y = math.log(spec.y0)

    def next_level(self, gap: float) -> float:
        spec, rng = self.spec, self.rng
        if isinstance(spec, Constant):
            return spec.psi
        if isinstance(spec, IidGamma):
            return rng.gamma(spec.tau, 1.0 / spec.omega)
        if isinstance(spec, Gbm):
            self.log_y += spec.mu * gap + math.sqrt(spec.sigma2 * gap) * rng.standard_normal()
            return math.exp(self.log_y)
        # exp-Langevin
        phi = math.exp(-spec.k * gap)
        var = spec.sigma2 * (-math.expm1(-2.0 * spec.k * gap)) / (2.0 * spec.k)
        self.log_y = phi * self.log_y + spec.mu * (1.0 - phi) + math.sqrt(var) * rng.standard_normal()
        return math.exp(self.log_y)


def _check_horizon(horizon: float):
    if not np.isfinite(horizon) or horizon < 0:
        raise ValueError("horizon must be finite and nonnegative")


def simulate(
    params: HawkesParams,
    spec: SdeSpec,
    horizon: float,
    rng: np.random.Generator,
    record_intensity: bool = False,
    max_events: int | None = None,
) -> SimulationResult:
    """Draw one realization of the process on [0, horizon].

    State kept per event: the excess intensity lam1 = lambda(t+) - a at the
    last event.  Each step draws

        S0 = -log(U)/a                              (background arrival)
        S1 = -log(1 + delta log(u)/lam1)/delta      (excess arrival)

    with S1 = inf whenever lam1 <= 0 or the log argument is nonpositive
    (the excess component then never fires), advances by min(S0, S1),
    samples the new level over the realized gap, and updates
    lam1 <- lam1 e^{-delta gap} + Y_new.  The first arrival past the
    horizon is discarded.
    """
    _check_horizon(horizon)
    a, delta = params.a, params.delta
    lam1 = params.lambda0 - params.a
    level_sampler = _LevelSampler(spec, rng)

    times: list[float] = []
    levels: list[float] = []
    t = 0.0
    while True:
        # 1 - random() lies in (0, 1], keeping the logs finite
        s0 = -math.log(1.0 - rng.random()) / a
        if lam1 > 0.0:
            arg = 1.0 + delta * math.log(1.0 - rng.random()) / lam1
            s1 = -math.log(arg) / delta if arg > 0.0 else math.inf
            if s1 < 0.0:
                s1 = math.inf
        else:
            s1 = math.inf
        gap = min(s0, s1)
        t_new = t + gap
        if t_new > horizon:
            break
        y_new = level_sampler.next_level(gap)
        times.append(t_new)
        levels.append(y_new)
        lam1 = lam1 * math.exp(-delta * gap) + y_new
        t = t_new
        if max_events is not None and len(times) >= max_events:
            raise RuntimeError(f"simulation exceeded max_events={max_events}")

    events = EventSequence(np.array(times), horizon)
    contagion = ContagionPath(np.array(levels))
    trace = None
    if record_intensity:
        trace = _build_trace(events, contagion, params)
    return SimulationResult(events, contagion, trace)


def simulate_ogata(
    params: HawkesParams,
    spec: SdeSpec,
    horizon: float,
    rng: np.random.Generator,
    record_intensity: bool = False,
) -> SimulationResult:
    """Thinning sampler rescanning the full history at every candidate.

    The dominating rate over (t, next candidate] is max(a, base(t)) plus the
    full excitation sum at t, both recomputed from scratch: Theta(n) work per
    candidate, hence quadratic overall.  Statistically equivalent to
    ``simulate``.
    """
    _check_horizon(horizon)
    a, lam0, delta = params.a, params.lambda0, params.delta
    level_sampler = _LevelSampler(spec, rng)

    times: list[float] = []
    levels: list[float] = []
    t = 0.0
    t_last = 0.0
    while True:
        times_arr = np.asarray(times)
        levels_arr = np.asarray(levels)
        excitation = float(np.sum(levels_arr * np.exp(-delta * (t - times_arr))))
        bound = max(a, a + (lam0 - a) * math.exp(-delta * t)) + excitation
        t = t + rng.exponential() / bound
        if t > horizon:
            break
        lam_t = (
            a
            + (lam0 - a) * math.exp(-delta * t)
            + float(np.sum(levels_arr * np.exp(-delta * (t - times_arr))))
        )
        if rng.random() * bound <= lam_t:
            y_new = level_sampler.next_level(t - t_last)
            times.append(t)
            levels.append(y_new)
            t_last = t

    events = EventSequence(np.array(times), horizon)
    contagion = ContagionPath(np.array(levels))
    trace = None
    if record_intensity:
        trace = _build_trace(events, contagion, params)
    return SimulationResult(events, contagion, trace)


def intensity_on_grid(
    grid: np.ndarray,
    events: EventSequence,
    y: ContagionPath,
    params: HawkesParams,
) -> np.ndarray:
    """Left-limit intensity lambda(t-) at each grid point, computed with a
    single forward pass over the merged grid and event times."""
    grid = np.asarray(grid, dtype=float)
    out = np.empty(grid.size)
    order = np.argsort(grid, kind="stable")
    delta = params.delta
    times, levels = events.times, y.levels
    excit = 0.0
    t_prev = 0.0
    next_event = 0
    for pos in order:
        t = grid[pos]
        while next_event < times.size and times[next_event] < t:
            te = times[next_event]
            excit = excit * math.exp(-delta * (te - t_prev)) + levels[next_event]
            t_prev = te
            next_event += 1
        out[pos] = base_intensity(t, params) + excit * math.exp(-delta * (t - t_prev))
    return out


def _build_trace(
    events: EventSequence, y: ContagionPath, params: HawkesParams, points: int = 512
) -> np.ndarray:
    """(t, lambda) pairs on a uniform grid plus both one-sided limits at each
    event time, so jumps render faithfully."""
    grid = np.linspace(0.0, events.horizon, points)
    grid_vals = intensity_on_grid(grid, events, y, params)
    left_vals = intensity_on_grid(events.times, events, y, params)
    ts = np.concatenate([grid, events.times, events.times])
    vs = np.concatenate([grid_vals, left_vals, left_vals + y.levels])
    order = np.lexsort((vs, ts))
    return np.column_stack([ts[order], vs[order]])
