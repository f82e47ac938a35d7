"""Goodness-of-fit, chain quality and sampler-correctness harnesses.

* ``time_rescaling_test`` -- compensator-transformed gaps against Exp(1).
* ``expected_intensity_curve`` -- mean-intensity curve from the renewal
  identity E[lambda_t] = base(t) + int_0^t E[Y_s] E[lambda_s] e^{-d(t-s)} ds,
  solved as an ODE.  The product expectation is factorized, which is exact
  only when the level process is deterministic; treat the curve as an
  approximation whose error grows with the level variance.
* ``chain_summary`` / ``effective_sample_size`` / ``split_rhat`` -- standard
  chain-quality numbers.
* ``geweke_joint_test`` -- joint-distribution sampler test comparing prior
  draws against a chain that alternates posterior sweeps with data
  re-simulation; a correct sampler leaves all moment z-scores small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .mcmc import (
    Chain,
    Hyperparams,
    _draw_prior_values,
    _GibbsMHSampler,
    inferred_param_names,
)
from .model import ContagionPath, EventSequence, HawkesParams
from .sde import SdeSpec
from .simulate import simulate

__all__ = [
    "TimeRescalingResult",
    "time_rescaling_test",
    "expected_intensity_curve",
    "effective_sample_size",
    "split_rhat",
    "chain_summary",
    "geweke_joint_test",
]


@dataclass(frozen=True)
class TimeRescalingResult:
    statistic: float
    pvalue: float
    n_gaps: int


def compensator_at_events(
    events: EventSequence, y: ContagionPath, params: HawkesParams
) -> np.ndarray:
    """Lambda(T_i) for every event, via the O(n) decay recursion."""
    a, lam0, delta = params.a, params.lambda0, params.delta
    times, levels = events.times, y.levels
    out = np.empty(times.size)
    cum_y = 0.0
    decay_sum = 0.0  # sum_j Y_j e^{-delta (T_i - T_j)} over j < i
    t_prev = 0.0
    for i, t in enumerate(times):
        decay_sum *= math.exp(-delta * (t - t_prev))
        out[i] = (
            a * t
            + (lam0 - a) * (-math.expm1(-delta * t)) / delta
            + (cum_y - decay_sum) / delta
        )
        decay_sum += levels[i]
        cum_y += levels[i]
        t_prev = t
    return out


def time_rescaling_test(
    events: EventSequence,
    y: ContagionPath,
    params: HawkesParams,
    min_events: int = 50,
) -> TimeRescalingResult:
    """KS test of the compensator-transformed gaps against Exp(1).

    Under the data-generating intensity the transformed gaps
    Lambda(T_i) - Lambda(T_{i-1}) are iid unit exponentials.
    """
    if events.n < min_events:
        raise ValueError(
            f"time-rescaling test needs at least {min_events} events, got {events.n}"
        )
    lam = compensator_at_events(events, y, params)
    gaps = np.diff(lam, prepend=0.0)
    res = stats.kstest(gaps, "expon")
    return TimeRescalingResult(float(res.statistic), float(res.pvalue), events.n)


def expected_intensity_curve(
    params: HawkesParams,
    mean_excitation_fn,
    grid,
    tol: float = 1e-8,
    max_points: int = 2**20,
) -> np.ndarray:
    """E[lambda_t] on the grid points, from m'(t) = (E[Y_t] - delta) m + a delta.

    The renewal identity collapses to that scalar ODE with m(0) = lambda0.
    Integration is classical fixed-step RK4, with the step halved until the
    sup-norm change at grid points drops below ``tol`` (or the refinement
    hits ``max_points`` nodes).
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("grid must be a nonempty 1-D array")
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must increase strictly from 0")

    def solve(substeps: int) -> np.ndarray:
        a, lam0, delta = params.a, params.lambda0, params.delta
        out = np.empty(grid.size)
        m = lam0
        out[0] = m
        for seg in range(grid.size - 1):
            t0, t1 = grid[seg], grid[seg + 1]
            h = (t1 - t0) / substeps
            ts = t0 + h * np.arange(substeps)
            ey0 = np.asarray(mean_excitation_fn(ts), dtype=float)
            eyh = np.asarray(mean_excitation_fn(ts + 0.5 * h), dtype=float)
            ey1 = np.asarray(mean_excitation_fn(ts + h), dtype=float)
            for j in range(substeps):
                k1 = (ey0[j] - delta) * m + a * delta
                k2 = (eyh[j] - delta) * (m + 0.5 * h * k1) + a * delta
                k3 = (eyh[j] - delta) * (m + 0.5 * h * k2) + a * delta
                k4 = (ey1[j] - delta) * (m + h * k3) + a * delta
                m = m + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            out[seg + 1] = m
        return out

    substeps = 1
    prev = solve(substeps)
    while True:
        substeps *= 2
        if substeps * (grid.size - 1) > max_points:
            return prev
        cur = solve(substeps)
        if np.max(np.abs(cur - prev)) < tol:
            return cur
        prev = cur


def effective_sample_size(x) -> float:
    """Autocorrelation-adjusted sample count (Geyer initial positive
    sequence).  A constant sequence counts as a single effective draw."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        return float(n)
    if np.all(x == x[0]):
        return 1.0
    xc = x - x.mean()
    var = float(np.dot(xc, xc)) / n
    if var == 0.0:
        return 1.0
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conjugate(f), nfft)[:n].real / n
    rho = acov / acov[0]
    tau = 0.0
    m = 0
    while 2 * m + 1 < n:
        pair = rho[2 * m] + (rho[2 * m + 1] if 2 * m + 1 < n else 0.0)
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        m += 1
    tau = max(tau - 1.0, 1e-12)
    return float(n / tau)


def split_rhat(seqs) -> float:
    """Potential scale reduction over the given sequences, each split in
    half (so a single chain yields the classic split diagnostic)."""
    halves = []
    for s in seqs:
        s = np.asarray(s, dtype=float)
        h = s.size // 2
        if h < 2:
            raise ValueError("sequences too short to split")
        halves.append(s[:h])
        halves.append(s[h : 2 * h])
    arr = np.vstack(halves)
    m, n = arr.shape
    means = arr.mean(axis=1)
    within = float(np.mean(arr.var(axis=1, ddof=1)))
    between = n * float(np.var(means, ddof=1))
    if within == 0.0:
        return 1.0 if between == 0.0 else float("inf")
    var_plus = (n - 1) / n * within + between / n
    return float(math.sqrt(var_plus / within))


def chain_summary(chains, prob: float = 0.90) -> dict:
    """Per-parameter mean, median, central credible interval, ESS and
    split R-hat, pooling one or more chains of the same model."""
    if isinstance(chains, Chain):
        chains = [chains]
    if not chains or not chains[0].states:
        raise ValueError("need at least one nonempty chain")
    names = inferred_param_names(chains[0].states[0].spec)
    lo_q, hi_q = (1.0 - prob) / 2.0, 1.0 - (1.0 - prob) / 2.0
    out = {}
    for name in names:
        seqs = [c.param(name) for c in chains]
        pooled = np.concatenate(seqs)
        out[name] = {
            "mean": float(pooled.mean()),
            "median": float(np.median(pooled)),
            "ci_low": float(np.quantile(pooled, lo_q)),
            "ci_high": float(np.quantile(pooled, hi_q)),
            "ess": float(sum(effective_sample_size(s) for s in seqs)),
            "rhat": split_rhat(seqs),
        }
    return out


def geweke_joint_test(
    spec: SdeSpec,
    hyper: Hyperparams,
    rounds: int,
    horizon: float,
    seed: int = 0,
    k_update: str = "exact-mh",
    flip_exposure_sign: bool = False,
    batches: int = 30,
    max_events: int = 200_000,
) -> list:
    """Moment z-scores comparing prior draws with a successive-conditional
    chain (sweep, then re-simulate data, repeatedly).

    Under a correct sampler both sides share every parameter marginal, so
    each first/second-moment z-score is small (|z| < 4 is the working
    threshold).  ``flip_exposure_sign`` injects a sign error into the GBM
    level update to verify the harness actually detects broken samplers.
    Returns one record per (parameter, moment).
    """
    if rounds <= 0:
        raise ValueError("rounds must be positive")
    names = inferred_param_names(spec)
    rng = np.random.default_rng(np.random.SeedSequence(seed))

    prior_draws = {n: np.empty(rounds) for n in names}
    for r in range(rounds):
        vals = _draw_prior_values(spec, hyper, rng)
        for n in names:
            prior_draws[n][r] = vals[n]

    sampler = _GibbsMHSampler(
        EventSequence(np.zeros(0), horizon),
        spec,
        hyper,
        rng,
        k_update=k_update,
        exposure_sign=-1.0 if flip_exposure_sign else 1.0,
    )
    sampler.initialize("prior")
    sim = simulate(sampler.current_params(), sampler.current_spec(), horizon, rng,
                   max_events=max_events)
    sampler.rebind(sim.events, sim.contagion.levels)
    chain_draws = {n: np.empty(rounds) for n in names}
    for r in range(rounds):
        sampler.sweep()
        for n in names:
            chain_draws[n][r] = sampler.vals[n]
        sim = simulate(sampler.current_params(), sampler.current_spec(), horizon, rng,
                       max_events=max_events)
        sampler.rebind(sim.events, sim.contagion.levels)

    records = []
    for n in names:
        for moment in (1, 2):
            g_prior = prior_draws[n] ** moment
            g_chain = chain_draws[n] ** moment
            se_prior = g_prior.std(ddof=1) / math.sqrt(rounds)
            se_chain = _batch_means_se(g_chain, batches)
            denom = math.hypot(se_prior, se_chain)
            z = (g_prior.mean() - g_chain.mean()) / denom if denom > 0 else 0.0
            if not np.isfinite(z):
                raise ValueError(f"non-finite z-score for {n} moment {moment}")
            records.append(
                {
                    "param": n,
                    "moment": moment,
                    "z": float(z),
                    "prior_mean": float(g_prior.mean()),
                    "chain_mean": float(g_chain.mean()),
                }
            )
    return records


def _batch_means_se(x: np.ndarray, batches: int) -> float:
    """Standard error of the mean of a correlated sequence via batch means."""
    size = x.size // batches
    if size < 1:
        raise ValueError("too few draws for batch-means standard errors")
    means = x[: size * batches].reshape(batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))
