"""Hybrid Gibbs / Metropolis-Hastings sampler for the model.

One sweep updates, in order: the latent branching structure (exact
multinomial Gibbs), the excitation levels (conjugate Gibbs under the
iid-Gamma law, random-walk MH under the diffusion laws), the base-rate
parameters a, lambda0, delta (MH), and finally the parameters of the
excitation law (conjugate Gibbs, plus MH for the Gamma shape tau and
optionally for the reversion rate k).

Closed-form MH log-ratios are provided for tau, for the GBM excitation
levels and for a; everything else goes through ``mh_log_accept_generic``,
which evaluates the exact log-posterior difference.  The closed forms are
cross-checked against the generic path in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .model import (
    BranchingStructure,
    ContagionPath,
    EventSequence,
    HawkesParams,
    _loglik_arrays,
    base_intensity,
)
from .sde import (
    Constant,
    ExpLangevin,
    GapSeries,
    Gbm,
    IidGamma,
    SdeSpec,
    exp_langevin_transition_logpdf,
    gbm_transition_logpdf,
)

__all__ = [
    "Hyperparams",
    "McmcConfig",
    "ChainState",
    "Chain",
    "NonFinitePosteriorError",
    "branching_probabilities",
    "gibbs_sample_z",
    "gbm_mu_posterior",
    "gbm_sigma2_posterior",
    "langevin_mu_posterior",
    "langevin_sigma2_posterior",
    "langevin_k_posterior",
    "gamma_y_posterior",
    "gibbs_gbm_mu",
    "gibbs_gbm_sigma2",
    "gibbs_langevin_mu",
    "gibbs_langevin_sigma2",
    "gibbs_langevin_k",
    "gibbs_gamma_y",
    "gibbs_gamma_omega",
    "mh_log_accept_tau",
    "mh_log_accept_y_gbm",
    "mh_log_accept_a",
    "mh_log_accept_generic",
    "log_posterior",
    "inferred_param_names",
    "run_mcmc",
]


class NonFinitePosteriorError(RuntimeError):
    """Raised when a sweep produces a state with non-finite log-posterior."""

    def __init__(self, block: str, detail: str = ""):
        self.block = block
        super().__init__(f"non-finite posterior in block '{block}'" + (f": {detail}" if detail else ""))


@dataclass
class Hyperparams:
    """Prior hyperparameters and relative MH proposal scales.

    Gamma priors (shape, rate) for a, lambda0, delta, tau and omega; a
    normal prior (mean, variance) for the GBM / Langevin drift mu; an
    inverse-Gamma prior (shape, rate) for sigma2; and a normal prior
    (mean, variance) for the reversion rate k, truncated to k > 0 because
    the transition law requires it.

    ``prop_scale`` holds per-block proposal standard deviations relative to
    the magnitude of the current value; they are tuned toward the target
    acceptance rate during burn-in and frozen afterwards.
    """

    a: tuple = (2.0, 2.0)
    lambda0: tuple = (2.0, 2.0)
    delta: tuple = (2.0, 2.0)
    tau: tuple = (2.0, 1.0)
    omega: tuple = (2.0, 1.0)
    mu: tuple = (0.0, 1.0)
    sigma2: tuple = (3.0, 1.0)
    k: tuple = (1.0, 0.25)
    prop_scale: dict = field(
        default_factory=lambda: {
            "a": 0.1,
            "lambda0": 0.1,
            "delta": 0.1,
            "y": 0.1,
            "tau": 0.1,
            "k": 0.1,
        }
    )

    def __post_init__(self):
        for name in ("a", "lambda0", "delta", "tau", "omega", "sigma2"):
            s, r = getattr(self, name)
            if s <= 0 or r <= 0:
                raise ValueError(f"prior for {name} needs positive (shape, rate)")
        for name in ("mu", "k"):
            _, v = getattr(self, name)
            if v <= 0:
                raise ValueError(f"prior for {name} needs positive variance")
        for k, v in self.prop_scale.items():
            if v <= 0:
                raise ValueError(f"proposal scale for {k} must be positive")


@dataclass
class McmcConfig:
    """Chain length and behavior switches for ``run_mcmc``.

    ``k_update`` selects how the Langevin reversion rate is refreshed:
    ``"exact-mh"`` (exact posterior-ratio MH, the default), ``"linearized"``
    (the first-order conditional draw) or ``"fixed"`` (no update).
    """

    iterations: int = 5000
    burnin: int = 1000
    thin: int = 1
    seed: int = 0
    init: str = "prior"  # or "moment"
    k_update: str = "exact-mh"
    save_latent: bool = True
    adapt: bool = True
    target_accept: float = 0.23
    y_passes: int = 1  # excitation-level refreshes per sweep

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burnin < self.iterations:
            raise ValueError("burnin must lie in [0, iterations)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.init not in ("prior", "moment"):
            raise ValueError(f"unknown init scheme {self.init!r}")
        if self.k_update not in ("exact-mh", "linearized", "fixed"):
            raise ValueError(f"unknown k_update {self.k_update!r}")
        if self.y_passes < 1:
            raise ValueError("y_passes must be >= 1")


@dataclass(frozen=True, eq=False)
class ChainState:
    """One full latent-plus-parameter configuration.

    ``y`` and ``z`` are None when a chain was run without latent storage.
    """

    params: HawkesParams
    spec: SdeSpec
    y: ContagionPath | None
    z: BranchingStructure | None


@dataclass(eq=False)
class Chain:
    """Retained (post burn-in, thinned) states of one MCMC run."""

    states: list
    acceptance_rates: dict
    seed: int
    iterations: np.ndarray
    loglik: np.ndarray

    def param(self, name: str) -> np.ndarray:
        """Marginal draws of one scalar parameter across retained states."""
        if name in ("a", "lambda0", "delta"):
            return np.array([getattr(s.params, name) for s in self.states])
        return np.array([getattr(s.spec, name) for s in self.states])

    def y_matrix(self) -> np.ndarray:
        """Retained excitation paths stacked row-wise (requires latents)."""
        if not self.states or self.states[0].y is None:
            raise ValueError("chain was run without latent storage")
        return np.vstack([s.y.levels for s in self.states])


def inferred_param_names(spec: SdeSpec) -> tuple:
    """Names of the scalar parameters a chain actually updates."""
    base = ("a", "lambda0", "delta")
    if isinstance(spec, Gbm):
        return base + ("mu", "sigma2")
    if isinstance(spec, ExpLangevin):
        return base + ("mu", "sigma2", "k")
    if isinstance(spec, IidGamma):
        return base + ("tau", "omega")
    return base


# ---------------------------------------------------------------------------
# branching structure


def branching_probabilities(
    i: int, events: EventSequence, y: ContagionPath, params: HawkesParams
) -> np.ndarray:
    """Posterior parent probabilities for event number i (1-based).

    Entry 0 is the immigrant probability, entry j (1 <= j < i) the
    probability that event i is an offspring of event j.  Sums to one.
    """
    if not 1 <= i <= events.n:
        raise ValueError(f"event index {i} outside 1..{events.n}")
    if len(y) != events.n:
        raise ValueError("contagion path misaligned with events")
    ti = events.times[i - 1]
    w = np.empty(i)
    w[0] = base_intensity(ti, params)
    if i > 1:
        tj = events.times[: i - 1]
        w[1:] = y.levels[: i - 1] * np.exp(-params.delta * (ti - tj))
    total = w.sum()
    assert total > 0.0, "normalizing constant vanished despite a > 0"
    return w / total


def _parent_band(times: np.ndarray, window: float, cache: dict | None):
    """Index band of candidate parents: for event i the band holds the
    event indices i-1, i-2, ..., down to the window cutoff.  Gaps at
    out-of-range cells are set to a huge value so the corresponding
    log-weights underflow to the bottom without a separate mask pass."""
    n = times.size
    lo = np.searchsorted(times, times - window)
    width = int(np.max(np.arange(n) - lo)) if n else 0
    width = min(max(width, 1), max(n - 1, 1))
    # quantize so the cache stays small across delta moves
    width = min(-(-width // 32) * 32, max(n - 1, 1))
    if cache is not None and width in cache:
        return cache[width]
    offs = np.arange(1, width + 1)
    j = np.arange(n)[:, None] - offs[None, :]
    jc = np.maximum(j, 0)
    dt = np.where(j >= 0, times[:, None] - times[jc], 1e300)
    band = (jc, dt, width)
    if cache is not None:
        if len(cache) > 12:
            cache.clear()
        cache[width] = band
    return band


def _sample_parents(
    times: np.ndarray,
    horizon: float,
    levels: np.ndarray,
    a: float,
    lam0: float,
    delta: float,
    rng: np.random.Generator,
    cache: dict | None = None,
) -> np.ndarray:
    """Draw a parent label for every event from its exact conditional.

    Uses the Gumbel-max trick over log-weights restricted to a trailing
    window wide enough that every excluded candidate has relative weight
    below 1e-20 of the immigrant weight, i.e. below double-precision
    resolution of the row normalizer.
    """
    n = times.size
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    ymax = max(float(levels.max()), 1e-300) if levels.size else 1e-300
    wmin = min(a, lam0)
    window = (46.0 + max(0.0, math.log(ymax / wmin))) / delta
    jc, dt, width = _parent_band(times, window, cache)
    noise = rng.standard_exponential((n, width + 1))
    np.log(noise, out=noise)  # -noise is standard Gumbel
    with np.errstate(divide="ignore"):
        log_levels = np.log(levels)
        imm_score = np.log(a + (lam0 - a) * np.exp(-delta * times)) - noise[:, 0]
    body = log_levels[jc]
    body -= delta * dt
    body -= noise[:, 1:]
    best = np.argmax(body, axis=1)
    rows = np.arange(n)
    best_val = body[rows, best]
    return np.where(imm_score >= best_val, 0, rows - best).astype(np.int64)


def gibbs_sample_z(
    events: EventSequence,
    y: ContagionPath,
    params: HawkesParams,
    rng: np.random.Generator,
) -> BranchingStructure:
    """Gibbs draw of the whole branching structure, each event's parent
    sampled independently from ``branching_probabilities``."""
    if len(y) != events.n:
        raise ValueError("contagion path misaligned with events")
    parent = _sample_parents(
        events.times, events.horizon, y.levels, params.a, params.lambda0, params.delta, rng
    )
    return BranchingStructure(parent)


# ---------------------------------------------------------------------------
# conjugate updates for the excitation-law parameters


def gbm_mu_posterior(x, gaps, sigma2: float, prior: tuple) -> tuple:
    """Posterior (mean, variance) of the GBM drift given log-increments x
    over the given gaps.  Empty data returns the prior."""
    x = np.asarray(x, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    mu0, s0sq = prior
    sum_dt = gaps.sum()
    var = 1.0 / (sum_dt / sigma2 + 1.0 / s0sq)
    mean = (s0sq * x.sum() + mu0 * sigma2) / (s0sq * sum_dt + sigma2)
    return float(mean), float(var)


def gibbs_gbm_mu(x, gaps, sigma2, prior, rng) -> float:
    mean, var = gbm_mu_posterior(x, gaps, sigma2, prior)
    return float(rng.normal(mean, math.sqrt(var)))


def gbm_sigma2_posterior(x, gaps, mu: float, prior: tuple) -> tuple:
    """Posterior inverse-Gamma (shape, rate) of the GBM variance rate."""
    x = np.asarray(x, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    a0, b0 = prior
    resid = x - mu * gaps
    return float(a0 + x.size / 2.0), float(b0 + 0.5 * np.sum(resid * resid / gaps))


def gibbs_gbm_sigma2(x, gaps, mu, prior, rng) -> float:
    shape, rate = gbm_sigma2_posterior(x, gaps, mu, prior)
    return float(1.0 / rng.gamma(shape, 1.0 / rate))


def _langevin_pieces(y, y0: float, gaps, k: float):
    y = np.asarray(y, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    ly = np.log(y)
    lyp = np.log(np.concatenate([[y0], y[:-1]])) if y.size else ly
    phi = np.exp(-k * gaps)
    phim = -np.expm1(-k * gaps)  # 1 - phi
    phip = 1.0 + phi
    xi = 2.0 * k / phip
    return ly, lyp, phi, phim, phip, xi


def langevin_mu_posterior(y, y0, gaps, k, sigma2, prior) -> tuple:
    """Posterior (mean, variance) of the Langevin asymptotic log-mean."""
    mu0, s0sq = prior
    ly, lyp, phi, phim, phip, xi = _langevin_pieces(y, y0, gaps, k)
    s_xiphim = float(np.sum(xi * phim))
    mean = (s0sq * float(np.sum((ly - phi * lyp) * xi)) + mu0 * sigma2) / (
        s0sq * s_xiphim + sigma2
    )
    var = 1.0 / (s_xiphim / sigma2 + 1.0 / s0sq)
    return float(mean), float(var)


def gibbs_langevin_mu(y, y0, gaps, k, sigma2, prior, rng) -> float:
    mean, var = langevin_mu_posterior(y, y0, gaps, k, sigma2, prior)
    return float(rng.normal(mean, math.sqrt(var)))


def langevin_sigma2_posterior(y, y0, gaps, k, mu, prior) -> tuple:
    """Posterior inverse-Gamma (shape, rate) of the Langevin noise variance.

    The rate accumulates k * residual^2 / ((1 - phi)(1 + phi)) per
    transition, which is residual^2 / (2 * transition variance / sigma2):
    exactly conjugate to the transition law used for sampling.
    """
    a0, b0 = prior
    ly, lyp, phi, phim, phip, xi = _langevin_pieces(y, y0, gaps, k)
    resid = ly - phi * lyp - mu * phim
    rate = b0 + float(np.sum(k * resid * resid / (phim * phip)))
    return float(a0 + np.asarray(y).size / 2.0), float(rate)


def gibbs_langevin_sigma2(y, y0, gaps, k, mu, prior, rng) -> float:
    shape, rate = langevin_sigma2_posterior(y, y0, gaps, k, mu, prior)
    return float(1.0 / rng.gamma(shape, 1.0 / rate))


def langevin_k_posterior(y, y0, gaps, mu, sigma2, prior) -> tuple:
    """First-order linearized conditional (mean, variance) for the reversion
    rate, with the prior mean standing in for the centering constant.

    Approximate by construction; the variance can degenerate on adversarial
    data, in which case callers fall back to keeping the current value.
    """
    mu_k, s_ksq = prior
    y = np.asarray(y, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    ly = np.log(y)
    lyp = np.log(np.concatenate([[y0], y[:-1]])) if y.size else ly
    dev = ly - mu
    mean = (s_ksq * float(np.sum(lyp - mu)) + sigma2 * mu_k) / (
        s_ksq * float(np.sum(gaps * dev * dev)) + sigma2
    )
    prec = float(np.sum(gaps * dev)) / sigma2 + 1.0 / s_ksq
    var = 1.0 / prec if prec > 0 else float("nan")
    return float(mean), float(var)


def gibbs_langevin_k(y, y0, gaps, mu, sigma2, prior, rng, current_k, max_tries=20) -> float:
    """Linearized draw for k, redrawing on nonpositive values and keeping
    the current value once the retry cap is hit or the conditional is
    degenerate."""
    mean, var = langevin_k_posterior(y, y0, gaps, mu, sigma2, prior)
    if not np.isfinite(mean) or not np.isfinite(var) or var <= 0:
        return float(current_k)
    sd = math.sqrt(var)
    for _ in range(max_tries):
        draw = rng.normal(mean, sd)
        if draw > 0:
            return float(draw)
    return float(current_k)


def gamma_y_posterior(
    i: int, events: EventSequence, z: BranchingStructure, tau, omega, delta
) -> tuple:
    """Posterior Gamma (shape, rate) of level Y_i under the iid-Gamma law:
    shape tau + offspring count of i, rate omega + exposure of i."""
    if not 1 <= i <= events.n:
        raise ValueError(f"event index {i} outside 1..{events.n}")
    n_off = int(np.sum(z.parent == i))
    exposure = (-np.expm1(-delta * (events.horizon - events.times[i - 1]))) / delta
    return float(tau + n_off), float(omega + exposure)


def gibbs_gamma_y(i, events, z, params, tau, omega, rng) -> float:
    shape, rate = gamma_y_posterior(i, events, z, tau, omega, params.delta)
    return float(rng.gamma(shape, 1.0 / rate))


def gibbs_gamma_omega(y, tau, prior, rng) -> float:
    """Conjugate Gamma draw for the iid-Gamma rate omega."""
    a_w, b_w = prior
    levels = np.asarray(y.levels if isinstance(y, ContagionPath) else y, dtype=float)
    return float(rng.gamma(a_w + tau * levels.size, 1.0 / (b_w + levels.sum())))


# ---------------------------------------------------------------------------
# log-densities and the full log-posterior


def _gamma_logpdf(x, shape, rate):
    if x <= 0:
        return -np.inf
    return shape * math.log(rate) - gammaln(shape) + (shape - 1.0) * math.log(x) - rate * x


def _invgamma_logpdf(x, shape, rate):
    if x <= 0:
        return -np.inf
    return shape * math.log(rate) - gammaln(shape) - (shape + 1.0) * math.log(x) - rate / x


def _normal_logpdf(x, mean, var):
    return -0.5 * (math.log(2.0 * math.pi * var) + (x - mean) ** 2 / var)


def _transition_loglik(spec: SdeSpec, levels: np.ndarray, gaps: np.ndarray) -> float:
    """Joint log-density of the excitation path under its law."""
    if levels.size == 0:
        return 0.0
    if isinstance(spec, Constant):
        return 0.0
    if isinstance(spec, IidGamma):
        if np.any(levels <= 0):
            return -np.inf
        t, w = spec.tau, spec.omega
        return float(
            levels.size * (t * math.log(w) - gammaln(t))
            + (t - 1.0) * np.sum(np.log(levels))
            - w * levels.sum()
        )
    prev = np.concatenate([[spec.y0], levels[:-1]])
    if isinstance(spec, Gbm):
        vals = gbm_transition_logpdf(prev, levels, gaps, spec.mu, spec.sigma2)
    else:
        vals = exp_langevin_transition_logpdf(
            prev, levels, gaps, spec.k, spec.mu, spec.sigma2
        )
    return float(np.sum(vals))


def _prior_loglik(params: HawkesParams, spec: SdeSpec, hyper: Hyperparams) -> float:
    lp = (
        _gamma_logpdf(params.a, *hyper.a)
        + _gamma_logpdf(params.lambda0, *hyper.lambda0)
        + _gamma_logpdf(params.delta, *hyper.delta)
    )
    if isinstance(spec, Gbm):
        lp += _normal_logpdf(spec.mu, *hyper.mu)
        lp += _invgamma_logpdf(spec.sigma2, *hyper.sigma2)
    elif isinstance(spec, ExpLangevin):
        lp += _normal_logpdf(spec.mu, *hyper.mu)
        lp += _invgamma_logpdf(spec.sigma2, *hyper.sigma2)
        # k prior is normal truncated to k > 0; the truncation constant is
        # parameter-free and cancels from every ratio
        lp += _normal_logpdf(spec.k, *hyper.k) if spec.k > 0 else -np.inf
    elif isinstance(spec, IidGamma):
        lp += _gamma_logpdf(spec.tau, *hyper.tau)
        lp += _gamma_logpdf(spec.omega, *hyper.omega)
    return lp


def _log_posterior_arrays(
    times: np.ndarray,
    horizon: float,
    gaps: np.ndarray,
    parent: np.ndarray,
    levels: np.ndarray,
    params: HawkesParams,
    spec: SdeSpec,
    hyper: Hyperparams,
) -> float:
    ll = _loglik_arrays(
        times, horizon, parent, levels, params.a, params.lambda0, params.delta
    )
    return ll + _transition_loglik(spec, levels, gaps) + _prior_loglik(params, spec, hyper)


def log_posterior(
    events: EventSequence, state: ChainState, hyper: Hyperparams
) -> float:
    """Unnormalized log-posterior of a full latent+parameter configuration:
    branching likelihood + excitation-path density + parameter priors."""
    gaps = np.diff(events.times, prepend=0.0)
    return _log_posterior_arrays(
        events.times,
        events.horizon,
        gaps,
        state.z.parent,
        state.y.levels,
        state.params,
        state.spec,
        hyper,
    )


# ---------------------------------------------------------------------------
# Metropolis-Hastings log acceptance ratios


def mh_log_accept_tau(tau_new, tau, y, omega, prior) -> float:
    """Closed-form log A(tau') for the iid-Gamma shape under a symmetric
    proposal."""
    if tau_new <= 0:
        return -np.inf
    alpha_t, beta_t = prior
    levels = np.asarray(y.levels if isinstance(y, ContagionPath) else y, dtype=float)
    n = levels.size
    val = (tau_new - tau) * (n * math.log(omega) + float(np.sum(np.log(levels))))
    val += (alpha_t - 1.0) * math.log(tau_new / tau)
    val -= n * float(gammaln(tau_new) - gammaln(tau))
    val -= (tau_new - tau) * beta_t
    return float(val)


def _y_gbm_log_ratio(
    idx: np.ndarray,
    prop: np.ndarray,
    y: np.ndarray,
    counts: np.ndarray,
    gaps: np.ndarray,
    exposure: np.ndarray,
    mu: float,
    sigma2: float,
    y0: float,
    exposure_sign: float = 1.0,
) -> np.ndarray:
    """Vectorized closed-form log A(Y_i') for 0-based indices ``idx`` under
    the GBM law.  ``exposure_sign`` exists only for sampler fault-injection
    in the mutation-sensitivity harness."""
    n = y.size
    cur = y[idx]
    out = exposure_sign * (-(prop - cur) * exposure[idx])
    out += (counts[idx] - 1.0) * np.log(prop / cur)
    prev = np.where(idx > 0, y[np.maximum(idx - 1, 0)], y0)
    dtb = gaps[idx]
    rb_new = np.log(prop / prev) - mu * dtb
    rb_old = np.log(cur / prev) - mu * dtb
    out -= (rb_new * rb_new - rb_old * rb_old) / (2.0 * sigma2 * dtb)
    nxt = np.minimum(idx + 1, n - 1)
    dtf = gaps[nxt]
    y_next = y[nxt]
    rf_new = np.log(y_next / prop) - mu * dtf
    rf_old = np.log(y_next / cur) - mu * dtf
    fwd = (rf_new * rf_new - rf_old * rf_old) / (2.0 * sigma2 * dtf)
    out -= np.where(idx < n - 1, fwd, 0.0)
    return out


def mh_log_accept_y_gbm(i: int, y_new: float, events: EventSequence, state: ChainState) -> float:
    """Closed-form log A(Y_i') for event number i (1-based) under GBM.

    Contains the exposure term, the offspring-count power term, the
    backward transition quadratic, and (except for the last event) the
    forward transition quadratic over the following gap.
    """
    if not isinstance(state.spec, Gbm):
        raise TypeError("mh_log_accept_y_gbm requires a Gbm excitation law")
    if not 1 <= i <= events.n:
        raise ValueError(f"event index {i} outside 1..{events.n}")
    if y_new <= 0:
        return -np.inf
    gaps = np.diff(events.times, prepend=0.0)
    exposure = (-np.expm1(-state.params.delta * (events.horizon - events.times))) / state.params.delta
    counts = state.z.offspring_counts().astype(float)
    out = _y_gbm_log_ratio(
        np.array([i - 1]),
        np.array([float(y_new)]),
        state.y.levels,
        counts,
        gaps,
        exposure,
        state.spec.mu,
        state.spec.sigma2,
        state.spec.y0,
    )
    return float(out[0])


def _a_log_ratio_arrays(
    a_new: float,
    a: float,
    lam0: float,
    delta: float,
    imm_times: np.ndarray,
    horizon: float,
    prior: tuple,
) -> float:
    if a_new <= 0:
        return -np.inf
    alpha_a, beta_a = prior
    dec = np.exp(-delta * imm_times)
    num = a_new + (lam0 - a_new) * dec
    den = a + (lam0 - a) * dec
    if np.any(num <= 0):
        return -np.inf
    val = float(np.sum(np.log(num / den)))
    val += (alpha_a - 1.0) * math.log(a_new / a)
    expo = (-math.expm1(-delta * horizon)) / delta - horizon - beta_a
    val += (a_new - a) * expo
    return float(val)


def mh_log_accept_a(a_new: float, events: EventSequence, state: ChainState, prior: tuple) -> float:
    """Closed-form log A(a') under a symmetric proposal: immigrant base-rate
    ratios, the prior power term and the exposure/prior exponential term."""
    p = state.params
    imm_t = events.times[state.z.parent == 0]
    return _a_log_ratio_arrays(
        a_new, p.a, p.lambda0, p.delta, imm_t, events.horizon, prior
    )


def _with_value(state: ChainState, block: str, value: float, index: int | None) -> ChainState:
    params, spec, y = state.params, state.spec, state.y
    if block == "a":
        params = HawkesParams(value, params.lambda0, params.delta)
    elif block == "lambda0":
        params = HawkesParams(params.a, value, params.delta)
    elif block == "delta":
        params = HawkesParams(params.a, params.lambda0, value)
    elif block == "mu":
        spec = (
            Gbm(value, spec.sigma2, spec.y0)
            if isinstance(spec, Gbm)
            else ExpLangevin(spec.k, value, spec.sigma2, spec.y0)
        )
    elif block == "sigma2":
        spec = (
            Gbm(spec.mu, value, spec.y0)
            if isinstance(spec, Gbm)
            else ExpLangevin(spec.k, spec.mu, value, spec.y0)
        )
    elif block == "k":
        spec = ExpLangevin(value, spec.mu, spec.sigma2, spec.y0)
    elif block == "tau":
        spec = IidGamma(value, spec.omega)
    elif block == "omega":
        spec = IidGamma(spec.tau, value)
    elif block == "y":
        if index is None:
            raise ValueError("block 'y' needs an event index")
        levels = state.y.levels.copy()
        levels[index - 1] = value
        y = ContagionPath(levels)
    else:
        raise ValueError(f"unknown block {block!r}")
    return ChainState(params, spec, y, state.z)


def mh_log_accept_generic(
    block: str,
    proposed: float,
    events: EventSequence,
    state: ChainState,
    hyper: Hyperparams,
    index: int | None = None,
) -> float:
    """Exact MH log-ratio for a symmetric proposal on any scalar block:
    log-posterior(proposed) - log-posterior(current).

    ``block`` is one of a, lambda0, delta, mu, sigma2, k, tau, omega or y
    (the latter with a 1-based event ``index``).  Out-of-domain proposals
    return -inf.
    """
    positive_blocks = {"a", "lambda0", "delta", "sigma2", "k", "tau", "omega", "y"}
    if block in positive_blocks and proposed <= 0:
        return -np.inf
    try:
        prop_state = _with_value(state, block, proposed, index)
    except ValueError as exc:
        if "unknown block" in str(exc) or "needs an event index" in str(exc):
            raise
        return -np.inf
    cur = log_posterior(events, state, hyper)
    new = log_posterior(events, prop_state, hyper)
    if not np.isfinite(cur):
        raise NonFinitePosteriorError(block, "current state has non-finite posterior")
    return float(new - cur)


# ---------------------------------------------------------------------------
# sweep engine


def _draw_prior_values(spec: SdeSpec, hyper: Hyperparams, rng: np.random.Generator) -> dict:
    """One joint draw of every inferred scalar parameter from its prior."""
    vals = {
        "a": rng.gamma(hyper.a[0], 1.0 / hyper.a[1]),
        "lambda0": rng.gamma(hyper.lambda0[0], 1.0 / hyper.lambda0[1]),
        "delta": rng.gamma(hyper.delta[0], 1.0 / hyper.delta[1]),
    }
    if isinstance(spec, (Gbm, ExpLangevin)):
        vals["mu"] = rng.normal(hyper.mu[0], math.sqrt(hyper.mu[1]))
        vals["sigma2"] = 1.0 / rng.gamma(hyper.sigma2[0], 1.0 / hyper.sigma2[1])
    if isinstance(spec, ExpLangevin):
        sd = math.sqrt(hyper.k[1])
        while True:  # k prior is truncated to the positive half-line
            k = rng.normal(hyper.k[0], sd)
            if k > 0:
                vals["k"] = k
                break
    if isinstance(spec, IidGamma):
        vals["tau"] = rng.gamma(hyper.tau[0], 1.0 / hyper.tau[1])
        vals["omega"] = rng.gamma(hyper.omega[0], 1.0 / hyper.omega[1])
    return vals


def _classical_warm_start(events: EventSequence, rounds: int = 8) -> tuple:
    """Coarse constant-excitation EM fit used to seat the chain in a sane
    region: returns (base rate, decay, mean excitation level).

    Alternates exact responsibilities with closed-form updates for the base
    rate and level and a one-dimensional search for the decay.  Quality only
    matters up to "right basin"; a handful of rounds suffices.
    """
    from scipy.optimize import minimize_scalar

    from .em import em_responsibilities, em_update_psi

    n, horizon = events.n, events.horizon
    times = events.times
    a = max(n / horizon, 1e-3) * 0.7
    delta, psi = 1.0, 0.5 * a
    for _ in range(rounds):
        params = HawkesParams(a, a, delta)
        resp = em_responsibilities(events, params, psi)
        imm_mass = float(np.sum(np.diag(resp)))
        off = np.tril(resp, k=-1)
        off_mass = float(off.sum())
        a = max(imm_mass / horizon, 1e-6)
        if off_mass < 1e-9:
            break
        gap_mass = float(np.sum(off * (times[:, None] - times[None, :])))

        def neg_profile(d):
            exposure = float(np.sum((-np.expm1(-d * (horizon - times))) / d))
            return off_mass * math.log(exposure) + d * gap_mass

        delta = float(
            minimize_scalar(neg_profile, bounds=(1e-3, 1e3), method="bounded").x
        )
        psi = em_update_psi(events, resp, HawkesParams(a, a, delta))
    return a, delta, max(psi, 1e-6)


class _GibbsMHSampler:
    """Mutable sweep engine behind ``run_mcmc`` and the sampler-correctness
    harness.  Holds the latent state as raw arrays; public dataclasses are
    only built when a state is recorded.

    ``exposure_sign`` multiplies the exposure term of the GBM level update
    and exists solely so the mutation-sensitivity harness can break the
    sampler on purpose.
    """

    def __init__(
        self,
        events: EventSequence,
        spec: SdeSpec,
        hyper: Hyperparams,
        rng: np.random.Generator,
        k_update: str = "exact-mh",
        exposure_sign: float = 1.0,
    ):
        self.hyper = hyper
        self.rng = rng
        self.k_update = k_update
        self.exposure_sign = exposure_sign
        self.spec0 = spec
        self.kind = type(spec)
        self.vals = {}  # inferred scalar parameters by name
        self.y = np.zeros(0)
        self.z = np.zeros(0, dtype=np.int64)
        self.counts = np.zeros(0)
        self.scales = {}
        self._scale_bounds = {}
        self._accept = {}
        self._recent = {}
        self._band_cache = {}
        self._lp = None
        self._ll = None
        self._bind(events)

    # -- wiring -------------------------------------------------------

    def _bind(self, events: EventSequence):
        self.events = events
        self.times = events.times
        self.horizon = events.horizon
        self.n = events.n
        self.gaps = np.diff(self.times, prepend=0.0)
        self._band_cache.clear()
        self._exposure = None
        self._lp = None
        self._ll = None

    def rebind(self, events: EventSequence, levels: np.ndarray):
        """Attach fresh data plus its excitation path and redraw the
        branching structure from its exact conditional."""
        self._bind(events)
        self.y = np.asarray(levels, dtype=float).copy()
        self._refresh_exposure()
        self._draw_z()

    def _refresh_exposure(self):
        delta = self.vals["delta"]
        self._exposure = (-np.expm1(-delta * (self.horizon - self.times))) / delta

    def _set_delta(self, value: float):
        self.vals["delta"] = value
        self._refresh_exposure()

    def current_params(self) -> HawkesParams:
        return HawkesParams(self.vals["a"], self.vals["lambda0"], self.vals["delta"])

    def current_spec(self) -> SdeSpec:
        v = self.vals
        if self.kind is Gbm:
            return Gbm(v["mu"], v["sigma2"], self.spec0.y0)
        if self.kind is ExpLangevin:
            return ExpLangevin(v["k"], v["mu"], v["sigma2"], self.spec0.y0)
        if self.kind is IidGamma:
            return IidGamma(v["tau"], v["omega"])
        return self.spec0

    def state(self, save_latent: bool = True) -> ChainState:
        y = ContagionPath(self.y.copy()) if save_latent else None
        z = BranchingStructure(self.z.copy()) if save_latent else None
        return ChainState(self.current_params(), self.current_spec(), y, z)

    # -- initialization -----------------------------------------------

    def initialize(self, scheme: str = "prior"):
        from .sde import sample_path  # deferred to avoid import cycle at module load

        hyper, rng = self.hyper, self.rng
        if scheme == "prior":
            self.vals = _draw_prior_values(self.spec0, hyper, rng)
        elif scheme == "moment":
            if self.n >= 20:
                a_hat, delta_hat, psi_hat = _classical_warm_start(self.events)
            else:
                a_hat = max(self.n / self.horizon, 1e-2) if self.horizon > 0 else 1.0
                delta_hat, psi_hat = 1.0, self._mean_level_guess()
            self.vals = {"a": a_hat, "lambda0": a_hat, "delta": delta_hat}
            self._psi_hat = psi_hat
            if self.kind in (Gbm, ExpLangevin):
                a0, b0 = hyper.sigma2
                self.vals["mu"] = hyper.mu[0]
                self.vals["sigma2"] = b0 / (a0 - 1.0) if a0 > 1.0 else b0
            if self.kind is ExpLangevin:
                self.vals["k"] = max(hyper.k[0], 0.1)
            if self.kind is IidGamma:
                self.vals["tau"] = hyper.tau[0] / hyper.tau[1]
                self.vals["omega"] = max(self.vals["tau"] / psi_hat, 1e-6)
        else:
            raise ValueError(f"unknown init scheme {scheme!r}")
        self._refresh_exposure()
        if self.n:
            if scheme == "prior":
                self.y = sample_path(self.current_spec(), GapSeries(self.gaps), rng).levels
            else:
                # a rough path around the warm-start level: an exactly flat
                # path lets the first variance draw collapse, which in turn
                # freezes the level updates
                self.y = sample_path(
                    self._moment_init_spec(), GapSeries(self.gaps), rng
                ).levels
            self._draw_z()
        else:
            self.y = np.zeros(0)
            self.z = np.zeros(0, dtype=np.int64)
            self.counts = np.zeros(0)
        self._init_scales()
        self._lp = None
        self._ll = None

    def _mean_level_guess(self) -> float:
        if self.kind is Constant:
            return self.spec0.psi
        if self.kind is IidGamma:
            return self.vals["tau"] / self.vals["omega"]
        return self.spec0.y0

    def _moment_init_spec(self) -> SdeSpec:
        """Excitation law producing the initial path: drift-centered around
        the warm-start level so the path neither trends nor sits flat."""
        v = self.vals
        level = max(getattr(self, "_psi_hat", self.spec0.y0), 1e-6)
        if self.kind is Gbm:
            return Gbm(-0.5 * v["sigma2"], v["sigma2"], level)
        if self.kind is ExpLangevin:
            return ExpLangevin(v["k"], math.log(level), v["sigma2"], level)
        return self.current_spec()

    def _init_scales(self):
        rel = self.hyper.prop_scale
        refs = {
            "a": self.vals["a"],
            "lambda0": self.vals["lambda0"],
            "delta": self.vals["delta"],
        }
        if self.kind is ExpLangevin and self.k_update == "exact-mh":
            refs["k"] = self.vals["k"]
        if self.kind is IidGamma:
            refs["tau"] = self.vals["tau"]
        self.scales = {
            b: rel.get(b, 0.1) * max(abs(r), 1e-2) for b, r in refs.items()
        }
        if self.kind in (Gbm, ExpLangevin):
            # dimensionless multiplier on the per-coordinate scale vector
            self.scales["y"] = 2.4
        self._scale_bounds = {b: (s * 1e-4, s * 1e4) for b, s in self.scales.items()}
        self._accept = {b: [0, 0] for b in self.scales}
        self._recent = {b: [0, 0] for b in self.scales}

    def set_values(self, vals: dict):
        """Overwrite the scalar parameters (harness hook)."""
        self.vals = dict(vals)
        self._refresh_exposure()
        self._lp = None
        self._ll = None

    # -- bookkeeping ----------------------------------------------------

    def _count(self, block: str, accepted: bool):
        for rec in (self._accept, self._recent):
            rec[block][1] += 1
            rec[block][0] += int(accepted)

    def reset_acceptance(self):
        for rec in (self._accept, self._recent):
            for v in rec.values():
                v[0] = v[1] = 0

    def acceptance_rates(self) -> dict:
        return {
            b: acc / prop for b, (acc, prop) in self._accept.items() if prop > 0
        }

    def adapt(self, target: float):
        """Nudge each proposal scale toward the target acceptance rate;
        only ever called during burn-in so the final kernel stays fixed.
        The level block aims at the one-dimensional random-walk optimum
        since its coordinates are updated one at a time."""
        for block, (acc, prop) in self._recent.items():
            if prop == 0:
                continue
            goal = 0.44 if block == "y" else target
            lo, hi = self._scale_bounds[block]
            new = self.scales[block] * math.exp(acc / prop - goal)
            self.scales[block] = min(max(new, lo), hi)
            self._recent[block][0] = self._recent[block][1] = 0

    def _logpost(self) -> float:
        if self._lp is None:
            self._lp = _log_posterior_arrays(
                self.times, self.horizon, self.gaps, self.z, self.y,
                self.current_params(), self.current_spec(), self.hyper,
            )
        return self._lp

    def _loglik_cached(self) -> float:
        if self._ll is None:
            self._ll = self.loglik()
        return self._ll

    def loglik(self) -> float:
        v = self.vals
        return _loglik_arrays(
            self.times, self.horizon, self.z, self.y, v["a"], v["lambda0"], v["delta"]
        )

    # -- individual blocks ----------------------------------------------

    def _draw_z(self):
        self.z = _sample_parents(
            self.times, self.horizon, self.y,
            self.vals["a"], self.vals["lambda0"], self.vals["delta"],
            self.rng, self._band_cache,
        )
        self.counts = np.bincount(
            self.z[self.z > 0] - 1, minlength=self.n
        ).astype(float)
        self._lp = None
        self._ll = None

    def _update_y_gamma(self):
        shape = self.vals["tau"] + self.counts
        rate = self.vals["omega"] + self._exposure
        self.y = self.rng.gamma(shape) / rate
        if not np.all(np.isfinite(self.y)) or np.any(self.y <= 0):
            raise NonFinitePosteriorError("y")
        self._lp = None
        self._ll = None

    def _y_scale_vector(self) -> np.ndarray:
        """Per-coordinate proposal standard deviations for the level block.

        Each coordinate's conditional is dominated by its two transitions,
        whose width in level space is roughly level * sqrt(sigma2 * gap), so
        the scales follow that shape with the fixed starting level standing
        in for the local one.  Nothing here depends on the levels being
        updated, so the proposal stays symmetric coordinate by coordinate.
        """
        v = self.vals
        s2 = v["sigma2"]
        width = np.sqrt(s2 * np.minimum(self.gaps, 1.0 / max(s2, 1e-12)))
        return np.maximum(self.spec0.y0 * width, 1e-8)

    def _update_y_gbm(self):
        rng, n = self.rng, self.n
        spec = self.current_spec()
        scale = self.scales["y"] * self._y_scale_vector()
        for start in (0, 1):  # conditionally independent alternating blocks
            idx = np.arange(start, n, 2)
            if idx.size == 0:
                continue
            prop = self.y[idx] + scale[idx] * rng.standard_normal(idx.size)
            ok = prop > 0
            logr = np.full(idx.size, -np.inf)
            if np.any(ok):
                logr[ok] = _y_gbm_log_ratio(
                    idx[ok], prop[ok], self.y, self.counts, self.gaps,
                    self._exposure, spec.mu, spec.sigma2, spec.y0,
                    self.exposure_sign,
                )
            acc = -rng.standard_exponential(idx.size) < logr
            self.y[idx[acc]] = prop[acc]
            self._accept["y"][0] += int(acc.sum())
            self._accept["y"][1] += idx.size
            self._recent["y"][0] += int(acc.sum())
            self._recent["y"][1] += idx.size
        self._lp = None
        self._ll = None

    def _update_y_langevin(self):
        rng = self.rng
        scale = self.scales["y"] * self._y_scale_vector()
        params = self.current_params()
        spec = self.current_spec()
        for i in range(self.n):
            prop = self.y[i] + scale[i] * rng.standard_normal()
            if prop <= 0:
                self._count("y", False)
                continue
            lp_cur = self._logpost()
            y_prop = self.y.copy()
            y_prop[i] = prop
            lp_new = _log_posterior_arrays(
                self.times, self.horizon, self.gaps, self.z, y_prop,
                params, spec, self.hyper,
            )
            if -rng.standard_exponential() < lp_new - lp_cur:
                self.y = y_prop
                self._lp = lp_new
                self._ll = None
                self._count("y", True)
            else:
                self._count("y", False)

    def _update_a(self):
        rng = self.rng
        prop = self.vals["a"] + self.scales["a"] * rng.standard_normal()
        imm_t = self.times[self.z == 0]
        logr = _a_log_ratio_arrays(
            prop, self.vals["a"], self.vals["lambda0"], self.vals["delta"],
            imm_t, self.horizon, self.hyper.a,
        )
        if -rng.standard_exponential() < logr:
            self.vals["a"] = prop
            self._lp = None
            self._ll = None
            self._count("a", True)
        else:
            self._count("a", False)

    def _update_scalar_generic(self, block: str):
        """Exact posterior-ratio MH on one scalar.  Only the posterior terms
        the block enters are evaluated: the branching likelihood for lambda0
        and delta, the path transition density for k; the prior always."""
        rng = self.rng
        cur = self.vals[block]
        prop = cur + self.scales[block] * rng.standard_normal()
        if prop <= 0:
            self._count(block, False)
            return
        v = self.vals
        prior = getattr(self.hyper, block)
        if block in ("lambda0", "delta"):
            ll_cur = self._loglik_cached()
            lam0 = prop if block == "lambda0" else v["lambda0"]
            delta = prop if block == "delta" else v["delta"]
            ll_new = _loglik_arrays(
                self.times, self.horizon, self.z, self.y, v["a"], lam0, delta
            )
            logr = ll_new - ll_cur + _gamma_logpdf(prop, *prior) - _gamma_logpdf(cur, *prior)
        elif block == "k":
            spec_new = ExpLangevin(prop, v["mu"], v["sigma2"], self.spec0.y0)
            spec_cur = self.current_spec()
            logr = (
                _transition_loglik(spec_new, self.y, self.gaps)
                - _transition_loglik(spec_cur, self.y, self.gaps)
                + _normal_logpdf(prop, *prior)
                - _normal_logpdf(cur, *prior)
            )
            ll_new = None
        else:
            raise ValueError(f"no generic sampler block {block!r}")
        if -rng.standard_exponential() < logr:
            if block == "delta":
                self._set_delta(prop)
            else:
                self.vals[block] = prop
            self._lp = None
            self._ll = ll_new if block in ("lambda0", "delta") else self._ll
            self._count(block, True)
        else:
            self._count(block, False)

    def _update_tau(self):
        rng = self.rng
        cur = self.vals["tau"]
        prop = cur + self.scales["tau"] * rng.standard_normal()
        logr = (
            mh_log_accept_tau(prop, cur, self.y, self.vals["omega"], self.hyper.tau)
            if prop > 0
            else -np.inf
        )
        if -rng.standard_exponential() < logr:
            self.vals["tau"] = prop
            self._lp = None
            self._count("tau", True)
        else:
            self._count("tau", False)

    def _check_finite(self, block: str, value: float):
        if not np.isfinite(value):
            raise NonFinitePosteriorError(block, f"drew {value}")
        return value

    # -- one full sweep --------------------------------------------------

    def _gibbs_drift_and_variance(self):
        """Conjugate refresh of the diffusion parameters (mu, sigma2)."""
        v = self.vals
        y0 = self.spec0.y0
        if self.kind is Gbm:
            x = np.log(self.y / np.concatenate([[y0], self.y[:-1]])) if self.n else np.zeros(0)
            v["mu"] = self._check_finite(
                "mu", gibbs_gbm_mu(x, self.gaps, v["sigma2"], self.hyper.mu, self.rng)
            )
            v["sigma2"] = self._check_finite(
                "sigma2", gibbs_gbm_sigma2(x, self.gaps, v["mu"], self.hyper.sigma2, self.rng)
            )
        else:
            v["mu"] = self._check_finite(
                "mu",
                gibbs_langevin_mu(
                    self.y, y0, self.gaps, v["k"], v["sigma2"], self.hyper.mu, self.rng
                ),
            )
            v["sigma2"] = self._check_finite(
                "sigma2",
                gibbs_langevin_sigma2(
                    self.y, y0, self.gaps, v["k"], v["mu"], self.hyper.sigma2, self.rng
                ),
            )
        self._lp = None

    def sweep(self, y_passes: int = 1):
        v = self.vals
        y0 = self.spec0.y0 if self.kind in (Gbm, ExpLangevin) else None
        if self.n:
            self._draw_z()
            for extra in range(y_passes):
                if self.kind is IidGamma:
                    self._update_y_gamma()
                elif self.kind is Gbm:
                    self._update_y_gbm()
                elif self.kind is ExpLangevin:
                    self._update_y_langevin()
                # interleaving the conjugate (mu, sigma2) refresh between
                # level passes keeps the transition penalty in step with the
                # path roughness; the two blocks otherwise creep in lockstep
                if extra < y_passes - 1 and self.kind in (Gbm, ExpLangevin):
                    self._gibbs_drift_and_variance()
        self._update_a()
        self._update_scalar_generic("lambda0")
        self._update_scalar_generic("delta")
        if self.kind in (Gbm, ExpLangevin):
            self._gibbs_drift_and_variance()
            if self.kind is ExpLangevin:
                if self.k_update == "exact-mh":
                    self._update_scalar_generic("k")
                elif self.k_update == "linearized":
                    v["k"] = self._check_finite(
                        "k",
                        gibbs_langevin_k(
                            self.y, y0, self.gaps, v["mu"], v["sigma2"],
                            self.hyper.k, self.rng, v["k"],
                        ),
                    )
                    self._lp = None
        elif self.kind is IidGamma:
            v["omega"] = self._check_finite(
                "omega",
                gibbs_gamma_omega(self.y, v["tau"], self.hyper.omega, self.rng),
            )
            self._lp = None
            self._update_tau()


def run_mcmc(
    events: EventSequence,
    spec: SdeSpec,
    hyper: Hyperparams | None = None,
    config: McmcConfig | None = None,
) -> Chain:
    """Run the hybrid sampler and return the thinned post-burn-in chain.

    ``spec`` fixes the excitation law and its structural constants (y0 for
    the diffusions, psi for the constant law); its parameter values are
    re-initialized from the priors (or from a moment heuristic when
    ``config.init == "moment"``) before sampling starts.
    """
    hyper = hyper if hyper is not None else Hyperparams()
    config = config if config is not None else McmcConfig()
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    sampler = _GibbsMHSampler(events, spec, hyper, rng, k_update=config.k_update)
    sampler.initialize(config.init)

    states: list[ChainState] = []
    kept_iter: list[int] = []
    kept_ll: list[float] = []
    for it in range(config.iterations):
        sampler.sweep(config.y_passes)
        if config.adapt and it < config.burnin and (it + 1) % 25 == 0:
            sampler.adapt(config.target_accept)
        if it + 1 == config.burnin:
            sampler.reset_acceptance()
        if it >= config.burnin and (it - config.burnin) % config.thin == 0:
            ll = sampler.loglik()
            if not np.isfinite(ll):
                raise NonFinitePosteriorError("likelihood", f"iteration {it}")
            states.append(sampler.state(config.save_latent))
            kept_iter.append(it)
            kept_ll.append(ll)
    return Chain(
        states=states,
        acceptance_rates=sampler.acceptance_rates(),
        seed=config.seed,
        iterations=np.asarray(kept_iter, dtype=np.int64),
        loglik=np.asarray(kept_ll, dtype=float),
    )
