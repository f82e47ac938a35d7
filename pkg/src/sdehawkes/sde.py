"""Excitation-level laws and their exact transitions over irregular gaps.

Four laws are supported for the sequence of excitation levels sampled at
event times:

* ``Constant(psi)``     -- the classical fixed jump size,
* ``IidGamma(tau, omega)`` -- independent Gamma(shape tau, rate omega) draws,
* ``Gbm(mu, sigma2, y0)`` -- geometric Brownian motion,
* ``ExpLangevin(k, mu, sigma2, y0)`` -- the exponential of a mean-reverting
  Ornstein-Uhlenbeck process (reversion rate k, asymptotic log-mean mu).

The two diffusions admit exact transition laws over an arbitrary gap dt, so
paths are sampled without discretization error:

    GBM:          log(Y'/Y) ~ N(mu dt, sigma2 dt)
    exp-Langevin: log Y'    ~ N(phi log Y + mu (1 - phi),
                                sigma2 (1 - phi^2) / (2 k)),  phi = e^{-k dt}
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .model import ContagionPath, EventSequence, _as_float_array

__all__ = [
    "Constant",
    "IidGamma",
    "Gbm",
    "ExpLangevin",
    "SdeSpec",
    "GapSeries",
    "gaps_from_events",
    "gbm_step",
    "gbm_transition_logpdf",
    "exp_langevin_step",
    "exp_langevin_transition_logpdf",
    "sample_path",
    "mean_level_fn",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Constant:
    """Fixed excitation level psi >= 0 (psi = 0 gives an inhomogeneous
    Poisson process)."""

    psi: float

    def __post_init__(self):
        if not np.isfinite(self.psi) or self.psi < 0:
            raise ValueError(f"psi must be finite and nonnegative, got {self.psi}")


@dataclass(frozen=True)
class IidGamma:
    """Independent Gamma(shape tau, rate omega) levels, density proportional
    to y^{tau - 1} e^{-omega y}."""

    tau: float
    omega: float

    def __post_init__(self):
        if not np.isfinite(self.tau) or self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not np.isfinite(self.omega) or self.omega <= 0:
            raise ValueError(f"omega must be positive, got {self.omega}")


@dataclass(frozen=True)
class Gbm:
    """Geometric Brownian motion with log-drift mu and variance rate sigma2,
    started at y0 > 0."""

    mu: float
    sigma2: float
    y0: float

    def __post_init__(self):
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not np.isfinite(self.y0) or self.y0 <= 0:
            raise ValueError(f"y0 must be positive, got {self.y0}")


@dataclass(frozen=True)
class ExpLangevin:
    """Exponentiated Ornstein-Uhlenbeck levels: log Y reverts to mu at rate
    k > 0 with noise intensity sigma = sqrt(sigma2), started at y0 > 0."""

    k: float
    mu: float
    sigma2: float
    y0: float

    def __post_init__(self):
        if not np.isfinite(self.k) or self.k <= 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if not np.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not np.isfinite(self.y0) or self.y0 <= 0:
            raise ValueError(f"y0 must be positive, got {self.y0}")


SdeSpec = Union[Constant, IidGamma, Gbm, ExpLangevin]


@dataclass(frozen=True, eq=False)
class GapSeries:
    """Inter-event gaps Delta_i = T_i - T_{i-1} with T_0 = 0; all positive."""

    gaps: np.ndarray

    def __post_init__(self):
        gaps = _as_float_array(self.gaps, "gaps")
        object.__setattr__(self, "gaps", gaps)
        if np.any(gaps <= 0):
            raise ValueError("gaps must be strictly positive")

    def __len__(self) -> int:
        return int(self.gaps.size)


def gaps_from_events(events: EventSequence) -> GapSeries:
    """Gap series of an event sequence, with the first gap taken from 0."""
    return GapSeries(np.diff(events.times, prepend=0.0))


def _require_positive(value, name: str):
    if np.any(np.asarray(value) <= 0):
        raise ValueError(f"{name} must be positive")


def gbm_step(y_prev, dt, mu, sigma2, eps):
    """One exact GBM transition: y_prev * exp(mu dt + sqrt(sigma2 dt) eps).

    ``eps`` is a standard-normal draw.  Scalar or array arguments broadcast.
    """
    _require_positive(y_prev, "y_prev")
    _require_positive(dt, "dt")
    _require_positive(sigma2, "sigma2")
    out = y_prev * np.exp(mu * dt + np.sqrt(sigma2 * dt) * eps)
    return float(out) if np.ndim(out) == 0 else out


def gbm_transition_logpdf(y_prev, y_next, dt, mu, sigma2):
    """Log-density of a GBM transition from y_prev to y_next over dt.

    Lognormal: N(log(y_next / y_prev); mu dt, sigma2 dt) with Jacobian
    -log y_next.  Returns -inf where either level is nonpositive.
    """
    _require_positive(dt, "dt")
    _require_positive(sigma2, "sigma2")
    y_prev = np.asarray(y_prev, dtype=float)
    y_next = np.asarray(y_next, dtype=float)
    ok = (y_prev > 0) & (y_next > 0)
    var = sigma2 * np.asarray(dt, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.log(np.where(ok, y_next, 1.0) / np.where(ok, y_prev, 1.0))
        val = (
            -0.5 * (_LOG_2PI + np.log(var))
            - (x - mu * np.asarray(dt, dtype=float)) ** 2 / (2.0 * var)
            - np.log(np.where(ok, y_next, 1.0))
        )
    out = np.where(ok, val, -np.inf)
    return float(out) if out.ndim == 0 else out


def exp_langevin_step(y_prev, dt, k, mu, sigma2, eps):
    """One exact exp-Langevin transition over dt.

    With phi = e^{-k dt}:

        Y' = exp( phi log y_prev + mu (1 - phi)
                  + sqrt(sigma2 (1 - phi^2) / (2 k)) eps )
    """
    _require_positive(y_prev, "y_prev")
    _require_positive(dt, "dt")
    _require_positive(k, "k")
    _require_positive(sigma2, "sigma2")
    dt = np.asarray(dt, dtype=float)
    phi = np.exp(-k * dt)
    var = sigma2 * (-np.expm1(-2.0 * k * dt)) / (2.0 * k)
    out = np.exp(phi * np.log(y_prev) + mu * (1.0 - phi) + np.sqrt(var) * eps)
    return float(out) if np.ndim(out) == 0 else out


def exp_langevin_transition_logpdf(y_prev, y_next, dt, k, mu, sigma2):
    """Log-density of an exp-Langevin transition from y_prev to y_next.

    Gaussian in log y_next with mean phi log y_prev + mu (1 - phi) and
    variance sigma2 (1 - phi^2) / (2 k); -inf for nonpositive levels.
    """
    _require_positive(dt, "dt")
    _require_positive(k, "k")
    _require_positive(sigma2, "sigma2")
    y_prev = np.asarray(y_prev, dtype=float)
    y_next = np.asarray(y_next, dtype=float)
    dt = np.asarray(dt, dtype=float)
    ok = (y_prev > 0) & (y_next > 0)
    phi = np.exp(-k * dt)
    var = sigma2 * (-np.expm1(-2.0 * k * dt)) / (2.0 * k)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.log(np.where(ok, y_next, 1.0))
        mean = phi * np.log(np.where(ok, y_prev, 1.0)) + mu * (1.0 - phi)
        val = -0.5 * (_LOG_2PI + np.log(var)) - (x - mean) ** 2 / (2.0 * var) - x
    out = np.where(ok, val, -np.inf)
    return float(out) if out.ndim == 0 else out


def sample_path(
    spec: SdeSpec, gaps: GapSeries, rng: np.random.Generator
) -> ContagionPath:
    """Sample excitation levels Y_1..Y_n over the given gap series.

    Diffusion laws are chained from y0 through their exact transitions;
    ``IidGamma`` draws levels independently and ``Constant`` repeats psi.
    """
    n = len(gaps)
    if n == 0:
        raise ValueError("gaps must be nonempty")
    d = gaps.gaps
    if isinstance(spec, Constant):
        levels = np.full(n, spec.psi)
    elif isinstance(spec, IidGamma):
        levels = rng.gamma(spec.tau, 1.0 / spec.omega, size=n)
    elif isinstance(spec, Gbm):
        eps = rng.standard_normal(n)
        log_levels = math.log(spec.y0) + np.cumsum(
            spec.mu * d + np.sqrt(spec.sigma2 * d) * eps
        )
        levels = np.exp(log_levels)
    elif isinstance(spec, ExpLangevin):
        eps = rng.standard_normal(n)
        phi = np.exp(-spec.k * d)
        sd = np.sqrt(spec.sigma2 * (-np.expm1(-2.0 * spec.k * d)) / (2.0 * spec.k))
        levels = np.empty(n)
        log_y = math.log(spec.y0)
        for i in range(n):
            log_y = phi[i] * log_y + spec.mu * (1.0 - phi[i]) + sd[i] * eps[i]
            levels[i] = math.exp(log_y)
    else:
        raise TypeError(f"unknown excitation law {type(spec).__name__}")
    return ContagionPath(levels)


def mean_level_fn(spec: SdeSpec):
    """Closed-form t -> E[Y_t] for a law, used by the mean-intensity solver.

    GBM: y0 e^{(mu + sigma2/2) t}.  Exp-Langevin: lognormal mean of the OU
    marginal.  Constant and IidGamma have time-constant means.
    """
    if isinstance(spec, Constant):
        return lambda t: spec.psi * np.ones_like(np.asarray(t, dtype=float))
    if isinstance(spec, IidGamma):
        m = spec.tau / spec.omega
        return lambda t: m * np.ones_like(np.asarray(t, dtype=float))
    if isinstance(spec, Gbm):
        rate = spec.mu + 0.5 * spec.sigma2
        return lambda t: spec.y0 * np.exp(rate * np.asarray(t, dtype=float))
    if isinstance(spec, ExpLangevin):
        log_y0 = math.log(spec.y0)

        def mean(t):
            t = np.asarray(t, dtype=float)
            phi = np.exp(-spec.k * t)
            m = phi * log_y0 + spec.mu * (1.0 - phi)
            v = spec.sigma2 * (-np.expm1(-2.0 * spec.k * t)) / (2.0 * spec.k)
            return np.exp(m + 0.5 * v)

        return mean
    raise TypeError(f"unknown excitation law {type(spec).__name__}")
