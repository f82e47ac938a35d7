"""EM-style quantities for the constant-excitation (classical) model.

With a constant excitation level psi the latent parent of each event has a
closed-form posterior, and those responsibilities coincide exactly with the
Gibbs branching conditional evaluated at Y = psi.  This module carries the
responsibilities, the expected complete-data log-likelihood Q, and a
one-dimensional coordinate update for psi used to exercise the EM ascent
property (the latter is implementation-added; it is not part of the model
contract).
"""

from __future__ import annotations

import numpy as np

from .model import EventSequence, HawkesParams, base_intensity

__all__ = ["em_responsibilities", "em_q_value", "em_update_psi"]


def em_responsibilities(
    events: EventSequence, params: HawkesParams, psi: float
) -> np.ndarray:
    """Posterior parent probabilities under constant excitation psi.

    Returns an (n, n) matrix whose row i-1 (for event number i) holds the
    probability that event i descends from event j at column j-1 for j < i,
    and the immigrant probability on the diagonal.  Rows sum to one.
    """
    if psi < 0:
        raise ValueError("psi must be nonnegative")
    n = events.n
    times = events.times
    resp = np.zeros((n, n))
    for i in range(n):
        ti = times[i]
        base = base_intensity(ti, params)
        w = psi * np.exp(-params.delta * (ti - times[:i]))
        total = base + w.sum()
        resp[i, :i] = w / total
        resp[i, i] = base / total
    return resp


def _check_responsibilities(events: EventSequence, resp: np.ndarray) -> np.ndarray:
    resp = np.asarray(resp, dtype=float)
    n = events.n
    if resp.shape != (n, n):
        raise ValueError(f"responsibilities must be ({n}, {n}), got {resp.shape}")
    if np.any(resp < 0) or not np.allclose(resp.sum(axis=1), 1.0, atol=1e-8):
        raise ValueError("responsibilities must be row-stochastic")
    return resp


def em_q_value(
    events: EventSequence, resp: np.ndarray, params: HawkesParams, psi: float
) -> float:
    """Expected complete-data log-likelihood under the responsibilities.

    Immigrant terms weight log base intensity, offspring terms weight the
    log kernel psi e^{-delta dt}, and each event pays its kernel exposure
    psi (1 - e^{-delta (T - T_i)}) / delta.  Returns -inf when psi = 0 but
    some offspring responsibility is positive.
    """
    resp = _check_responsibilities(events, resp)
    n = events.n
    times, delta = events.times, params.delta
    q = float(np.dot(np.diag(resp), np.log(base_intensity(times, params))))
    q -= psi * float(np.sum((-np.expm1(-delta * (events.horizon - times))) / delta))
    for i in range(n):
        r = resp[i, :i]
        pos = r > 0
        if not np.any(pos):
            continue
        if psi == 0:
            return float("-inf")
        log_kernel = np.log(psi) - delta * (times[i] - times[:i][pos])
        q += float(np.dot(r[pos], log_kernel))
    return q


def em_update_psi(
    events: EventSequence, resp: np.ndarray, params: HawkesParams
) -> float:
    """Coordinate-ascent update for psi at fixed (a, lambda0, delta):
    total offspring responsibility over total kernel exposure."""
    resp = _check_responsibilities(events, resp)
    delta = params.delta
    offspring_mass = float(np.sum(np.tril(resp, k=-1)))
    exposure = float(
        np.sum((-np.expm1(-delta * (events.horizon - events.times))) / delta)
    )
    return offspring_mass / exposure
