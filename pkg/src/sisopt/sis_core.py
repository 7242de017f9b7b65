"""SIS mean-field equilibrium, ODE dynamics and the average-cost objective.

The dynamics for infection probabilities ``p`` under investments ``s`` are::

    dp/dt = (1 - p) * (lam + B p) - (alpha * s + delta) * p

and the equilibrium is the fixed point of
``p <- (lam + B p) / (lam + B p + alpha * s + delta)`` started from ``p = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import NotConverged, StepTooLarge
from .mmatrix import dominant_eigenvalue
from .netmodel import NetworkInstance

__all__ = [
    "EquilibriumState",
    "CostBreakdown",
    "Trajectory",
    "equilibrium",
    "residual",
    "simulate_dynamics",
    "default_dt",
    "average_cost",
    "stable_equilibrium_lambda0",
    "suppression_ratio",
]

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITERS = 500
SPECTRAL_TOL = 1e-9


@dataclass
class EquilibriumState:
    p: np.ndarray
    residual: float  # max |g_i(s, p)|
    iters: int
    converged: bool
    rate: float = float("nan")  # observed geometric contraction rate of the iteration
    spectral_ratio: float | None = None  # rho(diag(alpha*s+delta)^-1 B), lambda = 0 only


@dataclass
class CostBreakdown:
    total: float
    invest: float
    infect: float
    p: np.ndarray = field(repr=False, default=None)


def _check_s(instance: NetworkInstance, s):
    s = np.asarray(s, dtype=float).reshape(-1)
    if s.shape != (instance.n,):
        raise ValueError(f"investment vector must have length {instance.n}, got {s.shape[0]}")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("investments must be finite and nonnegative")
    return s


def residual(instance: NetworkInstance, s, p) -> np.ndarray:
    """Constraint residual ``g_i = (1 - p_i)(lam_i + (Bp)_i) - (alpha_i s_i + delta_i) p_i``."""
    s = np.asarray(s, dtype=float)
    p = np.asarray(p, dtype=float)
    return (1.0 - p) * (instance.lam + instance.B @ p) - (instance.alpha * s + instance.delta) * p


def _fixed_point(B, lam, recovery, p, tol, max_iters):
    """Iterate ``p <- (lam + Bp) / (lam + Bp + recovery)``; returns (p, iters, converged, rate)."""
    prev_step = None
    rates = []
    for k in range(1, max_iters + 1):
        pressure = lam + B @ p
        p_new = pressure / (pressure + recovery)
        step = np.linalg.norm(p_new - p)
        scale = np.linalg.norm(p_new)
        p = p_new
        if prev_step is not None and prev_step > 0 and step > 0:
            rates.append(step / prev_step)
        prev_step = step
        if step <= tol * scale:
            rate = float(np.median(rates[-10:])) if rates else 0.0
            return p, k, True, rate
    rate = float(np.median(rates[-10:])) if rates else float("nan")
    return p, max_iters, False, rate


def equilibrium(
    instance: NetworkInstance,
    s,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    p0=None,
) -> EquilibriumState:
    """Equilibrium infection probabilities ``p*(s)``.

    Starts from ``p0 = 1`` by default. Any ``p0`` in ``[0, 1]^N`` also converges
    when ``lam`` is positive somewhere, since the iterates stay sandwiched between
    the runs started from 0 and from 1, which share the unique limit.
    """
    s = _check_s(instance, s)
    p = np.ones(instance.n) if p0 is None else np.clip(np.asarray(p0, dtype=float), 0.0, 1.0)
    recovery = instance.alpha * s + instance.delta
    p, iters, ok, rate = _fixed_point(instance.B, instance.lam, recovery, p, tol, max_iters)
    g = float(np.max(np.abs(residual(instance, s, p)))) if instance.n else 0.0
    state = EquilibriumState(p=p, residual=g, iters=iters, converged=ok, rate=rate)
    if not ok:
        raise NotConverged(f"equilibrium iteration hit {max_iters} iterations", last=state, iters=iters)
    return state


def default_dt(instance: NetworkInstance, s) -> float:
    """RK4 step heuristic ``min(0.01, 0.1 / max_i(lam + delta + alpha*s + B1))``."""
    s = np.asarray(s, dtype=float)
    rate = instance.lam + instance.delta + instance.alpha * s + np.asarray(instance.B.sum(axis=1)).ravel()
    return min(0.01, 0.1 / float(np.max(rate)))


@dataclass
class Trajectory:
    t: np.ndarray
    p: np.ndarray  # shape (len(t), N)
    clamp_events: int  # steps where clamping moved a component by more than 1e-9
    max_clamp: float

    @property
    def final(self) -> np.ndarray:
        return self.p[-1]


def simulate_dynamics(instance: NetworkInstance, s, p0, horizon: float, dt: float | None = None, record_every: int = 1):
    """Fixed-step RK4 integration of the mean-field ODE on ``[0, horizon]``.

    Each step is clamped back into ``[0, 1]^N``; moves larger than 1e-9 are
    counted in the returned ``clamp_events``. A component leaving
    ``[-1e-6, 1 + 1e-6]`` before clamping raises StepTooLarge.
    """
    s = _check_s(instance, s)
    p = np.asarray(p0, dtype=float).copy()
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("initial probabilities must lie in [0, 1]")
    if dt is None:
        dt = default_dt(instance, s)
    B, lam = instance.B, instance.lam
    recovery = instance.alpha * s + instance.delta

    def f(q):
        return (1.0 - q) * (lam + B @ q) - recovery * q

    n_steps = int(np.ceil(horizon / dt - 1e-12))
    ts, ps = [0.0], [p.copy()]
    clamp_events, max_clamp = 0, 0.0
    t = 0.0
    for k in range(1, n_steps + 1):
        h = min(dt, horizon - t)
        k1 = f(p)
        k2 = f(p + 0.5 * h * k1)
        k3 = f(p + 0.5 * h * k2)
        k4 = f(p + h * k3)
        p = p + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
        if np.any(p < -1e-6) or np.any(p > 1 + 1e-6):
            raise StepTooLarge(f"RK4 step {h:g} left [0, 1] at t={t:g}; use a smaller dt")
        clipped = np.clip(p, 0.0, 1.0)
        moved = float(np.max(np.abs(clipped - p))) if p.size else 0.0
        if moved > 1e-9:
            clamp_events += 1
            max_clamp = max(max_clamp, moved)
        p = clipped
        if k % record_every == 0 or k == n_steps:
            ts.append(t)
            ps.append(p.copy())
    return Trajectory(t=np.array(ts), p=np.array(ps), clamp_events=clamp_events, max_clamp=max_clamp)


def average_cost(instance: NetworkInstance, s, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS, p0=None) -> CostBreakdown:
    """``w's + c'p*(s)`` split into its investment and infection parts."""
    s = _check_s(instance, s)
    state = equilibrium(instance, s, tol=tol, max_iters=max_iters, p0=p0)
    invest = float(instance.w_weights @ s)
    infect = float(instance.cost_c @ state.p)
    return CostBreakdown(total=invest + infect, invest=invest, infect=infect, p=state.p)


def suppression_ratio(instance: NetworkInstance, s) -> float:
    """``rho(diag(alpha*s + delta)^{-1} B)`` by power iteration."""
    s = np.asarray(s, dtype=float)
    M = sp.diags(1.0 / (instance.alpha * s + instance.delta)) @ instance.B
    if instance.n_edges == 0:
        return 0.0
    return dominant_eigenvalue(M, tol=1e-12).value


def stable_equilibrium_lambda0(
    instance: NetworkInstance,
    s,
    tol: float = DEFAULT_TOL,
    max_iters: int = 100_000,
    spectral_tol: float = SPECTRAL_TOL,
) -> EquilibriumState:
    """Stable equilibrium when there are no external attacks (``lam = 0``).

    Returns ``p = 0`` when ``rho(diag(alpha*s + delta)^{-1} B) <= 1 + spectral_tol``;
    otherwise iterates from ``p = 1`` to the positive endemic state.
    """
    s = _check_s(instance, s)
    if np.any(instance.lam != 0):
        raise ValueError("stable_equilibrium_lambda0 requires lam = 0")
    rho = suppression_ratio(instance, s)
    if rho <= 1.0 + spectral_tol:
        return EquilibriumState(p=np.zeros(instance.n), residual=0.0, iters=0, converged=True, spectral_ratio=rho)
    recovery = instance.alpha * s + instance.delta
    p, iters, ok, rate = _fixed_point(instance.B, instance.lam, recovery, np.ones(instance.n), tol, max_iters)
    g = float(np.max(np.abs(residual(instance, s, p))))
    state = EquilibriumState(p=p, residual=g, iters=iters, converged=ok, rate=rate, spectral_ratio=rho)
    if not ok:
        raise NotConverged(f"endemic-state iteration hit {max_iters} iterations", last=state, iters=iters)
    return state
