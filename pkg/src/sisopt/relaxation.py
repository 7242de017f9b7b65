"""Convex relaxations of the investment problem: certified lower bounds,
recovered feasible points and an exactness certificate.

Two formulations are provided. ``solve_pr2`` works in log-scaled variables
``y`` with ``p >= exp(-y)`` so every constraint is a smooth convex function of
``(s, p, y)``. ``solve_pr1`` keeps the shift vector ``z = alpha*s + delta + lam + Bp``
and requires ``(diag(z) - B)^{-1} lam <= p`` over a shrinking inner
approximation of the M-matrix cone, refined with balancing and spectral shifts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .barrier import BarrierProblem, barrier_solve
from .exceptions import InfeasibleStart, NotConverged
from .mmatrix import balance, lower_sigma
from .netmodel import NetworkInstance
from .sis_core import equilibrium, residual

__all__ = ["RelaxSolution", "solve_pr2", "solve_pr1", "check_exactness", "recover_feasible", "opt_gap"]

EXACT_TOL = 1e-5  # relative gap below which a relaxation is reported exact
RECOVERY_TOL = 1e-12
ACTIVE_TOL = 1e-3
H_BAR = 10.0


@dataclass
class RelaxSolution:
    s_R: np.ndarray
    p_R: np.ndarray
    z_R: np.ndarray
    lower_bound: float  # certified: relaxed objective minus the barrier duality-gap bound
    relaxed_objective: float  # w's_R + c'p_R
    s_feas: np.ndarray
    p_feas: np.ndarray
    upper_bound: float
    exact: bool
    iters: int  # outer stages (pr1: refinement rounds)
    newton_iters: int
    runtime: float
    p_upper_active: int = 0  # coordinates with p_R within 1e-6 of 1
    history: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return (self.upper_bound - self.lower_bound) / max(abs(self.lower_bound), 1e-300)


def opt_gap(value: float, bound: float) -> float:
    """Relative optimality gap ``(value - bound) / bound``."""
    return (value - bound) / abs(bound)


def check_exactness(instance: NetworkInstance) -> bool:
    """Sufficient condition for an exact relaxation with linear costs: ``B^T (w / alpha) <= c``."""
    lhs = instance.BT @ (instance.w_weights / instance.alpha)
    return bool(np.all(lhs <= instance.cost_c))


def _strict_equilibrium(instance, s=None):
    s = np.zeros(instance.n) if s is None else s
    return equilibrium(instance, s, tol=1e-12, max_iters=200_000).p


def recover_feasible(instance: NetworkInstance, s):
    """Project ``s`` to ``s >= 0`` and pair it with its equilibrium; returns ``(s, p, F)``."""
    s = np.maximum(np.asarray(s, dtype=float), 0.0)
    p = _strict_equilibrium(instance, s)
    return s, p, float(instance.w_weights @ s + instance.cost_c @ p)


def _finish(instance, s_R, p_R, z_R, res, s_rec, t_start, iters, newton, history=None):
    s_feas, p_feas, upper = recover_feasible(instance, s_rec)
    lower = min(res.lower_bound, upper)
    relaxed = float(instance.w_weights @ s_R + instance.cost_c @ p_R)
    gap = (upper - lower) / max(abs(lower), 1e-300)
    return RelaxSolution(
        s_R=s_R,
        p_R=p_R,
        z_R=z_R,
        lower_bound=float(res.lower_bound),
        relaxed_objective=relaxed,
        s_feas=s_feas,
        p_feas=p_feas,
        upper_bound=upper,
        exact=bool(gap <= EXACT_TOL),
        iters=iters,
        newton_iters=newton,
        runtime=time.perf_counter() - t_start,
        p_upper_active=int(np.sum(p_R >= 1 - 1e-6)),
        history=history or [],
    )


# ---------------------------------------------------------------- log-scaled form


def exp_cone_problem(
    n, B, alpha, w, cost, lam_t, rhs_const, Bp_coef, budget=None, with_p_upper=True
):
    """Barrier problem over ``x = (s, p, y)``.

    Constraints (all ``<= 0``)::

        lam_t e^y + e^y * (B e^-y) - rhs_const - Bp_coef p - alpha s
        -s
        e^-y - p
        p - 1                  (optional)
        w's - budget           (optional)

    The objective is ``w's + c'p``. ``Bp_coef`` is the sparse matrix multiplying ``p`` in the first block.
    """
    B = sp.csr_matrix(B)
    Bp_coef = sp.csr_matrix(Bp_coef)
    rows_B = np.repeat(np.arange(n), np.diff(B.indptr))
    cols_B = B.indices
    Bp = Bp_coef.tocoo()
    ar = np.arange(n)
    obj_grad = np.concatenate([w, cost, np.zeros(n)])

    # fixed sparsity pattern of the Jacobian; only the data changes between calls
    rows = [ar, Bp.row, ar, rows_B, n + ar, 2 * n + ar, 2 * n + ar]
    cols = [ar, n + Bp.col, 2 * n + ar, 2 * n + cols_B, ar, n + ar, 2 * n + ar]
    fixed = [-alpha, -Bp.data, None, None, -np.ones(n), -np.ones(n), None]
    m = 3 * n
    if with_p_upper:
        rows.append(m + ar)
        cols.append(n + ar)
        fixed.append(np.ones(n))
        m += n
    if budget is not None:
        rows.append(np.full(n, m))
        cols.append(ar)
        fixed.append(np.asarray(w, dtype=float))
        m += 1
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)

    def objective(x):
        return float(obj_grad @ x), obj_grad, None

    def constraints(x, derivatives=True):
        s, p, y = x[:n], x[n : 2 * n], x[2 * n :]
        with np.errstate(over="ignore"):
            ey = np.exp(y)
            emy = np.exp(-y)
            e_data = B.data * np.exp(y[rows_B] - y[cols_B])
        E1 = np.bincount(rows_B, weights=e_data, minlength=n)
        vals = [lam_t * ey + E1 - rhs_const - Bp_coef @ p - alpha * s, -s, emy - p]
        if with_p_upper:
            vals.append(p - 1.0)
        if budget is not None:
            vals.append(np.array([w @ s - budget]))
        vals = np.concatenate(vals)
        if not np.all(np.isfinite(vals)):
            vals = np.full(m, np.inf)
            return vals, None, None
        if not derivatives:
            return vals, None, None
        data = list(fixed)
        data[2] = lam_t * ey + E1
        data[3] = -e_data
        data[6] = -emy
        J = sp.csr_matrix((np.concatenate(data), (rows, cols)), shape=(m, 3 * n))

        def curvature(weights):
            mu1, mu3 = weights[:n], weights[2 * n : 3 * n]
            a = mu1[rows_B] * e_data
            deg = np.bincount(rows_B, weights=a, minlength=n) + np.bincount(cols_B, weights=a, minlength=n)
            diag = mu1 * lam_t * ey + mu3 * emy + deg
            r = np.concatenate([2 * n + ar, 2 * n + rows_B, 2 * n + cols_B])
            c = np.concatenate([2 * n + ar, 2 * n + cols_B, 2 * n + rows_B])
            d = np.concatenate([diag, -a, -a])
            return sp.csr_matrix((d, (r, c)), shape=(3 * n, 3 * n))

        return vals, J, curvature

    return BarrierProblem(n=3 * n, objective=objective, constraints=constraints)


def pr2_phi(instance, p, y):
    """Lower bound on ``alpha*s`` implied by ``(p, y)``."""
    ey = np.exp(y)
    return instance.lam * ey + ey * (instance.B @ np.exp(-y)) - instance.delta - instance.lam - instance.B @ p


def solve_pr2(instance: NetworkInstance, tol: float = 1e-9) -> RelaxSolution:
    """Solve the log-scaled relaxation by the barrier method and recover a feasible point.

    The recovered investment is ``s' = [s + alpha^{-1} B (p - e^{-y})]_+``, paired
    with its exact equilibrium so the recovered point satisfies the model
    equations to working precision.
    """
    t_start = time.perf_counter()
    n = instance.n
    alpha = instance.alpha
    p0 = np.clip(_strict_equilibrium(instance), 1e-3, 1 - 1e-3)
    y0 = -np.log(p0) + 0.1
    s0 = np.maximum(pr2_phi(instance, p0, y0), 0.0) / alpha + 1.0
    problem = exp_cone_problem(
        n,
        instance.B,
        alpha,
        instance.w_weights,
        instance.cost_c,
        lam_t=instance.lam,
        rhs_const=instance.delta + instance.lam,
        Bp_coef=instance.B,
    )
    res = barrier_solve(problem, np.concatenate([s0, p0, y0]), tol=tol)
    s, p, y = res.x[:n], res.x[n : 2 * n], res.x[2 * n :]
    ey = np.exp(y)
    z = instance.lam * ey + ey * (instance.B @ np.exp(-y))
    s_rec = s + (instance.B @ (p - np.exp(-y))) / alpha
    return _finish(instance, s, p, z, res, s_rec, t_start, res.outer_iters, res.newton_iters)


# ---------------------------------------------------------------- M-matrix form


def _pr1_problem(instance, z_lower):
    n = instance.n
    B = instance.B.toarray()
    lam, alpha, base = instance.lam, instance.alpha, instance.delta + instance.lam
    K = np.hstack([np.diag(alpha), B])  # dz / d(s, p)
    grad = np.concatenate([instance.w_weights, instance.cost_c])
    eye = np.eye(n)
    zero = np.zeros((n, n))
    J_rest = np.vstack([np.hstack([-eye, zero]), np.hstack([zero, eye])])
    cache = {}

    def objective(x):
        return float(grad @ x), grad, None

    def constraints(x, derivatives=True):
        s, p = x[:n], x[n:]
        z = alpha * s + base + B @ p
        m = 4 * n
        if np.any(z <= z_lower):
            return np.full(m, np.inf), None, None
        try:
            G = np.linalg.inv(np.diag(z) - B)
        except np.linalg.LinAlgError:
            return np.full(m, np.inf), None, None
        v = G @ lam
        if np.any(G < -1e-12):
            return np.full(m, np.inf), None, None
        vals = np.concatenate([v - p, z_lower - z, -s, p - 1.0])
        if not derivatives:
            return vals, None, None
        Jv = -(G * v[None, :]) @ K - np.hstack([zero, eye])
        J = sp.csr_matrix(np.vstack([Jv, -K, J_rest]))
        cache["G"], cache["v"] = G, v

        def curvature(weights):
            mu = weights[:n]
            q = G.T @ mu
            Hz = (q[:, None] * G) * v[None, :]
            Hz = Hz + Hz.T
            return sp.csr_matrix(K.T @ Hz @ K)

        return vals, J, curvature

    return BarrierProblem(n=2 * n, objective=objective, constraints=constraints)


def _pr1_start(instance, z_lower):
    alpha = instance.alpha
    s0 = (np.maximum(z_lower - instance.delta - instance.lam, 0.0) + 1.0) / alpha
    p_eq = _strict_equilibrium(instance, s0)
    top = float(np.max(p_eq))
    eps = min(0.1, 0.5 * (1.0 / top - 1.0))
    p0 = (1.0 + eps) * p_eq
    return s0, p0


def _initial_lower_shift(instance):
    try:
        return balance(instance.B, instance.w_weights / instance.alpha).zbar
    except (ValueError, NotConverged):
        # reducible B: fall back to the diagonal-dominance subset z >= B1
        return np.asarray(instance.B.sum(axis=1)).ravel()


def solve_pr1(instance: NetworkInstance, tol: float = 1e-9, max_outer: int = 20) -> RelaxSolution:
    """Refinement scheme for the M-matrix relaxation.

    Round 0 restricts the shift vector to ``z >= zbar`` with ``zbar`` from
    balancing ``diag(w/alpha) B``. Each later round finds the coordinates whose
    bound is active, reweights them by 10, and moves the bound to the boundary
    point ``z - d h`` with ``d`` the smallest eigenvalue of
    ``diag(h)^{-1}(diag(z) - B)``. Stops when no bound is active or the objective
    stalls. Uses dense inverses, so it is meant for small and medium ``N``.
    """
    t_start = time.perf_counter()
    n = instance.n
    z_lower = _initial_lower_shift(instance)
    history = []
    newton = 0
    res = None
    prev = np.inf
    reducible = False
    for outer in range(max_outer):
        s0, p0 = _pr1_start(instance, z_lower)
        problem = _pr1_problem(instance, z_lower)
        vals = problem.constraints(np.concatenate([s0, p0]))[0]
        if not np.all(vals < 0):
            raise InfeasibleStart("could not build a strictly feasible start for the M-matrix relaxation")
        res = barrier_solve(problem, np.concatenate([s0, p0]), tol=tol)
        newton += res.newton_iters
        s, p = res.x[:n], res.x[n:]
        z = instance.alpha * s + instance.delta + instance.lam + instance.B @ p
        active = (z - z_lower) <= ACTIVE_TOL
        history.append({"round": outer, "objective": res.objective, "active": int(active.sum())})
        if not active.any() or reducible:
            break
        if abs(prev - res.objective) <= 1e-8 * abs(res.objective):
            break
        prev = res.objective
        h = np.where(active, H_BAR, 1.0)
        try:
            d = lower_sigma(z / h, sp.diags(1.0 / h) @ instance.B).value
        except NotConverged:
            reducible = True
            continue
        z_lower = z - d * h
    s, p = res.x[:n], res.x[n:]
    z = instance.alpha * s + instance.delta + instance.lam + instance.B @ p
    return _finish(instance, s, p, z, res, s, t_start, len(history), newton, history)


def relaxation_residual(instance: NetworkInstance, sol: RelaxSolution) -> float:
    return float(np.max(np.abs(residual(instance, sol.s_feas, sol.p_feas))))
