"""Primal log-barrier Newton method for smooth convex programs.

Solves ``min f0(x)  s.t.  f_i(x) < 0`` by minimizing ``t f0(x) - sum log(-f_i(x))``
for an increasing sequence of ``t``. Newton systems are assembled sparse
and factorized directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sl
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import NotConverged

__all__ = ["BarrierProblem", "BarrierResult", "barrier_solve"]

DENSE_LIMIT = 4000


@dataclass
class BarrierProblem:
    """Callbacks describing a convex program.

    ``objective(x) -> (value, grad, hess)`` with ``hess`` sparse or ``None``
    (linear objective). ``constraints(x, derivatives=True) -> (values, jac,
    curvature)`` where ``jac`` is a sparse ``m x n`` Jacobian and
    ``curvature(weights)`` returns the sparse ``sum_i weights_i * hess f_i`` (or
    ``None`` for affine constraints). With ``derivatives=False`` only the values
    are needed. Values may be non-finite outside the domain; such points are
    rejected by the line search.
    """

    n: int
    objective: Callable
    constraints: Callable


@dataclass
class BarrierResult:
    x: np.ndarray
    objective: float
    lower_bound: float  # objective - m/t at the final (approximately centered) point
    duals: np.ndarray  # 1 / (-t f_i(x)), multipliers for the constraints
    t: float
    outer_iters: int
    newton_iters: int


def _barrier_value(problem, x, t):
    f0, _, _ = problem.objective(x)
    vals = problem.constraints(x, derivatives=False)[0]
    if not np.all(np.isfinite(vals)) or np.any(vals >= 0) or not np.isfinite(f0):
        return np.inf
    return t * f0 - float(np.sum(np.log(-vals)))


def _newton_step(H, grad):
    """Solve ``H dx = -grad`` for the symmetric positive (semi)definite barrier Hessian.

    Hessians of graph-coupled constraints fill in heavily under sparse LU (hub
    nodes couple their whole two-hop neighbourhood), so moderate sizes use a
    dense Cholesky factorization, which is several times faster there.
    """
    scale = H.diagonal()
    scale = np.where(scale > 0, scale, 1.0)
    if H.shape[0] <= DENSE_LIMIT:
        Hd = H.toarray()
        Hd[np.diag_indices_from(Hd)] += 1e-14 * scale
        try:
            return sl.cho_solve(sl.cho_factor(Hd, check_finite=False), -grad, check_finite=False)
        except sl.LinAlgError:
            return sl.solve(Hd, -grad, assume_a="sym")
    H = H + sp.diags(1e-14 * scale)
    return spla.spsolve(H.tocsc(), -grad, permc_spec="MMD_AT_PLUS_A")


def _centering(problem, x, t, eps, max_newton):
    iters = 0
    prev_dec = np.inf
    for _ in range(max_newton):
        f0, g0, H0 = problem.objective(x)
        vals, J, curv = problem.constraints(x)
        inv = 1.0 / (-vals)
        grad = t * g0 + J.T @ inv
        H = (J.T @ sp.diags(inv * inv) @ J).tocsc()
        if H0 is not None:
            H = H + t * H0
        c = curv(inv) if curv is not None else None
        if c is not None:
            H = H + c
        dx = _newton_step(H, grad)
        if not np.all(np.isfinite(dx)):
            raise NotConverged("barrier Newton system is singular", last=x, iters=iters)
        dec2 = float(-grad @ dx)
        iters += 1
        if dec2 / 2.0 <= eps:
            break
        if dec2 < 1e-3 and dec2 > 0.5 * prev_dec:
            # decrement stopped shrinking quadratically: rounding noise dominates
            break
        prev_dec = dec2
        phi = t * f0 - float(np.sum(np.log(-vals)))
        step = 1.0
        if dec2 < 1e-3:
            # quadratic region: the predicted decrease is below what phi can resolve
            # in floating point, so take the full step whenever it stays feasible
            while not np.isfinite(_barrier_value(problem, x + step * dx, t)):
                step *= 0.5
                if step < 1e-14:
                    return x, iters
            x = x + step * dx
            continue
        while True:
            trial = x + step * dx
            val = _barrier_value(problem, trial, t)
            if val <= phi - 0.01 * step * dec2:
                break
            step *= 0.5
            if step < 1e-14:
                # no progress possible at working precision; treat as centered
                return x, iters
        x = trial
    return x, iters


def barrier_solve(
    problem: BarrierProblem,
    x0,
    tol: float = 1e-9,
    t0: float = 1.0,
    mu: float = 10.0,
    eps_newton: float = 1e-9,
    max_newton: int = 200,
    max_outer: int = 40,
) -> BarrierResult:
    """Run the barrier method from the strictly feasible point ``x0``.

    Stops when the duality-gap bound ``m / t`` is at most ``tol * (1 + |f0|)``.
    """
    x = np.asarray(x0, dtype=float).copy()
    vals = problem.constraints(x, derivatives=False)[0]
    if not np.all(np.isfinite(vals)) or np.any(vals >= 0):
        raise ValueError("barrier start point is not strictly feasible")
    m = vals.size
    t = t0
    newton_total = 0
    for outer in range(1, max_outer + 1):
        x, k = _centering(problem, x, t, eps_newton, max_newton)
        newton_total += k
        f0 = problem.objective(x)[0]
        if m / t <= tol * (1.0 + abs(f0)):
            break
        t *= mu
    else:
        raise NotConverged(f"barrier method did not reach gap tolerance in {max_outer} stages", last=x, iters=outer)
    vals = problem.constraints(x, derivatives=False)[0]
    return BarrierResult(
        x=x,
        objective=float(f0),
        lower_bound=float(f0 - m / t),
        duals=1.0 / (-t * vals),
        t=t,
        outer_iters=outer,
        newton_iters=newton_total,
    )
