"""Investment planning when there are no external attacks (``lam = 0``).

With ``lam = 0`` the all-susceptible state is always an equilibrium, and it
is the stable one exactly when ``rho(diag(alpha*s + delta)^{-1} B) <= 1``. The
cheapest investment reaching that threshold, the suppression budget ``C*``,
bounds the optimal cost from above. A budget-constrained relaxation and a
projected reduced gradient method bracket the optimum below ``C*``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize as so
import scipy.sparse as sp

from .barrier import BarrierProblem, barrier_solve
from .exceptions import DegenerateBudget, NotConverged
from .local_search import LocalSolution, RgmConfig, _projected_descent, _projected_grad_norm, objective, reduced_gradient
from .mmatrix import balance
from .netmodel import NetworkInstance
from .relaxation import RelaxSolution
from .sis_core import SPECTRAL_TOL, equilibrium, stable_equilibrium_lambda0, suppression_ratio

__all__ = [
    "SuppressionResult",
    "Lambda0Report",
    "min_suppression_budget",
    "suppression_budget_dual",
    "solve_pr3",
    "budget_is_active",
    "project_budget",
    "projected_rgm",
    "sufficient_condition",
    "weak_condition",
    "pipeline",
    "budget_sweep",
]

ROUTES = ("no_investment", "suppression_optimal", "suppression_eps_suboptimal", "interior_local")
EPS_FLOOR = 1e-4
BUDGET_ACTIVE_TOL = 1e-6


def _require_zero_lambda(instance):
    if np.any(instance.lam != 0):
        raise ValueError("this routine requires lam = 0 at every node")


@dataclass
class SuppressionResult:
    c_star: float
    s0: np.ndarray
    spectral_check: float  # rho(diag(alpha*s0 + delta)^{-1} B)
    lower_bound: float = 0.0  # certified lower bound on c_star from the barrier gap
    newton_iters: int = 0


def _gauge_problem(instance, with_p=False, budget=None):
    """Barrier problem over ``x = (s, [p], y_1..y_{N-1})`` with ``y_0 = 0`` fixing the scale.

    Constraint ``i``: ``sum_j b_ij e^{y_j - y_i} <= alpha_i s_i + delta_i [+ (Bp)_i]``,
    i.e. ``x = e^y`` certifies ``B x <= (alpha*s + delta + Bp) * x``. Also
    ``s >= 0``, ``p >= 0`` and optionally ``w's <= budget``. The objective is
    ``w's [+ c'p]``.

    Only ratios ``e^{y_j - y_i}`` enter, so without the gauge the problem would
    be invariant along ``y + t1`` and the Newton systems singular.
    """
    n = instance.n
    B = instance.B
    alpha, delta, w = instance.alpha, instance.delta, instance.w_weights
    rows_B = np.repeat(np.arange(n), np.diff(B.indptr))
    cols_B = B.indices
    Bc = B.tocoo()
    ar = np.arange(n)
    k = 2 if with_p else 1  # number of n-sized leading blocks
    grad = np.concatenate([w, instance.cost_c if with_p else np.zeros(0), np.zeros(n - 1)])
    m = (k + 1) * n + (budget is not None)
    yoff = k * n  # column offset of the (full) y block

    def objective_fn(x):
        return float(grad @ x), grad, None

    def constraints(x, derivatives=True):
        s = x[:n]
        p = x[n : 2 * n] if with_p else None
        y = np.concatenate([[0.0], x[yoff:]])
        with np.errstate(over="ignore"):
            e = B.data * np.exp(y[cols_B] - y[rows_B])
        rowsum = np.bincount(rows_B, weights=e, minlength=n)
        c1 = rowsum - alpha * s - delta
        vals = [c1 - B @ p if with_p else c1, -s]
        if with_p:
            vals.append(-p)
        if budget is not None:
            vals.append(np.array([w @ s - budget]))
        vals = np.concatenate(vals)
        if not np.all(np.isfinite(vals)):
            return np.full(m, np.inf), None, None
        if not derivatives:
            return vals, None, None
        r = [ar, ar, rows_B, n + ar]
        c = [ar, yoff + ar, yoff + cols_B, ar]
        d = [-alpha, -rowsum, e, -np.ones(n)]
        if with_p:
            r += [Bc.row, 2 * n + ar]
            c += [n + Bc.col, n + ar]
            d += [-Bc.data, -np.ones(n)]
        if budget is not None:
            r.append(np.full(n, m - 1))
            c.append(ar)
            d.append(w)
        J = sp.csr_matrix((np.concatenate(d), (np.concatenate(r), np.concatenate(c))), shape=(m, yoff + n))
        keep = np.concatenate([np.arange(yoff), yoff + ar[1:]])
        J = J[:, keep]

        def curvature(weights):
            a = weights[rows_B] * e
            deg = np.bincount(rows_B, weights=a, minlength=n) + np.bincount(cols_B, weights=a, minlength=n)
            rr = np.concatenate([ar, rows_B, cols_B])
            cc = np.concatenate([ar, cols_B, rows_B])
            H = sp.csr_matrix((np.concatenate([deg, -a, -a]), (rr, cc)), shape=(n, n))[1:, 1:]
            return sp.block_diag([sp.csr_matrix((yoff, yoff)), H]).tocsr()

        return vals, J, curvature

    return BarrierProblem(n=yoff + n - 1, objective=objective_fn, constraints=constraints)


def min_suppression_budget(instance: NetworkInstance, tol: float = 1e-10) -> SuppressionResult:
    """Minimum ``w's`` with ``rho(diag(alpha*s + delta)^{-1} B) <= 1``.

    Solved as a smooth convex program in ``(s, y)`` where ``e^y`` is a
    sub-invariant vector certifying the spectral bound.
    """
    _require_zero_lambda(instance)
    n = instance.n
    rho0 = suppression_ratio(instance, np.zeros(n))
    if rho0 <= 1.0 + SPECTRAL_TOL:
        return SuppressionResult(c_star=0.0, s0=np.zeros(n), spectral_check=rho0)
    problem = _gauge_problem(instance)
    row = np.asarray(instance.B.sum(axis=1)).ravel()
    s_start = np.maximum(row - instance.delta, 0.0) / instance.alpha + 1.0
    res = barrier_solve(problem, np.concatenate([s_start, np.zeros(n - 1)]), tol=tol)
    s0 = np.maximum(res.x[:n], 0.0)
    return SuppressionResult(
        c_star=float(instance.w_weights @ s0),
        s0=s0,
        spectral_check=suppression_ratio(instance, s0),
        lower_bound=res.lower_bound,
        newton_iters=res.newton_iters,
    )


def suppression_budget_dual(instance: NetworkInstance, tol: float = 1e-10) -> tuple:
    """Dual route to ``C*``: maximize ``min_x sum_ij theta_i b_ij x_j / x_i - theta'delta``
    over ``0 <= theta <= w / alpha``.

    The inner minimum is a matrix-balancing problem; its supergradient is the
    balanced boundary vector minus ``delta``. Returns ``(value, theta)``. Intended
    as an independent check on small instances.
    """
    _require_zero_lambda(instance)
    ub = instance.w_weights / instance.alpha
    lb = np.full(instance.n, 1e-9)

    def neg_dual(theta):
        bal = balance(instance.B, theta, tol=1e-13)
        return -(bal.objective - theta @ instance.delta), -(bal.zbar - instance.delta)

    res = so.minimize(
        neg_dual,
        x0=0.5 * ub,
        jac=True,
        method="L-BFGS-B",
        bounds=list(zip(lb, ub)),
        options={"ftol": tol, "gtol": 1e-12, "maxiter": 2000},
    )
    return float(max(-res.fun, 0.0)), res.x


def sufficient_condition(instance: NetworkInstance, budget: float | None = None) -> bool:
    """Strict-somewhere test ``B^T (w / alpha) <= c`` with at least one strict coordinate.

    With linear ``w`` the gradient is constant, so the test does not depend on
    the budget set.
    """
    lhs = instance.BT @ (instance.w_weights / instance.alpha)
    return bool(np.all(lhs <= instance.cost_c) and np.any(lhs < instance.cost_c))


def weak_condition(instance: NetworkInstance) -> bool:
    """Non-strict variant ``B^T (w / alpha) <= c``."""
    lhs = instance.BT @ (instance.w_weights / instance.alpha)
    return bool(np.all(lhs <= instance.cost_c))


def solve_pr3(instance: NetworkInstance, budget: float, tol: float = 1e-9, c_star: float | None = None) -> RelaxSolution:
    """Lower bound ``f_L(C)`` on the budget-constrained problem ``min F(s) s.t. w's <= C``.

    Relaxes ``p = p_se(s)`` to ``p >= 0`` with ``diag(e^y) B diag(e^-y) 1 <= alpha*s + delta + Bp``.
    The log-scaled lower bound ``p >= e^{-y}`` is dropped: only differences of
    ``y`` enter the other constraints, so shifting ``y`` upward always satisfies it.

    Requires ``0 < C < C*``; at or above ``C*`` the relaxation lets ``p`` collapse
    to zero and carries no information.
    """
    _require_zero_lambda(instance)
    t_start = time.perf_counter()
    n = instance.n
    if c_star is None:
        c_star = min_suppression_budget(instance).c_star
    if not 0 < budget < c_star:
        raise DegenerateBudget(f"budget {budget:g} must lie strictly inside (0, C* = {c_star:g})")
    w = instance.w_weights
    problem = _gauge_problem(instance, with_p=True, budget=budget)
    x0 = np.concatenate([np.full(n, budget / (2.0 * w.sum())), np.ones(n), np.zeros(n - 1)])
    res = barrier_solve(problem, x0, tol=tol)
    s, p = np.maximum(res.x[:n], 0.0), res.x[n : 2 * n]
    y = np.concatenate([[0.0], res.x[2 * n :]])
    z = np.exp(y) * (instance.B @ np.exp(-y))
    p_feas = stable_equilibrium_lambda0(instance, s).p
    return RelaxSolution(
        s_R=s,
        p_R=p,
        z_R=z,
        lower_bound=float(res.lower_bound),
        relaxed_objective=float(w @ s + instance.cost_c @ p),
        s_feas=s,
        p_feas=p_feas,
        upper_bound=float(w @ s + instance.cost_c @ p_feas),
        exact=False,
        iters=res.outer_iters,
        newton_iters=res.newton_iters,
        runtime=time.perf_counter() - t_start,
    )


def budget_is_active(instance: NetworkInstance, sol: RelaxSolution, budget: float) -> bool:
    return abs(float(instance.w_weights @ sol.s_R) - budget) <= BUDGET_ACTIVE_TOL * budget


def project_budget(v, w, budget):
    """Euclidean projection of ``v`` onto ``{s >= 0, w's <= budget}`` (``w > 0``).

    Either ``[v]_+`` is already feasible, or the answer is ``[v - tau w]_+`` with
    the ``tau > 0`` that makes the budget tight; ``tau`` is found exactly from
    the sorted breakpoints ``v_i / w_i``.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    plus = np.maximum(v, 0.0)
    if w @ plus <= budget:
        return plus
    # on the interval where the active set is fixed, w'[v - tau w]_+ is linear in tau
    bp = v / w
    order = np.argsort(-bp)
    vs, ws, bps = v[order], w[order], bp[order]
    cum_wv = np.cumsum(ws * vs)
    cum_ww = np.cumsum(ws * ws)
    tau = 0.0
    for k in range(len(v)):
        tau = (cum_wv[k] - budget) / cum_ww[k]
        nxt = bps[k + 1] if k + 1 < len(v) else -np.inf
        if tau >= nxt and tau <= bps[k]:
            break
    return np.maximum(v - tau * w, 0.0)


def projected_rgm(
    instance: NetworkInstance, budget: float, config: RgmConfig | None = None, s0=None, trace: bool = False
) -> LocalSolution:
    """Reduced gradient method for ``min w's + c'p_se(s)`` over ``{s >= 0, w's <= C}``."""
    _require_zero_lambda(instance)
    cfg = config or RgmConfig()
    t_start = time.perf_counter()
    w = instance.w_weights
    s = project_budget(np.zeros(instance.n) if s0 is None else s0, w, budget)
    state = stable_equilibrium_lambda0(instance, s, tol=cfg.fp_tol, max_iters=cfg.fp_max_iters)
    F = objective(instance, s, state.p)

    def F_eval(s_new, p_prev):
        # warm start from a positive state; zero would be a spurious fixed point
        st = equilibrium(instance, s_new, tol=cfg.fp_tol, max_iters=cfg.fp_max_iters, p0=np.maximum(p_prev, 1e-3))
        return objective(instance, s_new, st.p), st.p, st.iters

    def grad_eval(s_cur, p_cur):
        return reduced_gradient(instance, s_cur, p_cur, tol=cfg.lin_tol)

    rows = [] if trace else None
    s, F, p, iters, ok, _, history, max_inner = _projected_descent(
        F_eval, grad_eval, s, F, state.p, cfg, project=lambda v: project_budget(v, w, budget), trace=rows
    )
    g = grad_eval(s, p)
    return LocalSolution(
        s=s,
        p=p,
        objective=F,
        grad_norm=float(np.linalg.norm(project_budget(s - g, w, budget) - s)),
        iters=(iters, max(max_inner, state.iters)),
        runtime=time.perf_counter() - t_start,
        converged=ok,
        method="projected-rgm",
        history=history,
        trace=rows or [],
    )


@dataclass
class Lambda0Report:
    route: str
    s_out: np.ndarray
    p_out: np.ndarray
    f_lower: float
    f_upper: float
    gap_bound: float
    epsilon: float
    c_star: float
    s0: np.ndarray = field(repr=False, default=None)
    budget: float | None = None
    f_L: float | None = None
    f_U: float | None = None
    budget_active: bool | None = None
    condition_strict: bool | None = None
    condition_weak: bool | None = None


def pipeline(instance: NetworkInstance, eps_frac: float = 0.01, config: RgmConfig | None = None) -> Lambda0Report:
    """Decision procedure for the ``lam = 0`` problem ``min w's + c'p_se(s)``.

    1. If ``rho(diag(delta)^{-1} B) <= 1`` nothing needs to be bought.
    2. Otherwise compute the suppression budget ``C*`` and its optimizer ``s0``.
       When ``B^T (w/alpha)`` is dominated by ``c`` (strict somewhere), ``s0`` is optimal.
    3. Otherwise solve the relaxation at ``C = C* - eps``. An active budget makes
       ``s0`` ``eps(1 + c'p_se(0)/C*)``-suboptimal.
    4. Otherwise run the projected reduced gradient method at the same budget and
       report ``min(f_U, C*) - f_L`` as the gap.
    """
    _require_zero_lambda(instance)
    n = instance.n
    strict, weak = sufficient_condition(instance), weak_condition(instance)
    rho0 = suppression_ratio(instance, np.zeros(n))
    if rho0 <= 1.0 + SPECTRAL_TOL:
        zero = np.zeros(n)
        return Lambda0Report("no_investment", zero, zero.copy(), 0.0, 0.0, 0.0, 0.0, 0.0, zero.copy(),
                             condition_strict=strict, condition_weak=weak)
    sup = min_suppression_budget(instance)
    c_star, s0 = sup.c_star, sup.s0
    p0 = np.zeros(n)  # s0 suppresses the epidemic
    if strict:
        return Lambda0Report("suppression_optimal", s0, p0, c_star, c_star, 0.0, 0.0, c_star, s0,
                             condition_strict=strict, condition_weak=weak)
    eps = max(eps_frac, EPS_FLOOR) * c_star
    budget = c_star - eps
    relax = solve_pr3(instance, budget, c_star=c_star)
    f_L = relax.lower_bound
    active = budget_is_active(instance, relax, budget)
    if active:
        p_se0 = stable_equilibrium_lambda0(instance, np.zeros(n)).p
        gap = eps * (1.0 + float(instance.cost_c @ p_se0) / c_star)
        return Lambda0Report("suppression_eps_suboptimal", s0, p0, c_star - gap, c_star, gap, eps, c_star, s0,
                             budget=budget, f_L=f_L, budget_active=True, condition_strict=strict, condition_weak=weak)
    local = projected_rgm(instance, budget, config)
    f_U = local.objective
    if f_U < c_star:
        s_out, p_out, f_upper = local.s, local.p, f_U
    else:
        s_out, p_out, f_upper = s0, p0, c_star
    return Lambda0Report(
        "interior_local",
        s_out,
        p_out,
        f_L,
        f_upper,
        max(f_upper - f_L, 0.0),
        eps,
        c_star,
        s0,
        budget=budget,
        f_L=f_L,
        f_U=f_U,
        budget_active=False,
        condition_strict=strict,
        condition_weak=weak,
    )


def budget_sweep(instance: NetworkInstance, budgets, config: RgmConfig | None = None) -> list:
    """``(C, f_L(C), f_U(C))`` rows for budgets strictly below ``C*``."""
    c_star = min_suppression_budget(instance).c_star
    rows = []
    s_prev = None
    for C in budgets:
        if not 0 < C < c_star:
            raise DegenerateBudget(f"sweep budget {C:g} outside (0, C* = {c_star:g})")
        f_L = solve_pr3(instance, C, c_star=c_star).lower_bound
        local = projected_rgm(instance, C, config, s0=s_prev)
        s_prev = local.s
        rows.append((float(C), f_L, local.objective))
    return rows
