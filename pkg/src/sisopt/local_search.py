"""Local methods for the nonconvex investment problem.

Both methods work on the reduced objective ``F(s) = w's + c'p*(s)``:

* ``rgm``: projected gradient descent on ``F`` with Armijo backtracking, the
  gradient obtained from the implicit function theorem.
* ``scp``: sequential convex programming; the bilinear term ``p * (Bp)`` is
  linearized around the current equilibrium and the resulting convex
  subproblem is solved either in M-matrix form (projected gradient) or in
  log-scaled form (barrier Newton).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .barrier import barrier_solve
from .exceptions import MaxIters, NotConverged, SubproblemFailed
from .mmatrix import balance, splitting_solve
from .netmodel import NetworkInstance
from .relaxation import exp_cone_problem
from .sis_core import equilibrium, residual

__all__ = ["RgmConfig", "LocalSolution", "reduced_gradient", "objective", "rgm", "scp", "linearization_residual"]


@dataclass
class RgmConfig:
    gamma0: float = 0.5
    shrink: float = 0.85
    armijo_c: float = 1e-4
    step_tol: float = 1e-6
    obj_tol: float = 1e-8
    max_iters: int = 5000
    fp_tol: float = 1e-10  # equilibrium relative-step tolerance
    fp_max_iters: int = 100_000
    lin_tol: float = 1e-10  # transposed-system tolerance
    strict: bool = False  # raise MaxIters instead of returning an unconverged solution

    def __post_init__(self):
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if self.gamma0 <= 0:
            raise ValueError("gamma0 must be positive")


@dataclass
class LocalSolution:
    s: np.ndarray
    p: np.ndarray
    objective: float
    grad_norm: float  # norm of the projected gradient at exit
    iters: tuple  # (outer iterations, largest inner fixed-point count)
    runtime: float
    converged: bool = True
    method: str = ""
    history: list = field(default_factory=list)  # objective per outer iteration
    trace: list = field(default_factory=list)  # (iter, F, grad_norm, step, inner_fp_iters)


def objective(instance: NetworkInstance, s, p) -> float:
    return float(instance.w_weights @ s + instance.cost_c @ p)


def reduced_gradient(instance: NetworkInstance, s, p, tol: float = 1e-10) -> np.ndarray:
    """``grad F(s) = w - alpha * p * u`` with ``M^T u = c``.

    ``M = diag(alpha*s + delta + lam + Bp) - diag(1 - p) B`` is the Jacobian of
    the equilibrium equations with respect to ``p``; it is a nonsingular
    M-matrix at equilibrium, so the Jacobi splitting converges.
    """
    s = np.asarray(s, dtype=float)
    p = np.asarray(p, dtype=float)
    D = instance.alpha * s + instance.delta + instance.lam + instance.B @ p
    ET = instance.BT @ sp.diags(1.0 - p)  # (diag(1-p) B)^T
    u, _ = splitting_solve(D, ET, instance.cost_c, tol=tol)
    return instance.w_weights - instance.alpha * p * u


def _projected_grad_norm(s, g):
    d = np.where((s <= 0) & (g > 0), 0.0, g)
    return float(np.linalg.norm(d))


def _eq(instance, s, p0, cfg):
    return equilibrium(instance, s, tol=cfg.fp_tol, max_iters=cfg.fp_max_iters, p0=p0)


def _projected_descent(
    F_eval, grad_eval, s, F, p, cfg, lower=None, max_iters=None, stop_grad=None, trace=None, project=None
):
    """Projected gradient descent with Armijo backtracking on a box ``s >= lower``
    (or on any convex set through ``project``).

    ``F_eval(s, hint) -> (F, aux)`` may raise NotConverged to reject a trial;
    ``grad_eval(s, aux)`` returns the gradient. The Armijo test uses the
    projection arc: ``F(s_g) <= F(s) - c * g'(s - s_g)``.
    Returns ``(s, F, aux, iters, converged, grad_norm, history, max_inner)``.
    """
    lower = np.zeros_like(s) if lower is None else lower
    if project is None:

        def project(v):
            return np.maximum(v, lower)

    max_iters = cfg.max_iters if max_iters is None else max_iters
    aux = p
    history = [F]
    max_inner = 0
    g = grad_eval(s, aux)
    gnorm = _projected_grad_norm(s - lower, g)
    for it in range(1, max_iters + 1):
        if stop_grad is not None and gnorm <= stop_grad:
            return s, F, aux, it - 1, True, gnorm, history, max_inner
        gamma = cfg.gamma0
        accepted = False
        while gamma > 1e-16:
            s_new = project(s - gamma * g)
            decrease = float(g @ (s - s_new))
            if decrease <= 0:
                break
            try:
                F_new, aux_new, inner = F_eval(s_new, aux)
            except NotConverged:
                gamma *= cfg.shrink
                continue
            max_inner = max(max_inner, inner)
            if F_new <= F - cfg.armijo_c * decrease:
                accepted = True
                break
            gamma *= cfg.shrink
        if not accepted:
            # no descent possible along the projected arc: stationary to working precision
            return s, F, aux, it - 1, True, gnorm, history, max_inner
        step = float(np.linalg.norm(s_new - s))
        rel_step = step / max(float(np.linalg.norm(s)), 1e-12)
        rel_obj = abs(F - F_new) / max(abs(F), 1e-300)
        s, F, aux = s_new, F_new, aux_new
        history.append(F)
        g = grad_eval(s, aux)
        gnorm = _projected_grad_norm(s - lower, g)
        if trace is not None:
            trace.append((it, F, gnorm, step, inner))
        if rel_step <= cfg.step_tol or rel_obj <= cfg.obj_tol:
            return s, F, aux, it, True, gnorm, history, max_inner
    return s, F, aux, max_iters, False, gnorm, history, max_inner


def rgm(instance: NetworkInstance, config: RgmConfig | None = None, s0=None, trace: bool = False) -> LocalSolution:
    """Reduced gradient method from ``s0`` (default 0)."""
    cfg = config or RgmConfig()
    t_start = time.perf_counter()
    s = np.zeros(instance.n) if s0 is None else np.maximum(np.asarray(s0, dtype=float), 0.0)
    state = _eq(instance, s, None, cfg)
    F = objective(instance, s, state.p)

    def F_eval(s_new, p_prev):
        st = _eq(instance, s_new, p_prev, cfg)
        return objective(instance, s_new, st.p), st.p, st.iters

    def grad_eval(s_cur, p_cur):
        return reduced_gradient(instance, s_cur, p_cur, tol=cfg.lin_tol)

    rows = [] if trace else None
    s, F, p, iters, ok, gnorm, history, max_inner = _projected_descent(F_eval, grad_eval, s, F, state.p, cfg, trace=rows)
    sol = LocalSolution(
        s=s,
        p=p,
        objective=F,
        grad_norm=gnorm,
        iters=(iters, max(max_inner, state.iters)),
        runtime=time.perf_counter() - t_start,
        converged=ok,
        method="rgm",
        history=history,
        trace=rows or [],
    )
    if not ok and cfg.strict:
        raise MaxIters(f"rgm stopped at its cap of {cfg.max_iters} iterations", best=sol)
    return sol


# ---------------------------------------------------------------- sequential convex programming


def linearization_residual(instance: NetworkInstance, s, p, p_lin) -> np.ndarray:
    """Constraint of the problem linearized at ``p_lin``: ``lam_t - (L + diag(alpha s)) p``."""
    p_lin = np.asarray(p_lin, dtype=float)
    Bpl = instance.B @ p_lin
    lam_t = instance.lam + p_lin * Bpl
    S_p = (instance.delta + instance.lam + Bpl + instance.alpha * s) * p - (1.0 - p_lin) * (instance.B @ p)
    return lam_t - S_p


def _mmatrix_subproblem(instance, s_start, p_lin, cfg, max_steps=25, grad_tol=1e-5):
    """Inexact projected-gradient solve of ``min w's + c' S(s)^{-1} lam_t``."""
    alpha, w, c = instance.alpha, instance.w_weights, instance.cost_c
    Bpl = instance.B @ p_lin
    lam_t = instance.lam + p_lin * Bpl
    base = instance.delta + instance.lam + Bpl
    Bl = sp.diags(1.0 - p_lin) @ instance.B
    BlT = Bl.T.tocsr()
    try:
        zbar = balance(Bl, 1.0 / alpha).zbar
    except (ValueError, NotConverged):
        zbar = np.asarray(Bl.sum(axis=1)).ravel()
    lower = np.maximum(0.0, (zbar - base) / alpha)

    def F_eval(s, v_prev):
        v, k = splitting_solve(base + alpha * s, Bl, lam_t, tol=cfg.lin_tol, max_iter=20_000, u0=v_prev)
        return float(w @ s + c @ v), v, k

    def grad_eval(s, v):
        u, _ = splitting_solve(base + alpha * s, BlT, c, tol=cfg.lin_tol, max_iter=20_000)
        return w - u * alpha * v

    s = np.maximum(s_start, lower)
    if np.any(s_start < lower):
        # the current iterate lies outside the balanced subset; nudge into its interior
        s = np.where(s_start < lower, lower + 1e-6 * (1.0 + lower), s)
    try:
        J, v, _ = F_eval(s, None)
    except NotConverged:
        s = lower + 1e-3 * (1.0 + lower)
        J, v, _ = F_eval(s, None)
    sub_cfg = RgmConfig(
        gamma0=cfg.gamma0, shrink=cfg.shrink, armijo_c=cfg.armijo_c, step_tol=0.0, obj_tol=0.0, lin_tol=cfg.lin_tol
    )
    s, J, v, *_ = _projected_descent(F_eval, grad_eval, s, J, v, sub_cfg, lower=lower, max_iters=max_steps, stop_grad=grad_tol)
    return s


def _expcone_subproblem(instance, p_lin, tol):
    """Log-scaled form of the linearized subproblem, solved exactly by barrier Newton."""
    n, alpha = instance.n, instance.alpha
    Bpl = instance.B @ p_lin
    lam_t = instance.lam + p_lin * Bpl
    base = instance.delta + instance.lam + Bpl
    Bl = (sp.diags(1.0 - p_lin) @ instance.B).tocsr()
    Bl.eliminate_zeros()
    zero = sp.csr_matrix((n, n))
    problem = exp_cone_problem(
        n,
        Bl,
        alpha,
        instance.w_weights,
        instance.cost_c,
        lam_t=lam_t,
        rhs_const=base,
        Bp_coef=zero,
        with_p_upper=False,
    )
    p_safe = np.clip(p_lin, 1e-12, None)
    y0 = -np.log(p_safe)
    p0 = 1.05 * p_safe
    ey = np.exp(y0)
    psi = lam_t * ey + ey * (Bl @ np.exp(-y0)) - base
    s0 = np.maximum(psi, 0.0) / alpha + 1.0
    res = barrier_solve(problem, np.concatenate([s0, p0, y0]), tol=tol)
    return np.maximum(res.x[:n], 0.0)


def scp(
    instance: NetworkInstance,
    backend: str = "expcone",
    p0=None,
    tol: float = 1e-6,
    max_outer: int = 200,
    config: RgmConfig | None = None,
    sub_tol: float = 1e-10,
    trace: bool = False,
) -> LocalSolution:
    """Sequential convex programming.

    Each outer step linearizes ``p * (Bp)`` at the current equilibrium ``p_t``,
    which gives the convex surrogate ``J_t(s) = w's + c'(L_t + diag(alpha s))^{-1} lam_t``
    with ``J_t >= F`` and ``J_t(s_t) = F(s_t)``; its minimizer becomes the next
    iterate. Stops on relative s-step or relative objective change below ``tol``,
    and never accepts an iterate that increases ``F``.
    """
    if backend not in ("mmatrix", "expcone"):
        raise ValueError(f"unknown SCP backend {backend!r}")
    cfg = config or RgmConfig()
    t_start = time.perf_counter()
    n = instance.n
    s = np.zeros(n)
    if p0 is None:
        state = _eq(instance, s, None, cfg)
        p = state.p
    else:
        p = np.clip(np.asarray(p0, dtype=float), 0.0, 1.0)
        # p0 is only the first linearization point; s0 = 0 is paired with its own equilibrium
        state = _eq(instance, s, None, cfg)
    p_lin = p
    F = objective(instance, s, state.p)
    p = state.p
    history = [F]
    rows = []
    max_inner = state.iters
    converged = False
    outer = 0
    for outer in range(1, max_outer + 1):
        try:
            if backend == "mmatrix":
                s_new = _mmatrix_subproblem(instance, s, p_lin, cfg)
            else:
                s_new = _expcone_subproblem(instance, p_lin, sub_tol)
        except (NotConverged, ValueError, np.linalg.LinAlgError) as exc:
            raise SubproblemFailed(f"convex subproblem failed at outer step {outer}: {exc}", outer_index=outer) from exc
        st = _eq(instance, s_new, p, cfg)
        max_inner = max(max_inner, st.iters)
        F_new = objective(instance, s_new, st.p)
        step = float(np.linalg.norm(s_new - s))
        if trace:
            rows.append((outer, F_new, float("nan"), step, st.iters))
        if F_new > F + 1e-12 * abs(F):
            # inexact subproblem made things worse; keep the last iterate
            converged = True
            break
        rel_step = step / max(float(np.linalg.norm(s)), 1e-12)
        rel_obj = abs(F - F_new) / max(abs(F), 1e-300)
        s, p, F = s_new, st.p, F_new
        p_lin = p
        history.append(F)
        if rel_step <= tol or rel_obj <= tol:
            converged = True
            break
    g = reduced_gradient(instance, s, p, tol=cfg.lin_tol)
    sol = LocalSolution(
        s=s,
        p=p,
        objective=F,
        grad_norm=_projected_grad_norm(s, g),
        iters=(outer, max_inner),
        runtime=time.perf_counter() - t_start,
        converged=converged,
        method=f"scp-{backend}",
        history=history,
        trace=rows,
    )
    if not converged and cfg.strict:
        raise MaxIters(f"scp stopped at its cap of {max_outer} outer iterations", best=sol)
    return sol


def feasibility_residual(instance: NetworkInstance, sol: LocalSolution) -> float:
    return float(np.max(np.abs(residual(instance, sol.s, sol.p))))
