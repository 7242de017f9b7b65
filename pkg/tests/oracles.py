"""Independent reference computations used by the tests.

Nothing here calls into the package's solvers: dense linear algebra, scipy
root finding, cvxpy and brute-force grids stand in for the hand-written code.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq, root


def dense_B(instance):
    B = np.zeros((instance.n, instance.n))
    for src, dst, beta in instance.edges:
        B[dst, src] = beta
    return B


def equilibrium_fsolve(instance, s):
    """Equilibrium by root finding on the residual, then a few Newton polishing steps."""
    B = dense_B(instance)
    lam, rec = instance.lam, instance.alpha * np.asarray(s, float) + instance.delta

    def g(p):
        return (1 - p) * (lam + B @ p) - rec * p

    def jac(p):
        return np.diag(-(lam + B @ p) - rec) + (1 - p)[:, None] * B

    p = root(g, np.ones(instance.n), jac=jac, method="hybr", tol=1e-13).x
    for _ in range(3):  # Newton polish
        p = p - np.linalg.solve(jac(p), g(p))
    return p


def cost(instance, s):
    s = np.asarray(s, float)
    return float(instance.w_weights @ s + instance.cost_c @ equilibrium_fsolve(instance, s))


def spectral_abscissa(A):
    return float(np.max(np.linalg.eigvals(np.asarray(A, float)).real))


def lower_sigma_dense(z, B):
    return float(np.min(np.linalg.eigvals(np.diag(z) - B).real))


def pr2_cvxpy(instance):
    """The exponential-cone relaxation written directly in cvxpy (small N only)."""
    import cvxpy as cp

    n = instance.n
    B = dense_B(instance)
    s, p, y = cp.Variable(n), cp.Variable(n), cp.Variable(n)
    cons = [s >= 0, p <= 1]
    for i in range(n):
        terms = [B[i, j] * cp.exp(y[i] - y[j]) for j in range(n) if B[i, j] > 0]
        lhs = instance.lam[i] * cp.exp(y[i]) + (cp.sum(cp.hstack(terms)) if terms else 0)
        rhs = instance.alpha[i] * s[i] + instance.delta[i] + instance.lam[i] + B[i] @ p
        cons.append(lhs <= rhs)
        cons.append(cp.exp(-y[i]) <= p[i])
    prob = cp.Problem(cp.Minimize(instance.w_weights @ s + instance.cost_c @ p), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def suppression_budget_2cycle(b01, b10, delta, alpha=1.0):
    """``min s0 + s1`` s.t. ``rho(diag(alpha s + delta)^-1 B) <= 1`` for a 2-cycle by 1-D root finding.

    With ``d_i = alpha s_i + delta_i``, rho = sqrt(b01 b10 / (d0 d1)); minimize
    ``(d0 - delta0)/alpha0 + (d1 - delta1)/alpha1`` on ``d0 d1 = b01 b10`` with ``d_i >= delta_i``.
    """
    prod = b01 * b10
    f = lambda d0: (d0 - delta[0]) / alpha + (prod / d0 - delta[1]) / alpha
    lo, hi = max(delta[0], 1e-12), prod / delta[1]
    if hi <= lo:
        return 0.0
    d = np.linspace(lo, hi, 200001)
    return float(np.min(f(d)))


def symmetric_fixed_point(beta, lam, delta):
    """Positive root of ``(1-p)(lam + beta p) = delta p`` on [0, 1]."""
    return brentq(lambda p: (1 - p) * (lam + beta * p) - delta * p, 0.0, 1.0, xtol=1e-15)


def batch_cost(instance, S, tol=1e-13, max_iters=100_000):
    """``F`` at every row of ``S`` at once, by a vectorized fixed-point sweep."""
    B = dense_B(instance)
    S = np.atleast_2d(S)
    rec = S * instance.alpha + instance.delta
    P = np.ones_like(S)
    for _ in range(max_iters):
        pressure = instance.lam + P @ B.T
        P_new = pressure / (pressure + rec)
        done = np.max(np.abs(P_new - P)) <= tol
        P = P_new
        if done:
            break
    return S @ instance.w_weights + P @ instance.cost_c


def grid_search(instance, step=1e-3, chunk=200_000):
    """Brute-force ``min F(s)`` over ``s >= 0`` for N <= 3.

    Any optimum satisfies ``w_i s_i <= F(s) <= F(0)``, which bounds the box.
    The box is scanned at 1/100 of its width, then at 1e-2 and finally at
    ``step`` around the incumbent (two cells of the previous level either side).
    """
    n = instance.n
    upper = float(batch_cost(instance, np.zeros((1, n)))[0]) / instance.w_weights
    best = None
    levels = [upper / 100, np.full(n, 1e-2), np.full(n, step)]
    prev = None
    for h in levels:
        if prev is None:
            axes = [np.arange(0.0, u + 0.5 * hi, hi) for u, hi in zip(upper, h)]
        else:
            axes = [np.arange(max(0.0, b - 2 * ph), b + 2 * ph + 0.5 * hi, hi) for b, ph, hi in zip(best[1], prev, h)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        for k in range(0, len(mesh), chunk):
            block = mesh[k : k + chunk]
            vals = batch_cost(instance, block)
            i = int(np.argmin(vals))
            if best is None or vals[i] < best[0]:
                best = (float(vals[i]), block[i].copy())
        prev = h
    return best
