"""Sparse M-matrix utilities: Metzler dominant eigenvalues, membership tests,
regular-splitting solves and Osborne matrix balancing.

Everything here works on ``scipy.sparse`` matrices with O(|E|) work per
iteration; no dense eigendecomposition is ever formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .exceptions import NotConverged

__all__ = [
    "EigenResult",
    "BalanceResult",
    "dominant_eigenvalue",
    "lower_sigma",
    "in_omega",
    "solve_transposed_system",
    "inverse_apply",
    "splitting_solve",
    "balance",
]


@dataclass
class EigenResult:
    value: float
    vector: np.ndarray
    iters: int
    bracket: tuple  # certified (lower, upper) bounds on the dominant eigenvalue


def _iteration_cap(n):
    # 10 N log N is too tight for tiny N; keep a floor
    return max(5000, int(math.ceil(10 * n * math.log(max(n, 2)))))


def _as_metzler(A):
    if sp.issparse(A):
        return sp.csr_matrix(A, dtype=float)
    return sp.csr_matrix(np.asarray(A, dtype=float))


def _irreducible_dominant(A, tol, max_iter, v0, stop, seed) -> EigenResult:
    """Power iteration on ``cI + A`` with ``c = max|a_ii| + 1``.

    For a positive iterate ``v`` the Collatz-Wielandt ratios ``min/max (Av)_i / v_i``
    bracket the eigenvalue, which gives a certified stopping rule.
    """
    n = A.shape[0]
    diag = A.diagonal()
    shift = float(np.max(np.abs(diag))) + 1.0 if n else 1.0
    S = A + shift * sp.identity(n, format="csr")
    if max_iter is None:
        max_iter = _iteration_cap(n)

    def run(v):
        v = v / v.sum()
        lo, hi = -np.inf, np.inf
        for k in range(1, max_iter + 1):
            Sv = S @ v
            ratios = Sv / v
            lo, hi = float(ratios.min()), float(ratios.max())
            v = Sv / Sv.sum()
            val = 0.5 * (lo + hi) - shift
            if hi - lo <= tol * max(1.0, abs(val)):
                return val, v, k, (lo - shift, hi - shift), True
            if stop is not None and stop(lo - shift, hi - shift):
                return val, v, k, (lo - shift, hi - shift), True
            if not np.all(v > 0):
                # underflow on a very skewed vector; lift it back into the positive orthant
                v = np.maximum(v, 1e-300)
        return 0.5 * (lo + hi) - shift, v, max_iter, (lo - shift, hi - shift), False

    start = np.ones(n) if v0 is None else np.maximum(np.asarray(v0, dtype=float), 1e-300)
    val, v, k, br, ok = run(start)
    if not ok:
        rng = np.random.default_rng(seed)
        val, v, k2, br, ok = run(rng.uniform(0.5, 1.5, size=n))
        k += k2
        if not ok:
            raise NotConverged(
                f"power iteration did not converge in {max_iter} iterations (bracket {br})",
                last=EigenResult(val, v, k, br),
                iters=k,
            )
    return EigenResult(val, v, k, br)


def _reducible_dominant(A, labels, ncomp, tol, max_iter, v0, stop, seed) -> EigenResult:
    """Block version: the spectrum is the union of the diagonal blocks' spectra.

    An eigenvector lives on a maximizing block ``k`` with no other maximizer
    downstream of it, and on everything ``k`` feeds into, where it solves
    ``(rho I - A_DD) x_D = A_Dk x_k`` (a nonsingular M-matrix system). The
    returned vector sums these over all such blocks.
    """
    n = A.shape[0]
    blocks = [np.flatnonzero(labels == k) for k in range(ncomp)]
    parts = []
    for idx in blocks:
        sub = A[idx][:, idx]
        if idx.size == 1:
            a = float(sub[0, 0])
            parts.append(EigenResult(a, np.ones(1), 0, (a, a)))
        else:
            parts.append(_irreducible_dominant(sub, tol, max_iter, None if v0 is None else np.asarray(v0)[idx], stop, seed))
    values = np.array([r.value for r in parts])
    rho = float(values.max())
    bracket = (max(r.bracket[0] for r in parts), max(r.bracket[1] for r in parts))
    iters = sum(r.iters for r in parts)

    # x_j feeds (Ax)_i when a_ij != 0, so downstream means following A^T
    G = A.T.tocsr()
    cands = np.flatnonzero(values >= rho - tol * max(1.0, abs(rho)))
    reach = {}
    for k in cands:
        order = breadth_first_order(G, blocks[k][0], directed=True, return_predecessors=False)
        reach[k] = np.zeros(n, dtype=bool)
        reach[k][order] = True
    x = np.zeros(n)
    for k in cands:
        if any(reach[k][blocks[j][0]] for j in cands if j != k):
            continue
        # terminal maximizer: its eigenvector extends downstream; ties are summed
        xk = np.zeros(n)
        xk[blocks[k]] = parts[k].vector
        down = np.flatnonzero(reach[k])
        down = down[labels[down] != k]
        if down.size:
            A_DD = A[down][:, down]
            rhs = A[down][:, blocks[k]] @ parts[k].vector
            M = (rho * sp.identity(down.size, format="csc") - A_DD).tocsc()
            xk[down] = np.maximum(np.atleast_1d(spla.spsolve(M, rhs)), 0.0)
        x += xk
    return EigenResult(rho, x / x.sum(), iters, bracket)


def dominant_eigenvalue(A, tol=1e-10, max_iter=None, v0=None, stop=None, seed=0) -> EigenResult:
    """Dominant (real) eigenvalue of a Metzler matrix ``A``.

    Irreducible matrices use shifted power iteration, iterating until the
    Collatz-Wielandt bracket is narrower than ``tol * max(1, |value|)``.
    ``stop(lo, hi)`` may end the loop early once the caller has what it needs
    (e.g. the sign of the eigenvalue). Reducible matrices are split into
    strongly connected blocks first.

    Returns the eigenvalue and a nonnegative eigenvector with unit 1-norm
    (positive when ``A`` is irreducible).
    """
    A = _as_metzler(A)
    n = A.shape[0]
    if n == 1:
        a = float(A[0, 0])
        return EigenResult(a, np.ones(1), 0, (a, a))
    pattern = A - sp.diags(A.diagonal())
    pattern.eliminate_zeros()
    ncomp, labels = connected_components(pattern, directed=True, connection="strong")
    if ncomp == 1:
        return _irreducible_dominant(A, tol, max_iter, v0, stop, seed)
    return _reducible_dominant(A, labels, ncomp, tol, max_iter, v0, stop, seed)


def lower_sigma(z, B, tol=1e-10, stop=None) -> EigenResult:
    """Smallest real part of the spectrum of ``diag(z) - B`` (via ``-sigma_bar(B - diag(z))``)."""
    z = np.asarray(z, dtype=float)
    res = dominant_eigenvalue(sp.csr_matrix(B) - sp.diags(z), tol=tol, stop=stop)
    lo, hi = res.bracket
    return EigenResult(-res.value, res.vector, res.iters, (-hi, -lo))


def in_omega(z, B, tol=1e-12):
    """Is ``diag(z) - B`` a nonsingular M-matrix?  Returns ``(flag, margin)``.

    The margin is the smallest real eigenvalue of ``diag(z) - B``. Iteration
    stops as soon as the certified bracket excludes zero.
    """
    res = lower_sigma(z, B, tol=tol, stop=lambda lo, hi: lo > 0 or hi < 0)
    lo, hi = res.bracket
    if lo > 0:
        return True, res.value
    if hi < 0:
        return False, res.value
    return res.value > 0, res.value


def splitting_solve(diag, E, rhs, tol=1e-7, max_iter=100_000, u0=None):
    """Solve ``(diag(d) - E) u = rhs`` by the Jacobi regular splitting.

    ``u_{k+1} = (E u_k + rhs) / d``. Converges iff ``rho(D^{-1}E) < 1``, i.e. iff
    the matrix is a nonsingular M-matrix. Stops on relative step ``<= tol``.
    Returns ``(u, iters)``.
    """
    d = np.asarray(diag, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if np.any(d <= 0):
        raise ValueError("splitting requires a positive diagonal")
    u = rhs / d if u0 is None else np.asarray(u0, dtype=float).copy()
    if not np.any(rhs):
        return np.zeros_like(rhs), 0
    for k in range(1, max_iter + 1):
        u_new = (E @ u + rhs) / d
        step = np.linalg.norm(u_new - u)
        scale = np.linalg.norm(u)
        u = u_new
        if not np.all(np.isfinite(u)):
            break
        if step <= tol * scale:
            return u, k
    raise NotConverged("splitting iteration did not converge (matrix near singular?)", last=u, iters=max_iter)


def solve_transposed_system(D, E, c, tol=1e-7, max_iter=100_000):
    """Solve ``M^T u = c`` for ``M = diag(D) - E`` with the fixed point ``u = D^{-1}(E^T u + c)``.

    Returns ``(u, iters)``.
    """
    E = sp.csr_matrix(E)
    return splitting_solve(D, E.T.tocsr(), c, tol=tol, max_iter=max_iter)


def inverse_apply(z, B, rhs, tol=1e-10, max_iter=100_000):
    """``(diag(z) - B)^{-1} rhs`` for ``z`` in Omega; raises NotConverged near the boundary."""
    v, _ = splitting_solve(z, sp.csr_matrix(B), rhs, tol=tol, max_iter=max_iter)
    return v


@dataclass
class BalanceResult:
    """Osborne balancing of ``diag(h) B``.

    ``x`` is the positive right null vector of ``diag(zbar) - B`` (normalized so
    ``x[0] == 1``), so ``diag(x)^{-1} diag(h) B diag(x)`` has equal row and column
    sums and ``zbar`` lies on the boundary of Omega.
    """

    x: np.ndarray
    zbar: np.ndarray
    objective: float
    sweeps: int
    imbalance: float


def balance(B, h, tol=1e-12, max_sweeps=100_000) -> BalanceResult:
    """Minimize ``sum_ij h_i b_ij x_j / x_i`` over ``x > 0`` by cyclic Osborne updates.

    Works in log coordinates ``y = log x``. Updating node ``i`` rescales its row
    mass ``r_i`` by ``e^{-t}`` and its column mass ``c_i`` by ``e^{t}``; the exact
    coordinate minimizer is ``t = (log r_i - log c_i) / 2``.
    """
    B = sp.csr_matrix(B, dtype=float)
    h = np.asarray(h, dtype=float)
    n = B.shape[0]
    if np.any(h <= 0):
        raise ValueError("balance weights must be positive")
    A = sp.diags(h) @ B
    A = A.tocsr()
    A.sum_duplicates()
    A.eliminate_zeros()
    AT = A.T.tocsr()
    r_ptr, r_idx, r_val = A.indptr, A.indices, A.data
    c_ptr, c_idx, c_val = AT.indptr, AT.indices, AT.data
    if np.any(np.diff(r_ptr) == 0) or np.any(np.diff(c_ptr) == 0):
        raise ValueError("balancing needs every node to have in- and out-edges (irreducible B)")

    # x stored directly; entries of the scaled matrix are a_ij x_j / x_i
    x = np.ones(n)
    sweeps = 0
    imbalance = np.inf
    for sweeps in range(1, max_sweeps + 1):
        for i in range(n):
            lo, hi = r_ptr[i], r_ptr[i + 1]
            row = np.dot(r_val[lo:hi], x[r_idx[lo:hi]]) / x[i]
            lo, hi = c_ptr[i], c_ptr[i + 1]
            col = x[i] * np.dot(c_val[lo:hi], 1.0 / x[c_idx[lo:hi]])
            x[i] *= math.sqrt(row / col)
        x /= x[0]
        row_sums = (A @ x) / x
        col_sums = x * (AT @ (1.0 / x))
        imbalance = float(np.max(np.abs(row_sums - col_sums) / np.maximum(row_sums, col_sums)))
        if imbalance <= tol:
            break
    else:
        raise NotConverged(f"balancing did not converge (imbalance {imbalance:.3e})", last=x, iters=max_sweeps)

    zbar = (B @ x) / x
    return BalanceResult(x=x, zbar=zbar, objective=float(h @ zbar), sweeps=sweeps, imbalance=imbalance)
