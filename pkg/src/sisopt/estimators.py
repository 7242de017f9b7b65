"""scikit-learn style wrappers around the solvers.

The "data" an estimator is fitted on is a :class:`NetworkInstance`; the fitted
investment vector is stored in ``s_`` and the matching equilibrium in ``p_``.
:class:`SISEquilibrium` is a transformer that maps rows of investment vectors
to rows of equilibrium infection probabilities.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .lambda_zero import pipeline
from .local_search import RgmConfig, rgm, scp
from .netmodel import NetworkInstance
from .relaxation import solve_pr1, solve_pr2
from .sis_core import average_cost, equilibrium, stable_equilibrium_lambda0

__all__ = ["SISEquilibrium", "RGM", "SCP", "ConvexRelaxation", "Lambda0Planner"]


def _check_instance(instance):
    if not isinstance(instance, NetworkInstance):
        raise TypeError(f"expected a NetworkInstance, got {type(instance).__name__}")
    return instance


class _InvestmentMixin:
    """``predict`` returns the fitted investments, ``score`` the negated cost."""

    def predict(self, instance=None):
        check_is_fitted(self, "s_")
        return self.s_.copy()

    def score(self, instance, s=None):
        check_is_fitted(self, "s_")
        s = self.s_ if s is None else check_array(s, ensure_2d=False)
        return -average_cost(_check_instance(instance), s).total


class SISEquilibrium(TransformerMixin, BaseEstimator):
    def __init__(self, tol=1e-7, max_iters=500):
        self.tol = tol
        self.max_iters = max_iters

    def fit(self, instance, y=None):
        self.instance_ = _check_instance(instance)
        self.n_features_in_ = instance.n
        return self

    def transform(self, S):
        """Each row of ``S`` is an investment vector; returns the equilibria row-wise."""
        check_is_fitted(self, "instance_")
        S = check_array(S, ensure_2d=False)
        single = S.ndim == 1
        S = np.atleast_2d(S)
        if S.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {S.shape[1]}")
        if np.any(S < 0):
            raise ValueError("investments must be nonnegative")
        P = np.vstack([equilibrium(self.instance_, s, tol=self.tol, max_iters=self.max_iters).p for s in S])
        return P[0] if single else P


class RGM(_InvestmentMixin, BaseEstimator):
    def __init__(self, gamma0=0.5, shrink=0.85, armijo_c=1e-4, max_iters=5000, strict=False):
        self.gamma0 = gamma0
        self.shrink = shrink
        self.armijo_c = armijo_c
        self.max_iters = max_iters
        self.strict = strict

    def fit(self, instance, y=None, s0=None):
        cfg = RgmConfig(
            gamma0=self.gamma0, shrink=self.shrink, armijo_c=self.armijo_c, max_iters=self.max_iters, strict=self.strict
        )
        sol = rgm(_check_instance(instance), cfg, s0=s0)
        self.s_, self.p_, self.objective_ = sol.s, sol.p, sol.objective
        self.n_iter_ = sol.iters[0]
        self.converged_ = sol.converged
        return self


class SCP(_InvestmentMixin, BaseEstimator):
    def __init__(self, backend="expcone", tol=1e-6, max_outer=200):
        self.backend = backend
        self.tol = tol
        self.max_outer = max_outer

    def fit(self, instance, y=None):
        sol = scp(_check_instance(instance), backend=self.backend, tol=self.tol, max_outer=self.max_outer)
        self.s_, self.p_, self.objective_ = sol.s, sol.p, sol.objective
        self.n_iter_ = sol.iters[0]
        return self


class ConvexRelaxation(_InvestmentMixin, BaseEstimator):
    """``form="pr2"`` is the exponential-cone relaxation, ``"pr1"`` the M-matrix one."""

    def __init__(self, form="pr2", tol=1e-9):
        self.form = form
        self.tol = tol

    def fit(self, instance, y=None):
        if self.form not in ("pr1", "pr2"):
            raise ValueError(f"form must be 'pr1' or 'pr2', got {self.form!r}")
        solver = solve_pr1 if self.form == "pr1" else solve_pr2
        sol = solver(_check_instance(instance), tol=self.tol)
        self.s_, self.p_, self.objective_ = sol.s_feas, sol.p_feas, sol.upper_bound
        self.lower_bound_ = sol.lower_bound
        self.exact_ = sol.exact
        self.n_iter_ = sol.iters
        return self


class Lambda0Planner(_InvestmentMixin, BaseEstimator):
    def __init__(self, eps_frac=0.01):
        self.eps_frac = eps_frac

    def fit(self, instance, y=None):
        rep = pipeline(_check_instance(instance), eps_frac=self.eps_frac)
        self.s_, self.p_, self.objective_ = rep.s_out, rep.p_out, rep.f_upper
        self.lower_bound_ = rep.f_lower
        self.route_ = rep.route
        self.c_star_ = rep.c_star
        return self

    def score(self, instance, s=None):
        # with lambda = 0 the cost uses the stable endemic state, not the equilibrium map
        check_is_fitted(self, "s_")
        if s is None:
            return -self.objective_
        instance = _check_instance(instance)
        s = check_array(s, ensure_2d=False)
        p = stable_equilibrium_lambda0(instance, s, tol=1e-10).p
        return -(instance.investment_cost(s) + float(instance.cost_c @ p))
