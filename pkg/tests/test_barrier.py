import numpy as np
import pytest
import scipy.sparse as sp

from sisopt.barrier import BarrierProblem, barrier_solve


def hyperbola_problem():
    """min x0 + 4 x1  s.t.  x0 x1 >= 1, x >= 0; optimum x = (2, 1/2), value 4."""

    def objective(x):
        return float(x[0] + 4 * x[1]), np.array([1.0, 4.0]), None

    def constraints(x, derivatives=True):
        # -log x0 - log x1 <= 0 is the convex form of x0 x1 >= 1
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.array([-np.log(x[0]) - np.log(x[1]), -x[0], -x[1]])
        if not derivatives:
            return vals, None, None
        J = sp.csr_matrix(np.array([[-1 / x[0], -1 / x[1]], [-1.0, 0.0], [0.0, -1.0]]))

        def curvature(wts):
            return sp.diags(wts[0] * np.array([1 / x[0] ** 2, 1 / x[1] ** 2]))

        return vals, J, curvature

    return BarrierProblem(2, objective, constraints)


def test_barrier_solves_small_convex_program():
    res = barrier_solve(hyperbola_problem(), np.array([3.0, 3.0]), tol=1e-10)
    np.testing.assert_allclose(res.x, [2.0, 0.5], atol=1e-6)
    assert res.objective == pytest.approx(4.0, abs=1e-8)
    assert res.lower_bound <= 4.0 + 1e-12
    assert res.objective - res.lower_bound <= 1e-8 * 5


def test_barrier_rejects_infeasible_start():
    with pytest.raises(ValueError, match="strictly feasible"):
        barrier_solve(hyperbola_problem(), np.array([0.1, 0.1]))
