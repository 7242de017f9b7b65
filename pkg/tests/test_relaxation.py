import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance, single_node, two_cycle
from oracles import pr2_cvxpy
from sisopt import check_exactness, residual, solve_pr1, solve_pr2
from sisopt.relaxation import opt_gap, relaxation_residual


def test_single_node_pr2(node):
    sol = solve_pr2(node)
    assert sol.lower_bound == pytest.approx(1.8, abs=1e-7)
    assert sol.upper_bound == pytest.approx(1.8, abs=1e-9)
    assert sol.s_feas[0] == pytest.approx(0.8, abs=1e-6)
    assert sol.exact


def test_single_node_pr1(node):
    sol = solve_pr1(node)
    assert sol.lower_bound == pytest.approx(1.8, abs=1e-7)
    assert sol.upper_bound == pytest.approx(1.8, abs=1e-9)


def test_check_exactness_examples():
    assert check_exactness(two_cycle(c=(0.6, 0.6)))
    assert not check_exactness(two_cycle(c=(0.4, 0.6)))
    assert check_exactness(random_instance(50, 1, nu=1.0))


def test_exact_regime_gap():
    inst = random_instance(60, 11, nu=1.0)
    sol = solve_pr2(inst)
    assert check_exactness(inst)
    assert sol.exact and sol.gap <= 1e-5
    assert relaxation_residual(inst, sol) <= 1e-8


def test_recovered_point_is_feasible():
    inst = random_instance(40, 4, nu=0.0)
    sol = solve_pr2(inst)
    assert np.all(sol.s_feas >= 0)
    assert np.max(np.abs(residual(inst, sol.s_feas, sol.p_feas))) <= 1e-8
    assert sol.lower_bound <= sol.upper_bound


def test_pr2_matches_cvxpy():
    inst = random_instance(10, 21, nu=0.3)
    ref = pr2_cvxpy(inst)
    sol = solve_pr2(inst)
    assert sol.lower_bound <= ref + 1e-6 * abs(ref)
    assert sol.relaxed_objective == pytest.approx(ref, rel=1e-5)


def test_pr1_matches_pr2_and_iterates_few_rounds():
    inst = random_instance(40, 5, nu=1.0)
    r1, r2 = solve_pr1(inst), solve_pr2(inst)
    assert abs(r1.lower_bound - r2.lower_bound) / r2.lower_bound <= 1e-4
    assert r1.iters <= 5


def test_opt_gap():
    assert opt_gap(1.01, 1.0) == pytest.approx(0.01)


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(3, 25), nu=st.floats(0, 1))
def test_relaxation_bounds_are_ordered(seed, n, nu):
    inst = random_instance(n, seed, nu=nu)
    sol = solve_pr2(inst)
    assert sol.lower_bound <= sol.relaxed_objective + 1e-9 * abs(sol.relaxed_objective)
    assert sol.lower_bound <= sol.upper_bound + 1e-9 * abs(sol.upper_bound)
    assert np.all(sol.p_R <= 1 + 1e-9)
