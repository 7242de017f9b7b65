import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance, two_cycle
from oracles import dense_B, spectral_abscissa, suppression_budget_2cycle
from sisopt import DegenerateBudget, min_suppression_budget, pipeline, projected_rgm, solve_pr3, stable_equilibrium_lambda0
from sisopt.lambda_zero import (
    budget_is_active,
    budget_sweep,
    project_budget,
    sufficient_condition,
    suppression_budget_dual,
    weak_condition,
)


def zero_cycle(**kw):
    kw.setdefault("lam", (0.0, 0.0))
    return two_cycle(**kw)


def test_suppression_budget_symmetric():
    res = min_suppression_budget(zero_cycle())
    assert res.c_star == pytest.approx(0.8, abs=1e-6)
    np.testing.assert_allclose(res.s0, [0.4, 0.4], atol=1e-5)


def test_suppression_budget_already_below_threshold():
    res = min_suppression_budget(zero_cycle(delta=(0.6, 0.6)))
    assert res.c_star == 0.0
    np.testing.assert_array_equal(res.s0, 0.0)


def test_suppression_budget_asymmetric_matches_scan():
    inst = zero_cycle(b01=0.2, b10=0.8)
    ref = suppression_budget_2cycle(0.2, 0.8, (0.1, 0.1))
    assert ref == pytest.approx(0.6, abs=1e-8)
    assert min_suppression_budget(inst).c_star == pytest.approx(ref, abs=1e-6)


def test_suppression_budget_primal_dual_agree():
    inst = random_instance(30, 4, zero_lambda=True)
    res = min_suppression_budget(inst)
    dual, _ = suppression_budget_dual(inst)
    assert dual == pytest.approx(res.c_star, rel=1e-5)
    # s0 sits on the spectral threshold
    B = dense_B(inst)
    rho = spectral_abscissa(np.diag(1 / (inst.alpha * res.s0 + inst.delta)) @ B)
    assert rho == pytest.approx(1.0, abs=1e-6)


def test_conditions():
    inst = zero_cycle(c=(0.5, 0.5))  # B^T 1 = (0.5, 0.5) exactly
    assert weak_condition(inst) and not sufficient_condition(inst)
    assert sufficient_condition(zero_cycle(c=(0.6, 0.6)))
    assert sufficient_condition(random_instance(40, 2, nu=1.0, zero_lambda=True))


def test_projected_rgm_symmetric_budget():
    inst = zero_cycle(c=(5.0, 5.0))
    grid = np.arange(0.0, 0.25 + 1e-12, 1e-6)
    brute = np.min(2 * grid + 10 * (1 - (0.1 + grid) / 0.5))
    sol = projected_rgm(inst, 0.5)
    assert sol.objective == pytest.approx(brute, abs=1e-5)
    assert inst.w_weights @ sol.s <= 0.5 + 1e-12


def test_projected_rgm_tiny_budget():
    inst = random_instance(20, 6, nu=0.3, zero_lambda=True)
    sol = projected_rgm(inst, 1e-6)
    p0 = stable_equilibrium_lambda0(inst, np.zeros(20), tol=1e-12).p
    assert np.sum(sol.s) <= 1e-6 + 1e-15
    assert sol.objective == pytest.approx(inst.cost_c @ p0, abs=1e-4)


def test_projected_rgm_nonincreasing_in_budget():
    inst = random_instance(25, 9, nu=0.3, zero_lambda=True)
    c_star = min_suppression_budget(inst).c_star
    values = [projected_rgm(inst, C).objective for C in c_star * np.array([0.1, 0.3, 0.6, 0.9])]
    assert all(b <= a + 1e-6 * abs(a) for a, b in zip(values, values[1:]))


def test_pr3_bounds_projected_rgm():
    inst = random_instance(25, 3, nu=0.3, zero_lambda=True)
    c_star = min_suppression_budget(inst).c_star
    for C in c_star * np.array([0.2, 0.7]):
        lower = solve_pr3(inst, C, c_star=c_star).lower_bound
        assert lower <= projected_rgm(inst, C).objective + 1e-7


def test_pr3_active_near_c_star_when_condition_holds():
    inst = random_instance(20, 1, nu=1.0, zero_lambda=True)
    assert sufficient_condition(inst)
    c_star = min_suppression_budget(inst).c_star
    C = 0.999 * c_star
    assert budget_is_active(inst, solve_pr3(inst, C, c_star=c_star), C)


def test_pr3_symmetric_cycle_large_cost():
    inst = zero_cycle(c=(100.0, 100.0))
    C = 0.5
    sol = solve_pr3(inst, C)
    assert budget_is_active(inst, sol, C)
    assert sol.lower_bound > C
    # brute-force f_0(C) over symmetric investments: 2s + 200 (1 - (0.1 + s) / 0.5)
    grid = np.arange(0.0, 0.25 + 1e-12, 1e-6)
    assert sol.lower_bound <= np.min(2 * grid + 200 * (1 - (0.1 + grid) / 0.5)) + 1e-7


def test_pr3_degenerate_budget():
    inst = zero_cycle()
    with pytest.raises(DegenerateBudget):
        solve_pr3(inst, 1.0)
    with pytest.raises(DegenerateBudget):
        solve_pr3(inst, 0.0)


def test_requires_zero_lambda():
    with pytest.raises(ValueError):
        pipeline(two_cycle())


def test_pipeline_routes():
    assert pipeline(zero_cycle(delta=(0.6, 0.6))).route == "no_investment"
    rep = pipeline(random_instance(40, 5, nu=1.0, zero_lambda=True))
    assert rep.route == "suppression_optimal" and rep.gap_bound == 0.0
    rep = pipeline(random_instance(40, 5, nu=0.3, zero_lambda=True))
    assert rep.route == "interior_local"
    assert rep.f_U < rep.c_star
    assert rep.f_lower <= rep.f_upper <= rep.c_star
    assert rep.gap_bound == pytest.approx(rep.f_upper - rep.f_lower)


def test_pipeline_never_reports_worse_than_suppression():
    # with moderate costs the local method can end above C*; the plan falls back to s0
    rep = pipeline(random_instance(40, 5, nu=0.6, zero_lambda=True))
    assert rep.route == "interior_local"
    assert rep.f_upper <= rep.c_star
    assert rep.f_upper == min(rep.f_U, rep.c_star)


def test_budget_sweep_rows():
    inst = random_instance(15, 2, nu=0.3, zero_lambda=True)
    c_star = min_suppression_budget(inst).c_star
    rows = budget_sweep(inst, c_star * np.array([0.3, 0.6]))
    assert len(rows) == 2
    for C, f_L, f_U in rows:
        assert f_L <= f_U + 1e-7
    with pytest.raises(DegenerateBudget):
        budget_sweep(inst, [2 * c_star])


@settings(max_examples=200, deadline=None)
@given(
    v=st.lists(st.floats(-5, 5), min_size=1, max_size=8),
    seed=st.integers(0, 10**6),
    budget=st.floats(1e-3, 10),
)
def test_project_budget_is_euclidean_projection(v, seed, budget):
    v = np.array(v)
    w = np.random.default_rng(seed).uniform(0.2, 3, len(v))
    x = project_budget(v, w, budget)
    # v - tau w cancels, so the budget holds up to rounding at the scale of v
    assert np.all(x >= 0) and w @ x <= budget + 1e-13 * (1 + w @ np.abs(v))
    # optimality against random feasible points: (v - x)'(y - x) <= 0
    rng = np.random.default_rng(seed + 1)
    for _ in range(20):
        y = rng.uniform(0, 1, len(v))
        y *= min(1.0, budget / (w @ y)) * rng.uniform()
        assert (v - x) @ (y - x) <= 1e-9
