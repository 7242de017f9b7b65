import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance, single_node, two_cycle
from oracles import equilibrium_fsolve, symmetric_fixed_point
from sisopt import NotConverged, average_cost, equilibrium, residual, simulate_dynamics, stable_equilibrium_lambda0
from sisopt.exceptions import StepTooLarge


def test_single_node_closed_forms(node):
    assert equilibrium(node, [0.0], tol=1e-12).p[0] == pytest.approx(0.5, abs=1e-12)
    assert equilibrium(node, [0.8], tol=1e-12).p[0] == pytest.approx(0.1, abs=1e-12)


def test_two_cycle_equilibrium(cycle):
    p = equilibrium(cycle, [0, 0], tol=1e-13, max_iters=10_000).p
    expected = 0.3 + math.sqrt(0.29)
    assert expected == pytest.approx(symmetric_fixed_point(0.5, 0.1, 0.1), abs=1e-14)
    np.testing.assert_allclose(p, expected, atol=1e-10)


def test_residual_closed_forms(node):
    assert residual(node, [0.0], [0.5])[0] == pytest.approx(0.0, abs=1e-15)
    assert residual(node, [0.0], [0.0])[0] == pytest.approx(0.1)


def test_equilibrium_residual_bound():
    inst = random_instance(80, 5, nu=0.5)
    s = np.random.default_rng(0).uniform(0, 1, 80)
    tol = 1e-7
    st_ = equilibrium(inst, s, tol=tol)
    assert np.max(np.abs(residual(inst, s, st_.p))) <= 10 * tol * np.max(inst.delta)


def test_equilibrium_rejects_negative_s(node):
    with pytest.raises(ValueError):
        equilibrium(node, [-1.0])


def test_equilibrium_not_converged_carries_state(cycle):
    with pytest.raises(NotConverged) as info:
        equilibrium(cycle, [0, 0], tol=1e-15, max_iters=3)
    assert info.value.last is not None


def test_simulate_reaches_equilibrium(node):
    traj = simulate_dynamics(node, [0.0], [0.0], horizon=200, dt=0.01)
    assert traj.final[0] == pytest.approx(0.5, abs=1e-6)


def test_simulate_stationary_at_equilibrium():
    inst = random_instance(30, 1)
    s = np.full(30, 0.3)
    p = equilibrium(inst, s, tol=1e-13, max_iters=100_000).p
    traj = simulate_dynamics(inst, s, p, horizon=5.0)
    assert np.max(np.abs(traj.final - p)) <= 1e-8


def test_simulate_dies_out_below_threshold():
    inst = two_cycle(lam=(0, 0))
    traj = simulate_dynamics(inst, [1.0, 1.0], [0.9, 0.4], horizon=60)
    assert np.max(traj.final) < 1e-10


def test_simulate_step_too_large(node):
    with pytest.raises(StepTooLarge):
        simulate_dynamics(node, [1000.0], [1.0], horizon=1.0, dt=1.0)


def test_average_cost(node):
    assert average_cost(node, [0.0], tol=1e-12).total == pytest.approx(5.0)
    c = average_cost(node, [0.8], tol=1e-12)
    assert (c.total, c.invest, c.infect) == pytest.approx((1.8, 0.8, 1.0))
    big = average_cost(node, [1e6], tol=1e-12)
    assert big.infect < 1e-5 and big.total == pytest.approx(1e6)


def test_stable_equilibrium_lambda0():
    inst = two_cycle(lam=(0, 0))
    np.testing.assert_allclose(stable_equilibrium_lambda0(inst, [0, 0], tol=1e-13).p, 0.8, atol=1e-9)
    np.testing.assert_array_equal(stable_equilibrium_lambda0(inst, [0.4, 0.4]).p, 0.0)
    np.testing.assert_array_equal(stable_equilibrium_lambda0(inst, [1, 1]).p, 0.0)


def test_stable_equilibrium_lambda0_requires_zero_lambda(cycle):
    with pytest.raises(ValueError):
        stable_equilibrium_lambda0(cycle, [0, 0])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 25), scale=st.floats(0, 5))
def test_equilibrium_matches_root_finding(seed, n, scale):
    inst = random_instance(n, seed, nu=0.5)
    s = np.random.default_rng(seed).uniform(0, scale, n)
    p = equilibrium(inst, s, tol=1e-13, max_iters=100_000).p
    assert np.all((p >= 0) & (p <= 1))
    np.testing.assert_allclose(p, equilibrium_fsolve(inst, s), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 20))
def test_equilibrium_monotone_in_investment(seed, n):
    inst = random_instance(n, seed)
    rng = np.random.default_rng(seed)
    s = rng.uniform(0, 1, n)
    s2 = s + rng.uniform(0, 1, n)
    p1 = equilibrium(inst, s, tol=1e-12, max_iters=100_000).p
    p2 = equilibrium(inst, s2, tol=1e-12, max_iters=100_000).p
    assert np.all(p2 <= p1 + 1e-10)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), start=st.floats(0, 1))
def test_equilibrium_independent_of_start(seed, start):
    inst = random_instance(15, seed)
    s = np.full(15, 0.2)
    a = equilibrium(inst, s, tol=1e-13, max_iters=100_000).p
    b = equilibrium(inst, s, tol=1e-13, max_iters=100_000, p0=np.full(15, start)).p
    np.testing.assert_allclose(a, b, atol=1e-10)
