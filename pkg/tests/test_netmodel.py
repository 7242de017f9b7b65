import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance, two_cycle
from sisopt import GenerationFailed, NetworkInstance, ParseError, generate_scale_free, parse_instance, serialize_instance, validate
from sisopt.netmodel import default_dmax, parse_svec, serialize_svec

VALID = """sisnet v1
nodes 3
edges 3
e 0 1 0.25
e 1 2 0.5
e 2 0 0.75
lambda 0.1 0 0
delta 0.1 0.1 0.1
kappa 10 10 10
cost 1 2 3
wlin 1 1 1
"""


def test_validate_two_cycle_ok():
    assert validate(two_cycle()).ok


def test_validate_path_reachable_from_attacked_node():
    B = np.array([[0.0, 0.0], [0.5, 0.0]])  # edge 0 -> 1
    inst = NetworkInstance.from_matrix(B, [0.1, 0.0], [0.1, 0.1], [10, 10], [1, 1])
    assert validate(inst).ok


def test_validate_unreachable_zero_lambda_node():
    B = np.array([[0.0, 0.0], [0.5, 0.0]])
    inst = NetworkInstance.from_matrix(B, [0.0, 0.1], [0.1, 0.1], [10, 10], [1, 1])
    rep = validate(inst)
    assert not rep.ok
    assert "no path" in rep.violations[0]


def test_validate_reports_bad_parameters():
    inst = two_cycle().replace(delta=np.array([0.1, -1.0]))
    assert not validate(inst).ok


def test_alpha_is_kappa_times_delta():
    inst = two_cycle(delta=(0.2, 0.5), alpha=2.0)
    np.testing.assert_allclose(inst.alpha, [2.0, 2.0])


def test_generate_benchmark_instance():
    inst = generate_scale_free(100, power=1.5, dmin=2, dmax=default_dmax(100), seed=1)
    assert inst.n == 100
    assert default_dmax(100) == 14
    assert validate(inst).ok
    from scipy.sparse.csgraph import connected_components

    assert connected_components(inst.B, directed=True, connection="strong")[0] == 1


def test_generate_degree_bounds():
    inst = generate_scale_free(200, dmin=2, dmax=default_dmax(200), seed=3)
    A = (inst.B + inst.B.T).toarray() > 0
    deg = A.sum(axis=1)
    assert deg.min() >= 2 and deg.max() <= default_dmax(200)


def test_generate_forced_two_cycle():
    inst = generate_scale_free(2, power=1.5, dmin=1, dmax=1, seed=42)
    assert [(a, b) for a, b, _ in inst.edges] == [(0, 1), (1, 0)]


def test_generate_is_deterministic():
    a = serialize_instance(generate_scale_free(60, seed=9))
    b = serialize_instance(generate_scale_free(60, seed=9))
    assert a == b
    assert a != serialize_instance(generate_scale_free(60, seed=10))


def test_generate_cost_construction():
    inst = generate_scale_free(50, seed=2, nu=1.0)
    out_rate = np.asarray(inst.B.sum(axis=0)).ravel()
    extra = inst.cost_c - out_rate
    assert np.all(extra >= 0) and np.all(extra <= 2)
    np.testing.assert_allclose(inst.alpha, 1.0)
    np.testing.assert_allclose(inst.delta, 0.1)


def test_generate_zero_lambda():
    inst = generate_scale_free(30, seed=2, zero_lambda=True)
    assert np.all(inst.lam == 0)


def test_generate_infeasible_degrees():
    with pytest.raises((GenerationFailed, ValueError)):
        generate_scale_free(5, dmin=3, dmax=2, seed=0)


def test_parse_serialize_round_trip():
    inst = parse_instance(VALID)
    assert serialize_instance(parse_instance(serialize_instance(inst))) == serialize_instance(inst)
    np.testing.assert_allclose(inst.B.toarray()[1, 0], 0.25)


def test_parse_canonicalizes_edge_order():
    shuffled = VALID.replace("e 0 1 0.25\ne 1 2 0.5\ne 2 0 0.75", "e 2 0 0.75\ne 0 1 0.25\ne 1 2 0.5")
    assert serialize_instance(parse_instance(shuffled)) == serialize_instance(parse_instance(VALID))


def test_parse_self_loop():
    text = VALID.replace("nodes 3", "nodes 4").replace("e 2 0 0.75", "e 3 3 0.1")
    text = text.replace("lambda 0.1 0 0", "lambda 0.1 0 0 0").replace("delta 0.1 0.1 0.1", "delta 0.1 0.1 0.1 0.1")
    text = text.replace("kappa 10 10 10", "kappa 10 10 10 10").replace("cost 1 2 3", "cost 1 2 3 4")
    text = text.replace("wlin 1 1 1", "wlin 1 1 1 1")
    with pytest.raises(ParseError, match="self-loop"):
        parse_instance(text)


def test_parse_missing_delta():
    with pytest.raises(ParseError, match="missing section"):
        parse_instance(VALID.replace("delta 0.1 0.1 0.1\n", ""))


@pytest.mark.parametrize(
    "old,new,msg",
    [
        ("edges 3", "edges 4", "edge"),
        ("e 1 2 0.5", "e 1 2 -0.5", "rate"),
        ("sisnet v1", "sisnet v2", "header"),
        ("cost 1 2 3", "cost 1 2", "cost"),
    ],
)
def test_parse_errors_carry_line(old, new, msg):
    with pytest.raises(ParseError, match=msg) as info:
        parse_instance(VALID.replace(old, new))
    assert "line" in str(info.value)


def test_svec_round_trip():
    v = np.array([0.0, 1.5, 1e-17, 3.0])
    np.testing.assert_array_equal(parse_svec(serialize_svec(v)), v)
    with pytest.raises(ParseError):
        parse_svec(serialize_svec(v), n=3)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(3, 40), seed=st.integers(0, 2**32 - 1), nu=st.floats(0, 1))
def test_generated_instances_round_trip_and_validate(n, seed, nu):
    inst = random_instance(n, seed, nu=nu)
    assert validate(inst).ok
    text = serialize_instance(inst)
    assert serialize_instance(parse_instance(text)) == text
