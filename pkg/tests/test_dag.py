import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from treefabric.dag import (CycleDetected, Dag, DagNode, Kind, UnassignedVariable, compute_scopes, constant,
                            dumps, evaluate, leaf_dist, literal, loads, max_fan_in, regularize_two_input,
                            topo_sort, validate)
from treefabric.generators import random_dag, random_logic_dag


def _dag(nodes, roots, kind="PC"):
    return Dag(compute_scopes(nodes), tuple(roots), kind)


def _assign(dag, seed):
    rng = np.random.default_rng(seed)
    return {v: int(rng.integers(0, 2)) for v in dag.variables()}


def _depth_of(dag):
    return dag.depth()


def test_validate_empty():
    assert validate(Dag((), (), "PC")) == []


def test_validate_two_cycle():
    nodes = (DagNode(Kind.PRODUCT, (1,)), DagNode(Kind.PRODUCT, (0,)))
    dag = Dag(nodes, (0,), "PC")
    rules = [v.rule for v in validate(dag)]
    assert rules.count("acyclicity") == 1


@pytest.mark.parametrize("seed", range(10))
def test_validate_random_topological(seed):
    assert validate(random_dag(seed, n_leaves=20, n_internal=80)) == []


def test_validate_flags_bad_table_and_negative_weight():
    nodes = [leaf_dist(0, (0.3, 0.3)), leaf_dist(1, (0.5, 0.5)), DagNode(Kind.SUM, (0, 1), (-1.0, 1.0))]
    rules = {v.rule for v in validate(Dag(tuple(nodes), (2,), "PC"))}
    assert {"leaf-table", "weights"} <= rules


def test_validate_unreachable():
    nodes = [leaf_dist(0, (0.5, 0.5)), leaf_dist(1, (0.5, 0.5))]
    assert [v.rule for v in validate(_dag(nodes, [0]))] == ["reachability"]


def test_eval_sum_identity():
    d = _dag([constant(0.7), DagNode(Kind.SUM, (0,), (1.0,))], [1])
    assert evaluate(d, {}).value == pytest.approx(0.7)


def test_eval_product_of_leaves():
    d = _dag([leaf_dist(0, (0.5, 0.5)), leaf_dist(1, (0.8, 0.2)), DagNode(Kind.PRODUCT, (0, 1))], [2])
    assert evaluate(d, {0: 1, 1: 1}).value == pytest.approx(0.1)


def test_eval_logic_semantics():
    # (x1 or not x2) and x2
    nodes = [literal(1, True), literal(2, False), literal(2, True),
             DagNode(Kind.OR, (0, 1)), DagNode(Kind.AND, (3, 2))]
    d = _dag(nodes, [4], "SAT")
    assert evaluate(d, {1: True, 2: True}).value == 1
    assert evaluate(d, {1: False, 2: True}).value == 0


def test_eval_unassigned():
    d = _dag([leaf_dist(0, (0.5, 0.5))], [0])
    with pytest.raises(UnassignedVariable):
        evaluate(d, {})
    assert evaluate(d, {}, marginalize=True).value == 1.0


def _brute(dag, node, x):
    n = dag.nodes[node]
    if n.kind is Kind.LEAF_DIST:
        var, table = n.payload
        return table[0] if var is None else table[x[var]]
    vals = [_brute(dag, c, x) for c in n.children]
    if n.kind is Kind.SUM:
        return sum(w * v for w, v in zip(n.weights, vals))
    return math.prod(vals)


@pytest.mark.parametrize("seed", range(20))
def test_eval_matches_recursive(seed):
    d = random_dag(seed, n_leaves=6, n_internal=14)
    x = _assign(d, seed)
    assert evaluate(d, x).value == pytest.approx(_brute(d, d.roots[0], x), rel=1e-12)


def test_log_domain_matches_linear():
    d = random_dag(3, n_leaves=8, n_internal=20)
    x = _assign(d, 3)
    lin = evaluate(d, x).value
    assert math.exp(evaluate(d, x, log_domain=True).value) == pytest.approx(lin, rel=1e-12)


def test_topo_chain_and_single():
    d = _dag([constant(1.0), DagNode(Kind.PRODUCT, (0,)), DagNode(Kind.PRODUCT, (1,))], [2])
    assert topo_sort(d) == [0, 1, 2]
    assert topo_sort(_dag([constant(1.0)], [0])) == [0]


def test_topo_cycle_raises():
    nodes = (DagNode(Kind.PRODUCT, (1,)), DagNode(Kind.PRODUCT, (0,)))
    with pytest.raises(CycleDetected):
        topo_sort(Dag(nodes, (0,), "PC"))


@given(st.integers(0, 10_000))
def test_topo_order_respects_edges(seed):
    d = random_dag(seed, n_leaves=5, n_internal=25)
    pos = {n: i for i, n in enumerate(topo_sort(d))}
    for i, n in enumerate(d.nodes):
        for c in n.children:
            assert pos[c] < pos[i]


def test_regularize_fan_in_two_unchanged():
    d = _dag([constant(0.5), constant(0.25), DagNode(Kind.SUM, (0, 1), (0.3, 0.7))], [2])
    r, remap = regularize_two_input(d)
    assert r.nodes == d.nodes
    assert remap == {0: 0, 1: 1, 2: 2}


def test_regularize_fan_in_four_sum():
    leaves = [leaf_dist(i, (0.5, 0.5)) for i in range(4)]
    d = _dag(leaves + [DagNode(Kind.SUM, (0, 1, 2, 3), (0.1, 0.2, 0.3, 0.4))], [4])
    r, _ = regularize_two_input(d)
    sums = [n for n in r.nodes if n.kind is Kind.SUM]
    assert len(sums) == 3
    assert r.depth() == 2
    assert max_fan_in(r) == 2


def test_regularize_fan_in_seven_product():
    rng = np.random.default_rng(7)
    leaves = [leaf_dist(i, tuple(float(p) for p in rng.dirichlet([1, 1]))) for i in range(7)]
    d = _dag(leaves + [DagNode(Kind.PRODUCT, tuple(range(7)))], [7])
    r, _ = regularize_two_input(d)
    assert r.depth() == 3
    for s in range(10):
        x = _assign(d, s)
        assert evaluate(r, x).value == pytest.approx(evaluate(d, x).value, rel=1e-12)


@given(st.integers(0, 10_000))
def test_regularize_preserves_semantics(seed):
    d = random_dag(seed, n_leaves=6, n_internal=12, max_fan_in=6)
    r, _ = regularize_two_input(d)
    assert validate(r) == []
    assert max_fan_in(r) <= 2
    for s in range(3):
        x = _assign(d, seed + s)
        want = evaluate(d, x).value
        assert abs(evaluate(r, x).value - want) <= 1e-12 * abs(want)
    k = max(2, max_fan_in(d))
    assert r.depth() <= d.depth() * math.ceil(math.log2(k))


@given(st.integers(0, 10_000))
def test_regularize_logic_dag(seed):
    d = random_logic_dag(seed)
    r, _ = regularize_two_input(d)
    for s in range(3):
        x = {v: bool(b) for v, b in _assign(d, seed + s).items()}
        assert evaluate(r, x).value == evaluate(d, x).value


@given(st.integers(0, 10_000))
def test_regularize_idempotent(seed):
    r1, _ = regularize_two_input(random_dag(seed, max_fan_in=5))
    r2, remap = regularize_two_input(r1)
    assert r2.nodes == r1.nodes
    assert all(k == v for k, v in remap.items())


@given(st.integers(0, 10_000))
def test_serialization_roundtrip(seed):
    d = random_dag(seed)
    text = dumps(d)
    assert dumps(loads(text)) == text
    assert loads(text).nodes == d.nodes
