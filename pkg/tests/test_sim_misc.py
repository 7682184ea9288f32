import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treefabric.config import MachineConfig
from treefabric.dag import evaluate
from treefabric.generators import random_hmm, random_kcnf, random_sparse_int, rng_of
from treefabric.oracles import dense_matmul, two_stage_event_sim
from treefabric.prob import unroll_hmm_to_dag
from treefabric.sim import (BusySlot, DimensionMismatch, Host, LengthMismatch, SlotStatus, SparseMatrix,
                            interconnect_latency, measure_broadcast, pipeline_two_level,
                            run_spmspm, run_symbolic_sat)

# -- sparse matmul ----------------------------------------------------------


def test_identity_times_identity():
    eye = np.eye(4, dtype=int)
    C, _ = run_spmspm(eye, eye)
    assert np.array_equal(C.to_dense(), eye)


def test_dot_product_is_one_issue():
    a = np.arange(1, 9).reshape(1, 8)
    C, rep = run_spmspm(a, a.T.copy())
    assert C.to_dense()[0, 0] == 204
    assert rep.extra["issues"] == 1
    assert rep.total_cycles == 1 + 3


def test_random_sixteen_matches_dense():
    A = random_sparse_int(0, 16, 16, 0.1)
    B = random_sparse_int(1, 16, 16, 0.1)
    C, _ = run_spmspm(A, B)
    assert np.array_equal(C.to_dense(), np.array(dense_matmul(A, B)))


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(1, 12), st.integers(1, 12),
       st.floats(0.0, 0.6), st.integers(1, 4))
def test_issue_count_formula(seed, m, k, n, density, depth):
    A = random_sparse_int(seed, m, k, density)
    B = random_sparse_int(seed + 1, k, n, density)
    cfg = MachineConfig(tree_depth=depth, banks=2 << depth)
    C, rep = run_spmspm(A, B, cfg)
    assert np.array_equal(C.to_dense(), A @ B)
    pairs = [int((A[i] != 0).astype(int) @ (B[:, j] != 0).astype(int)) for i in range(m) for j in range(n)]
    issues = sum(math.ceil(p / (1 << depth)) for p in pairs)
    assert rep.extra["issues"] == issues
    assert rep.total_cycles == (issues + depth if issues else 0)


def test_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        run_spmspm(np.ones((2, 3)), np.ones((2, 3)))


def test_sparse_round_trip():
    M = random_sparse_int(3, 5, 7, 0.3)
    S = SparseMatrix.from_dense(M)
    assert S.nnz == int((M != 0).sum())
    assert np.array_equal(S.to_dense(), M)


# -- interconnect -----------------------------------------------------------

def test_single_leaf_is_free():
    assert all(interconnect_latency(t, 1) == 0 for t in ("tree", "mesh", "bus"))


def test_sixty_four_leaves():
    assert interconnect_latency("tree", 64) == 6
    assert interconnect_latency("mesh", 64) == 15
    assert interconnect_latency("bus", 64) == 64


def test_tree_log_law():
    for p in range(12):
        assert interconnect_latency("tree", 2 ** (p + 1)) == interconnect_latency("tree", 2 ** p) + 1


@given(st.integers(4, 5000))
def test_strict_topology_ordering(n):
    assert interconnect_latency("tree", n) < interconnect_latency("mesh", n) < interconnect_latency("bus", n)


def test_unknown_topology():
    with pytest.raises(ValueError):
        interconnect_latency("ring", 8)


@pytest.mark.parametrize("p", range(1, 8))
def test_simulated_broadcast_matches_model(p):
    assert measure_broadcast(2 ** p) == interconnect_latency("tree", 2 ** p)


# -- two-level pipeline -----------------------------------------------------

def test_uniform_batches():
    for B in (1, 2, 5, 10):
        assert pipeline_two_level([3.0] * B, [3.0] * B).makespan == (B + 1) * 3.0


def test_single_batch():
    assert pipeline_two_level([2.0], [5.0]).makespan == 7.0


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        pipeline_two_level([1.0], [1.0, 2.0])


@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0, 100)), min_size=1, max_size=10))
def test_pipeline_bounds_and_event_sim(pairs):
    n, s = [p[0] for p in pairs], [p[1] for p in pairs]
    res = pipeline_two_level(n, s)
    assert max(sum(n), sum(s)) - 1e-9 <= res.makespan <= sum(n) + sum(s) + 1e-9
    assert res.makespan == pytest.approx(two_stage_event_sim(n, s))
    for a, b in zip(res.timeline, res.timeline[1:]):
        assert b.symbolic_start >= max(a.symbolic_end, b.neural_end)


# -- host handshake ---------------------------------------------------------

def test_nonblocking_status_mid_run():
    host = Host()
    host.execute(0, random_kcnf(1, 20, 85), "sat")
    assert host.check_status(0) is SlotStatus.EXECUTION
    assert host.result(0) is None


def test_blocking_status_returns_idle_with_result():
    host = Host()
    host.execute(0, random_kcnf(1, 20, 85), "sat")
    assert host.check_status(0, blocking=True) is SlotStatus.IDLE
    assert host.slots[0].symbolic_ready
    assert host.result(0).verdict in ("SAT", "UNSAT")


def test_execute_on_busy_slot():
    host = Host()
    host.execute(0, random_kcnf(1, 20, 85), "sat")
    with pytest.raises(BusySlot):
        host.execute(0, random_kcnf(2, 20, 85), "sat")


def test_interleaved_batches_match_standalone():
    cfg = MachineConfig()
    host = Host(cfg)
    cnfs = [random_kcnf(s, 20, 85) for s in range(2)]
    hmm_dag = unroll_hmm_to_dag(random_hmm(3, 2, 3, 3))
    A = random_sparse_int(4, 6, 6, 0.4)
    payloads = [(cnfs[0], "sat"), (hmm_dag, "hmm"), (cnfs[1], "sat"), ((A, A), "spmspm")]
    for b, (p, mode) in enumerate(payloads):
        host.execute(b, p, mode)
        host.advance(7)
    for b in reversed(range(4)):
        assert host.check_status(b, blocking=True) is SlotStatus.IDLE
    for b in (0, 2):
        assert host.result(b).verdict == run_symbolic_sat(payloads[b][0], cfg)[0].verdict
    assert host.result(1) == pytest.approx(evaluate(hmm_dag, {}).value, rel=1e-9)
    assert np.array_equal(host.result(3).to_dense(), A @ A)
