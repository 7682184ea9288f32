import itertools
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from treefabric.config import MachineConfig
from treefabric.generators import random_kcnf, random_mixed_cnf
from treefabric.logic import CnfFormula
from treefabric.oracles import reference_sat
from treefabric.sim import (ResourceExhausted, overlap_scenario, parse_trace_line, run_cube_and_conquer,
                            run_symbolic_sat)

GOLDEN = Path(__file__).parent / "golden"


def pigeonhole(n):
    v = lambda p, h: p * n + h + 1
    cl = [[v(p, h) for h in range(n)] for p in range(n + 1)]
    for h in range(n):
        for p, q in itertools.combinations(range(n + 1), 2):
            cl.append([-v(p, h), -v(q, h)])
    return CnfFormula((n + 1) * n, cl)


def events(rep):
    return [parse_trace_line(ln) for ln in rep.trace]


def cyc(e):
    return int(e["cycle"])


# -- examples ---------------------------------------------------------------

def test_unit_clause():
    res, rep = run_symbolic_sat(CnfFormula(1, [[1]]))
    assert res.verdict == "SAT" and res.model == {1: True}
    assert res.conflicts == 0


def test_unsat_square():
    res, _ = run_symbolic_sat(CnfFormula(2, [[1, 2], [-1, 2], [1, -2], [-1, -2]]))
    assert res.verdict == "UNSAT"
    assert res.decisions == 1 and res.conflicts >= 1


def test_empty_clause_is_unsat():
    assert run_symbolic_sat(CnfFormula(1, [[1], []]))[0].verdict == "UNSAT"


def test_pigeonhole_unsat():
    res, _ = run_symbolic_sat(pigeonhole(4))
    assert res.verdict == "UNSAT" and res.learned > 0


# -- soundness against the reference ----------------------------------------

@settings(max_examples=60)
@given(st.integers(0, 100_000), st.sampled_from([10, 20, 30, 40]), st.sampled_from(["static", "vsids"]))
def test_verdict_matches_reference(seed, n, heuristic):
    cnf = random_kcnf(seed, n, round(4.26 * n))
    res, rep = run_symbolic_sat(cnf, heuristic=heuristic)
    assert res.sat == reference_sat(cnf).sat
    if res.sat:
        assert cnf.satisfied_by(res.model)
    assert all(b <= rep.extra["capacity"].get(u, rep.total_cycles) for u, b in rep.busy.items())


@settings(max_examples=30)
@given(st.integers(0, 100_000))
def test_mixed_width_formulas(seed):
    cnf = random_mixed_cnf(seed, 15, 50, binary_frac=0.4)
    assert run_symbolic_sat(cnf)[0].sat == reference_sat(cnf).sat


# -- trace properties -------------------------------------------------------

def _traced(seed, n=20, **cfg):
    cnf = random_kcnf(seed, n, round(4.26 * n))
    return run_symbolic_sat(cnf, MachineConfig(**cfg), trace=True)


@settings(max_examples=25)
@given(st.integers(0, 100_000), st.sampled_from([120, 400, 100_000]))
def test_causality_and_hygiene(seed, sram):
    res, rep = _traced(seed, sram_words=sram, fifo_depth=4)
    evs = events(rep)
    D = rep.config["tree_depth"]
    imply_at, push_at, dead = {}, {}, set()
    for e in evs:
        unit, ev = e["unit"], e["ev"]
        if ev == "imply":
            imply_at[e["id"]] = cyc(e)
        elif unit == "reduce" and ev == "arrive":
            assert e["id"] not in dead
            assert cyc(e) >= imply_at[e["id"]] + D
        elif unit == "fifo" and ev == "push":
            assert e["id"] not in dead
            push_at[e["id"]] = cyc(e)
        elif unit == "fifo" and ev == "pop":
            assert e["id"] not in dead
            assert cyc(e) > push_at[e["id"]]
        elif unit == "ctrl" and ev == "assign" and "id" in e:
            assert e["id"] not in dead
        elif unit == "ctrl" and ev == "discard":
            dead.update(e["ids"].split(","))


@settings(max_examples=15)
@given(st.integers(0, 100_000), st.integers(1, 5), st.integers(1, 3))
def test_broadcast_takes_depth_levels(seed, depth, per_level):
    res, rep = _traced(seed, tree_depth=depth, banks=2 << depth, broadcast_latency_per_level=per_level)
    last_send = {}
    n_arrive = 0
    for e in events(rep):
        if e["unit"] == "bcast" and e["ev"] == "send":
            last_send[e["lit"]] = cyc(e)
        elif e["unit"] == "bcast" and e["ev"] == "arrive":
            n_arrive += 1
            assert cyc(e) - last_send[e["lit"]] == depth * per_level
    assert n_arrive > 0
    assert rep.extra["broadcast_latency"] == depth * per_level
    assert rep.extra["reduction_latency"] == depth


def test_trace_is_deterministic():
    a = _traced(7, 30)[1]
    b = _traced(7, 30)[1]
    assert a.trace == b.trace and a.to_json() == b.to_json()


# -- the overlap scenario ---------------------------------------------------

def test_overlap_trace_matches_golden():
    cnf, cfg = overlap_scenario()
    _, rep = run_symbolic_sat(cnf, cfg, trace=True)
    got = "".join(ln + "\n" for ln in rep.trace)
    assert got == (GOLDEN / "overlap_trace.txt").read_text()


def test_overlap_event_ordering():
    cnf, cfg = overlap_scenario()
    res, rep = run_symbolic_sat(cnf, cfg, trace=True)
    evs = events(rep)
    D = cfg.tree_depth

    def first(pred, after=-1):
        return next(k for k, e in enumerate(evs) if k > after and pred(e))

    send = first(lambda e: e["unit"] == "bcast" and e["ev"] == "send")
    arrive = first(lambda e: e["unit"] == "bcast" and e["ev"] == "arrive")
    assert cyc(evs[arrive]) - cyc(evs[send]) == D
    r1 = first(lambda e: e["unit"] == "reduce")
    r2 = first(lambda e: e["unit"] == "reduce", r1)
    assert cyc(evs[r2]) - cyc(evs[r1]) == 1
    push = first(lambda e: e["unit"] == "fifo" and e["ev"] == "push")
    dma = first(lambda e: e["unit"] == "dma" and e["ev"] == "start")
    assert push < dma
    pop = first(lambda e: e["unit"] == "fifo" and e["ev"] == "pop", dma)
    conflict = first(lambda e: e["unit"] == "ctrl" and e["ev"] == "conflict")
    halt = first(lambda e: e["unit"] == "dma" and e["ev"] == "halt")
    flush = first(lambda e: e["unit"] == "fifo" and e["ev"] == "flush")
    until = int(evs[dma]["until"])
    assert cyc(evs[pop]) < until and pop < conflict
    assert conflict < halt < flush
    assert cyc(evs[conflict]) == cyc(evs[halt]) == cyc(evs[flush]) < until
    assert evs[flush]["ids"]  # a queued implication was thrown away
    assert res.verdict == "SAT" and res.conflicts == 1


# -- learned clause storage -------------------------------------------------

def test_learned_clauses_are_deleted_under_pressure():
    cnf = pigeonhole(5)
    full, _ = run_symbolic_sat(cnf)
    res, rep = run_symbolic_sat(cnf, MachineConfig(sram_words=300))
    assert rep.extra["learned_deleted"] > 0
    assert res.verdict == full.verdict == "UNSAT"


def test_no_room_for_any_learned_clause():
    with pytest.raises(ResourceExhausted):
        run_symbolic_sat(pigeonhole(3), MachineConfig(sram_words=1))


def test_conflict_limit():
    with pytest.raises(ResourceExhausted):
        run_symbolic_sat(pigeonhole(5), max_conflicts=3)


# -- cube and conquer -------------------------------------------------------

@pytest.mark.parametrize("k", [0, 1, 3])
@pytest.mark.parametrize("seed", range(6))
def test_cube_and_conquer_verdict(seed, k):
    cnf = random_kcnf(seed, 25, 106)
    res, reports = run_cube_and_conquer(cnf, MachineConfig(), k)
    assert res.sat == reference_sat(cnf).sat
    assert 1 <= len(reports) <= max(1, 2 ** k)
    if res.sat:
        assert cnf.satisfied_by(res.model)
