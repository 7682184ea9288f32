from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from support import compile_and_run
from treefabric.compiler import (compile_dag, decompose_blocks, lower, map_registers, map_trees,
                                 static_check)
from treefabric.config import MachineConfig
from treefabric.dag import Dag, DagNode, Kind, compute_scopes, leaf_dist, regularize_two_input
from treefabric.generators import balanced_layered_dag, random_dag, random_hmm
from treefabric.prob import unroll_hmm_to_dag

CFG = MachineConfig()


def L(v):
    return leaf_dist(v, (0.4, 0.6))


def mk(nodes, roots):
    return Dag(compute_scopes(nodes), tuple(roots), "PC")


def pair():
    return mk([L(0), L(1), DagNode(Kind.PRODUCT, (0, 1))], [2])


def _stages(dag, cfg=CFG):
    g = lower(dag)
    table = decompose_blocks(g, cfg)
    return g, table, map_registers(table, g, cfg)


# -- blocks -----------------------------------------------------------------

def test_three_node_tree_is_one_block():
    assert len(compile_dag(pair()).block_table) == 1


def test_depth_six_tree_gives_nine_blocks():
    prog = compile_dag(balanced_layered_dag(6))
    assert len(prog.block_table) == 9
    assert all(b["depth"] == 3 for b in prog.block_table)


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_blocks_partition_ops_and_respect_depth(seed):
    dag, _ = regularize_two_input(random_dag(seed, 12, 40))
    g = lower(dag)
    table = decompose_blocks(g, CFG)
    members = [op for b in table.blocks for op in b.ops]
    assert sorted(members) == sorted(g.ops)
    assert all(b.height <= CFG.tree_depth for b in table.blocks)


# -- register mapping -------------------------------------------------------

def test_two_operands_get_distinct_banks():
    g, table, rmap = _stages(pair())
    banks = [rb for _, rb in rmap.block_reads(table.blocks[0])]
    # bank 0 is PE 0's output bank, so least-loaded placement starts at 1
    assert sorted(banks) == [1, 2]
    assert rmap.bank[table.blocks[0].root] == 0


def test_shared_operand_assigned_once():
    nodes = [L(0), L(1), L(2), DagNode(Kind.PRODUCT, (0, 1)), DagNode(Kind.PRODUCT, (0, 2))]
    g, table, rmap = _stages(mk(nodes, [3, 4]))
    v0 = next(v for v, n in g.leaf_inputs.items() if n == 0)
    assert v0 in rmap.bank
    assert static_check(compile_dag(mk(nodes, [3, 4])))["port_violations"] == 0


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_no_same_bank_reads_with_eight_banks(seed):
    cfg = CFG.replace(tree_depth=2, banks=8)
    dag, _ = regularize_two_input(random_dag(seed, 10, 30))
    _, _, rep, _ = compile_and_run(dag, cfg)
    assert rep.hazards["bank_conflict"] == 0


# -- tree mapping -----------------------------------------------------------

def test_single_add_passes_through():
    nodes = [L(0), L(1), DagNode(Kind.SUM, (0, 1), (1.0, 1.0))]
    g, table, _ = _stages(mk(nodes, [2]))
    tc = map_trees(table, g, CFG)[0]
    assert len(tc.leaves) == 2
    ops = Counter(tc.nodes.values())
    assert ops == {"ADD": 1, "PASS": 2}


def test_replicated_operand_single_issue():
    dag = mk([L(0), DagNode(Kind.PRODUCT, (0, 0))], [1])
    prog = compile_dag(dag)
    tc = prog.trees[0]
    assert sorted(tc.leaves) == [0, 1] and len(set(tc.leaves.values())) == 1
    assert sum(len(i.issues) for i in prog.instructions) == 1


def test_balanced_depth_three_fills_tree():
    prog = compile_dag(balanced_layered_dag(3))
    assert len(prog.trees) == 1 and prog.trees[0].busy == 15


# -- scheduling -------------------------------------------------------------

def test_dependent_blocks_spaced_by_interval():
    nodes = [L(0), L(1), DagNode(Kind.PRODUCT, (0, 1)), L(2), DagNode(Kind.PRODUCT, (2, 3))]
    prog = compile_dag(mk(nodes, [2, 4]))
    assert [b["issue"] for b in prog.block_table] == [0, 4]


def test_independent_block_fills_gap():
    nodes = [L(0), L(1), DagNode(Kind.PRODUCT, (0, 1)),
             L(2), L(3), DagNode(Kind.PRODUCT, (3, 4)),
             L(5), DagNode(Kind.PRODUCT, (2, 6))]
    prog = compile_dag(mk(nodes, [2, 5, 7]), CFG.replace(pe_count=1))
    issue = {b["root"]: b["issue"] for b in prog.block_table}
    assert sorted(issue.values()) == [0, 1, 4]
    assert prog.block_table[2]["deps"] == [0] and prog.block_table[2]["issue"] == 4


def test_chain_of_five():
    nodes = [L(0), L(1), DagNode(Kind.PRODUCT, (0, 1))]
    for k in range(4):
        nodes += [L(2 + k), DagNode(Kind.PRODUCT, (len(nodes) - 1, len(nodes)))]
    roots = [i for i, n in enumerate(nodes) if n.kind is Kind.PRODUCT]
    prog = compile_dag(mk(nodes, roots))
    assert [b["issue"] for b in prog.block_table] == [0, 4, 8, 12, 16]
    assert prog.predicted_cycles == 20


def _three_results():
    nodes = [L(0), L(1), DagNode(Kind.PRODUCT, (0, 1)), L(2), L(3), DagNode(Kind.PRODUCT, (3, 4)),
             L(4), L(5), DagNode(Kind.PRODUCT, (6, 7))]
    return mk(nodes, [2, 5, 8])


def test_register_pressure_forces_one_spill():
    # one PE, so all three results land in bank 0
    prog, res, _, ref = compile_and_run(_three_results(), CFG.replace(pe_count=1, regs_per_bank=2))
    assert prog.spill_count == 1
    assert list(res.roots) == pytest.approx(list(ref.roots))
    roomy = compile_dag(_three_results(), CFG.replace(pe_count=1, regs_per_bank=3))
    assert roomy.spill_count == 0


def test_single_node_program():
    prog = compile_dag(mk([L(0)], [0]))
    assert sum(len(i.issues) for i in prog.instructions) <= 1


def test_hmm_end_to_end():
    dag, _ = regularize_two_input(unroll_hmm_to_dag(random_hmm(0, 2, 2, 2)))
    _, res, _, ref = compile_and_run(dag)
    assert res.roots[0] == pytest.approx(ref.roots[0], rel=1e-9)


def test_compile_is_deterministic():
    dag, _ = regularize_two_input(random_dag(5, 10, 40))
    assert compile_dag(dag).dumps() == compile_dag(dag).dumps()


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.sampled_from([(2, 8, 4), (3, 16, 2), (3, 64, 32)]),
       st.integers(1, 12))
def test_random_programs_are_legal_and_exact(seed, shape, pes):
    D, B, R = shape
    cfg = CFG.replace(tree_depth=D, banks=B, regs_per_bank=R, pe_count=pes)
    dag, _ = regularize_two_input(random_dag(seed, 8, 30))
    prog, res, rep, ref = compile_and_run(dag, cfg)
    assert all(b["depth"] <= D for b in prog.block_table)
    assert list(res.roots) == pytest.approx(list(ref.roots), rel=1e-9)
    for b in prog.block_table:
        for dep in b["deps"]:
            assert b["issue"] - prog.block_table[dep]["issue"] >= cfg.interval
