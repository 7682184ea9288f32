import copy
import math

import pytest
from hypothesis import given, settings, strategies as st

from support import compile_and_run, rel_err
from treefabric.compiler import compile_dag
from treefabric.config import MachineConfig
from treefabric.dag import Dag, DagNode, Kind, compute_scopes, constant, leaf_dist, leaf_inputs, \
    regularize_two_input
from treefabric.generators import random_hmm, random_pc_bounded, sample_pc
from treefabric.oracles import exact_pc_eval, hmm_forward
from treefabric.prob import lower_pc_to_dag, unroll_hmm_to_dag
from treefabric.sim import BankConflict, HazardViolation, SimError, run_probabilistic, simulated_writes
from treefabric.compiler.program import Read

CFG = MachineConfig()


def mk(nodes, roots):
    return Dag(compute_scopes(nodes), tuple(roots), "PC")


def test_single_add():
    dag = mk([constant(0.25), constant(0.5), DagNode(Kind.SUM, (0, 1), (1.0, 1.0))], [2])
    prog, res, rep, _ = compile_and_run(dag)
    assert res.roots[0] == pytest.approx(0.75)
    assert rep.total_cycles == CFG.tree_depth + 1


def test_hmm_two_by_two_matches_forward():
    h = random_hmm(1, 2, 3, 2)
    dag, _ = regularize_two_input(unroll_hmm_to_dag(h))
    _, res, _, _ = compile_and_run(dag)
    assert rel_err(res.roots[0], math.exp(hmm_forward(h))) <= 1e-9


def _chain(n):
    nodes = [leaf_dist(0, (0.3, 0.7)), leaf_dist(1, (0.6, 0.4)), DagNode(Kind.PRODUCT, (0, 1))]
    for k in range(n - 1):
        nodes += [leaf_dist(2 + k, (0.5, 0.5)), DagNode(Kind.PRODUCT, (len(nodes) - 1, len(nodes)))]
    return mk(nodes, [i for i, nd in enumerate(nodes) if nd.kind is Kind.PRODUCT])


def test_chain_of_five_cycles():
    _, _, rep, _ = compile_and_run(_chain(5), trace=True)
    assert rep.total_cycles == 4 * 4 + CFG.tree_depth + 1
    issues = [ln for ln in rep.trace if "ev=issue" in ln]
    assert [int(ln.split()[0].split("=")[1]) for ln in issues] == [0, 4, 8, 12, 16]


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_random_pcs_match_oracle(seed):
    spec = random_pc_bounded(seed, max_nodes=120, max_vars=6)
    dag, _ = regularize_two_input(lower_pc_to_dag(spec))
    x = sample_pc(spec, seed, 1)[0]
    ev = {k: v for k, v in x.items() if k % 2 == 0}  # partial evidence, rest marginalized
    prog, res, rep, ref = compile_and_run(dag, CFG, ev)
    assert rel_err(res.roots[0], exact_pc_eval(spec, ev)) <= 1e-9
    assert rel_err(res.roots[0], ref.roots[0]) <= 1e-9
    assert all(rep.busy[u] <= rep.extra.get("capacity", {}).get(u, rep.total_cycles) for u in rep.busy)


def test_report_serializes():
    _, _, rep, _ = compile_and_run(_chain(3))
    text = rep.to_json()
    assert '"total_cycles"' in text and '"config"' in text


def _tampered(shift_to):
    dag = _chain(2)
    prog = compile_dag(dag, CFG)
    bad = copy.deepcopy(prog)
    dep = bad.instructions[4].issues.pop()
    bad.instructions[shift_to].issues.append(dep)
    return bad, leaf_inputs(dag, {}, marginalize=True)


def test_early_dependent_issue_is_a_hazard():
    bad, inputs = _tampered(3)
    with pytest.raises(HazardViolation):
        run_probabilistic(bad, inputs)
    _, rep = run_probabilistic(bad, inputs, strict=False)
    assert rep.hazards["raw"] + rep.hazards["tag_mismatch"] >= 1


def test_same_bank_reads_are_a_conflict():
    dag = mk([leaf_dist(0, (0.3, 0.7)), leaf_dist(1, (0.6, 0.4)), DagNode(Kind.PRODUCT, (0, 1))], [2])
    prog = compile_dag(dag, CFG)
    bad = copy.deepcopy(prog)
    issue = next(s for ins in bad.instructions for s in ins.issues)
    r0, r1 = issue.reads
    issue.reads[1] = Read(r0.bank, r0.addr + 1, r1.value)
    with pytest.raises((BankConflict, SimError)):
        run_probabilistic(bad, leaf_inputs(dag, {}, marginalize=True))


def test_missing_input_rejected():
    prog = compile_dag(_chain(2), CFG)
    with pytest.raises(SimError):
        run_probabilistic(prog, {})


def test_writes_match_prediction_under_pressure():
    dag = _chain(6)
    cfg = CFG.replace(pe_count=1, regs_per_bank=3)
    prog, _, rep, _ = compile_and_run(dag, cfg)
    assert simulated_writes(rep) == [tuple(w) for w in prog.predicted_writes]
