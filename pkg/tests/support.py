"""Helpers shared by several test modules."""
from __future__ import annotations

from treefabric.compiler import compile_dag, static_check
from treefabric.config import MachineConfig
from treefabric.dag import Dag, evaluate, leaf_inputs
from treefabric.sim.probabilistic import run_probabilistic, simulated_writes


def rel_err(got: float, want: float) -> float:
    return abs(got - want) / max(abs(want), 1e-300)


def compile_and_run(dag: Dag, cfg: MachineConfig | None = None, assignment=None, trace=False):
    """Compile, simulate and check the address contract and static hazards.
    Returns (program, result, report, reference EvalResult)."""
    cfg = cfg or MachineConfig()
    assignment = assignment or {}
    prog = compile_dag(dag, cfg)
    res, rep = run_probabilistic(prog, leaf_inputs(dag, assignment, marginalize=True), trace=trace)
    assert simulated_writes(rep) == [tuple(w) for w in prog.predicted_writes]
    assert static_check(prog) == {"raw_violations": 0, "port_violations": 0}
    assert rep.hazards["raw"] == 0 and rep.hazards["bank_conflict"] == 0
    ref = evaluate(dag, assignment, marginalize=True)
    return prog, res, rep, ref


# criterion number -> (passed, detail); printed in the terminal summary
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[n] = (ok, detail)
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok
