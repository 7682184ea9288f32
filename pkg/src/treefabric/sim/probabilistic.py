"""Execute a compiled program on the banked register file and PE trees."""
from __future__ import annotations

import heapq
from collections import defaultdict
from typing import Mapping

from ..compiler.program import MappedProgram
from ..dag import EvalResult
from .report import BankConflict, CycleReport, HazardViolation, SimError, Trace


class _Bank:
    def __init__(self, size: int):
        self.size = size
        self.cells: dict[int, tuple[int, int, float]] = {}  # addr -> (value id, write cycle, number)
        self.free: list[int] = []
        self.top = 0

    def alloc(self) -> int:
        if self.free:
            return heapq.heappop(self.free)
        if self.top >= self.size:
            raise SimError("register bank overflow")
        self.top += 1
        return self.top - 1

    def release(self, addr: int):
        del self.cells[addr]
        heapq.heappush(self.free, addr)


def run_probabilistic(prog: MappedProgram, leaf_values: Mapping[int, float], *, strict: bool = True,
                      trace: bool = False) -> tuple[EvalResult, CycleReport]:
    """``leaf_values`` maps Dag leaf node ids to their numeric inputs (as
    produced by :func:`treefabric.dag.leaf_inputs`)."""
    cfg = prog.cfg
    D, I = cfg.tree_depth, cfg.interval
    tr = Trace(trace)
    hazards = {"raw": 0, "bank_conflict": 0, "tag_mismatch": 0}

    def violation(kind: str, msg: str):
        hazards[kind] += 1
        if strict:
            raise (BankConflict if kind == "bank_conflict" else HazardViolation)(msg)

    scratch: dict[int, float] = dict(prog.constants)
    for v, node in prog.leaf_inputs.items():
        if node not in leaf_values:
            raise SimError(f"missing input for leaf node {node}")
        scratch[v] = float(leaf_values[node])
    banks = [_Bank(cfg.regs_per_bank) for _ in range(cfg.banks)]
    pending: dict[int, list[tuple[int, int, float]]] = defaultdict(list)  # cycle -> (bank, value, number)
    writes: list[tuple[int, int, int, int]] = []

    def land(cycle: int):
        items = pending.pop(cycle, [])
        if cycle >= 0:
            per_bank = defaultdict(int)
            for b, _, _ in items:
                per_bank[b] += 1
            for b, n in per_bank.items():
                if n > 1:
                    violation("bank_conflict", f"{n} writes to bank {b} at cycle {cycle}")
            items = sorted(items, key=lambda t: t[0])
        for b, v, x in items:
            a = banks[b].alloc()
            banks[b].cells[a] = (v, cycle, x)
            writes.append((cycle, b, a, v))
            tr.emit(cycle, f"bank{b}", "write", addr=a, value=v)

    def read(cycle: int, r) -> float:
        cell = banks[r.bank].cells.get(r.addr)
        if cell is None or cell[0] != r.value:
            violation("tag_mismatch", f"cycle {cycle}: bank {r.bank} addr {r.addr} does not hold value {r.value}")
            return float("nan")
        if cell[1] >= cycle:
            violation("raw", f"cycle {cycle}: value {r.value} read before its write completes")
        return cell[2]

    for b, v in prog.preloads:
        pending[-1].append((b, v, scratch[v]))
    land(-1)

    issue_at: dict[int, int] = {}
    busy_leaf = busy_internal = 0
    loads = stores = copies = 0
    n_instr = len(prog.instructions)
    for ins in prog.instructions:
        c = ins.cycle
        addrs: dict[int, set[int]] = defaultdict(set)
        for s in ins.issues:
            for r in s.reads:
                addrs[r.bank].add(r.addr)
        for a in ins.aux:
            if a.src is not None:
                addrs[a.src.bank].add(a.src.addr)
        for b, s in addrs.items():
            if len(s) > 1:
                violation("bank_conflict", f"{len(s)} reads from bank {b} at cycle {c}")
        for s in ins.issues:
            vals = {r.value: read(c, r) for r in s.reads}
            tree = prog.trees[s.block]
            try:
                out = tree.evaluate(D, lambda v: vals[v])
            except KeyError as exc:
                raise SimError(f"block {s.block} operand {exc} was not read") from None
            pending[c + I - 1].append((s.out_bank, s.out_value, out))
            issue_at[s.block] = c
            busy_leaf += len(tree.leaves)
            busy_internal += len(tree.nodes)
            tr.emit(c, f"pe{s.pe}", "issue", block=s.block, out_bank=s.out_bank)
        for a in ins.aux:
            if a.kind == "LOAD":
                if a.value not in scratch:
                    violation("raw", f"cycle {c}: LOAD of value {a.value} absent from scratchpad")
                pending[c].append((a.dst_bank, a.value, scratch.get(a.value, float("nan"))))
                loads += 1
            elif a.kind == "STORE":
                scratch[a.value] = read(c, a.src)
                stores += 1
            elif a.kind == "COPY":
                pending[c].append((a.dst_bank, a.value, read(c, a.src)))
                copies += 1
            tr.emit(c, "aux", a.kind.lower(), value=a.value)
        land(c)
        for r in ins.releases:
            cell = banks[r.bank].cells.get(r.addr)
            if cell is None or cell[0] != r.value:
                violation("tag_mismatch", f"cycle {c}: release of bank {r.bank} addr {r.addr}")
                continue
            banks[r.bank].release(r.addr)
    last = max(pending, default=n_instr - 1)
    for c in range(n_instr, last + 1):
        land(c)

    results = []
    for v in prog.roots:
        found = None
        for bk in banks:
            for cell in bk.cells.values():
                if cell[0] == v:
                    found = cell[2]
                    break
            if found is not None:
                break
        if found is None:
            found = scratch.get(v)
        if found is None:
            raise SimError(f"root value {v} was never produced")
        results.append(found)

    total = max([w[0] for w in writes] + [n_instr - 1, 0]) + 1
    npe, nodes = cfg.pe_count, cfg.nodes_per_pe
    leaves, internal = cfg.leaves_per_pe, nodes - cfg.leaves_per_pe
    busy = busy_leaf + busy_internal
    first = min(issue_at.values(), default=0)
    last_issue = max(issue_at.values(), default=0)
    window = last_issue - first + 1
    deps = {b["id"]: b["deps"] for b in prog.block_table}
    raw_stall = res_stall = 0
    for ins in prog.instructions:
        if ins.issues:
            continue
        c = ins.cycle
        waiting = [b for b, t in issue_at.items() if t > c]
        if any(all(issue_at[d] + I <= c for d in deps[b]) for b in waiting):
            res_stall += 1
        else:
            raw_stall += 1
    report = CycleReport(
        total_cycles=total,
        busy={"leaf": busy_leaf, "internal": busy_internal, "scalar_pe": 0, "dma": 0},
        utilization={
            "tree": busy / (npe * nodes * total),
            "tree_steady": busy / (npe * nodes * window),
            "leaf": busy_leaf / (npe * leaves * total),
            "internal": busy_internal / (npe * internal * total),
        },
        stalls={"raw": raw_stall, "bank_conflict": hazards["bank_conflict"], "fifo_full": 0,
                "sram_miss": 0, "operand": res_stall},
        hazards=dict(hazards),
        config=cfg.to_dict(),
        extra={"issues": len(issue_at), "loads": loads, "stores": stores, "copies": copies,
               "writes": [list(w) for w in writes],
               "capacity": {"leaf": npe * leaves * total, "internal": npe * internal * total}},
        trace=tr.lines(),
    )
    return EvalResult(tuple(results), None, False), report


def simulated_writes(report: CycleReport) -> list[tuple[int, int, int, int]]:
    return [tuple(w) for w in report.extra["writes"]]
