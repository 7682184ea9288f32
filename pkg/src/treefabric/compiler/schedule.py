"""Cycle-driven list scheduling with spills, then address replay.

Register model: every bank holds at most R live instances.  A value may
have several instances (its primary bank plus duplicates created by COPY or
LOAD).  Inputs and spilled values also live in the scratchpad, so dropping
their register copy is free; a computed value with no scratchpad copy must be
written out with STORE first.

Timing: a block issued at cycle t reads its operands at t and its result is
written at t + interval - 1, readable from t + interval.  LOAD and COPY write
in the cycle they are issued.  Releases take effect at the end of a cycle,
after that cycle's writes, so a freed address is reusable the next cycle.
"""
from __future__ import annotations

import heapq
import math
from collections import defaultdict

from ..config import MachineConfig
from .blocks import BlockTable
from .ops import OpGraph
from .program import AuxOp, Instruction, Issue, MappedProgram, Read
from .regmap import RegisterMap
from .treemap import TreeConfig

INF = math.inf


class SchedulingError(RuntimeError):
    pass


class RegisterOverflow(SchedulingError):
    pass


def _priorities(table: BlockTable) -> dict[int, int]:
    cons = table.consumers()
    prio: dict[int, int] = {}
    for b in reversed(table.blocks):  # block ids are topological
        prio[b.id] = 1 + max((prio[c] for c in cons[b.id]), default=0)
    return prio


def schedule(g: OpGraph, table: BlockTable, rmap: RegisterMap, trees: list[TreeConfig],
             cfg: MachineConfig, kernel_kind: str = "PC") -> MappedProgram:
    I, R, B = cfg.interval, cfg.regs_per_bank, cfg.banks
    blocks = table.blocks
    prio = _priorities(table)
    order = sorted(blocks, key=lambda b: (-prio[b.id], b.id))
    rank = {b.id: k for k, b in enumerate(order)}
    reads_of = {b.id: rmap.block_reads(b) for b in blocks}
    out_bank = {b.id: rmap.bank[b.root] for b in blocks}
    pes_of_bank = defaultdict(list)
    for p in range(cfg.pe_count):
        pes_of_bank[p % B].append(p)

    need: dict[tuple[int, int], set[int]] = defaultdict(set)
    banks_of: dict[int, set[int]] = defaultdict(set)
    for b in blocks:
        for v, rb in reads_of[b.id]:
            need[(v, rb)].add(b.id)
            banks_of[v].add(rb)
    inputs = {v for v in list(g.leaf_inputs) + list(g.constants)}
    scratch = {v for v in inputs if v in banks_of}
    root_vals = set(g.roots)
    primary = rmap.bank

    resident: list[dict[int, int]] = [dict() for _ in range(B)]  # value -> write cycle
    writes_at: set[tuple[int, int]] = set()
    writes: list[tuple[int, int, int, int]] = []   # (cycle, bank, seq, value)
    frees: list[tuple[int, int, int]] = []        # (cycle, bank, value)
    read_log: dict[int, list] = defaultdict(list)  # cycle -> deferred Read holders
    issue_cycle: dict[int, int] = {}
    instr: dict[int, Instruction] = {}
    spills = copies = reloads = 0

    def next_use(v: int, b: int) -> float:
        s = need.get((v, b))
        m = min((rank[x] for x in s), default=INF) if s else INF
        if b == primary.get(v) and v not in scratch:
            for bb in banks_of[v]:
                if bb != b and v not in resident[bb]:
                    s2 = need.get((v, bb))
                    if s2:
                        m = min(m, min(rank[x] for x in s2))
        return m

    def keep_for_result(v: int, b: int) -> bool:
        return v in root_vals and b == primary.get(v) and v not in scratch

    # preload: host moves inputs into registers before cycle 0
    preloads: list[tuple[int, int]] = []
    cap = max(0, R - (I + 1))
    per_bank: dict[int, list[int]] = defaultdict(list)
    for (v, rb) in need:
        if v in inputs:
            per_bank[rb].append(v)
    seq = 0
    for rb in sorted(per_bank):
        vs = sorted(per_bank[rb], key=lambda v: (next_use(v, rb), v))[:cap]
        for v in vs:
            resident[rb][v] = -1
            writes.append((-1, rb, seq, v))
            seq += 1
            preloads.append((rb, v))

    remaining = {b.id for b in blocks}
    c = 0
    last_progress = 0
    limit = 50 * (I + R + 8) + 4 * len(blocks) + 1000
    while remaining:
        ins = Instruction(c)
        reads: dict[int, int] = {}           # bank -> value read this cycle
        aux_writes: set[int] = set()
        pending_free: set[tuple[int, int]] = set()
        used_pe: set[int] = set()
        need_space: dict[int, int] = {}      # bank -> best rank waiting on capacity
        progressed = False

        def can_read(b, v):
            return reads.get(b, v) == v

        # phase 1: issue blocks
        for blk in order:
            bid = blk.id
            if bid not in remaining:
                continue
            if any(d not in issue_cycle or issue_cycle[d] + I > c for d in blk.deps):
                continue
            ob = out_bank[bid]
            pe = next((p for p in pes_of_bank[ob] if p not in used_pe), None)
            if pe is None:
                continue
            rs = reads_of[bid]
            if not all(v in resident[rb] and resident[rb][v] < c and can_read(rb, v) for v, rb in rs):
                continue
            wc = c + I - 1
            if (ob, wc) in writes_at or (wc == c and ob in aux_writes):
                continue
            if len(resident[ob]) >= R:
                need_space[ob] = min(need_space.get(ob, INF), rank[bid])
                continue
            # issue
            used_pe.add(pe)
            for v, rb in rs:
                reads[rb] = v
            writes_at.add((ob, wc))
            resident[ob][blk.root] = wc
            writes.append((wc, ob, 0, blk.root))
            holder = Issue(bid, pe, [], ob, blk.root)
            read_log[c].append(("issue", holder, list(rs)))
            ins.issues.append(holder)
            issue_cycle[bid] = c
            remaining.discard(bid)
            progressed = True
            for v, rb in rs:
                need[(v, rb)].discard(bid)
            for v, _ in rs:
                for bb in list(banks_of[v] | ({primary[v]} if v in primary else set())):
                    if v in resident[bb] and (v, bb) not in pending_free \
                            and next_use(v, bb) == INF and not keep_for_result(v, bb):
                        pending_free.add((v, bb))

        # phase 2: auxiliary slots
        slots = cfg.scratchpad_ports

        def evict(bank: int, r: float) -> bool:
            nonlocal slots, spills
            cands = [(next_use(v, bank), v) for v, wc in resident[bank].items()
                     if wc < c and (v, bank) not in pending_free]
            cands = [(nu, v) for nu, v in cands if nu > r]
            if not cands:
                return False
            nu, v = max(cands)
            if v in scratch or (nu == INF and not keep_for_result(v, bank)):
                pending_free.add((v, bank))
                return True
            if slots == 0 or not can_read(bank, v):
                return False
            slots -= 1
            reads[bank] = v
            holder = AuxOp("STORE", v)
            read_log[c].append(("store", holder, [(v, bank)]))
            ins.aux.append(holder)
            scratch.add(v)
            if v not in inputs:
                spills += 1
            pending_free.add((v, bank))
            return True

        for ob, r in sorted(need_space.items(), key=lambda kv: (kv[1], kv[0])):
            if evict(ob, r):
                progressed = True

        window = [b for b in order if b.id in remaining
                  and all(d in issue_cycle for d in b.deps)][: max(4, 2 * cfg.pe_count)]
        for blk in window:
            r = rank[blk.id]
            for v, rb in reads_of[blk.id]:
                if slots == 0:
                    break
                if v in resident[rb]:
                    continue
                if (rb, c) in writes_at or rb in aux_writes:
                    continue
                pb = primary.get(v)
                if v in scratch:
                    kind = "LOAD"
                elif pb is not None and v in resident[pb] and resident[pb][v] < c and can_read(pb, v):
                    kind = "COPY"
                else:
                    continue
                if len(resident[rb]) >= R:
                    if evict(rb, r):
                        progressed = True
                    continue
                slots -= 1
                aux_writes.add(rb)
                resident[rb][v] = c
                writes.append((c, rb, 0, v))
                holder = AuxOp(kind, v, rb)
                if kind == "COPY":
                    reads[pb] = v
                    read_log[c].append(("copy", holder, [(v, pb)]))
                    copies += 1
                elif v not in inputs:
                    reloads += 1
                ins.aux.append(holder)
                progressed = True

        # end of cycle: releases
        for v, b in sorted(pending_free, key=lambda t: (t[1], t[0])):
            del resident[b][v]
            frees.append((c, b, v))
            ins.releases.append(Read(b, -1, v))
        if ins.issues or ins.aux or ins.releases:
            instr[c] = ins
        if progressed:
            last_progress = c
        elif c - last_progress > limit:
            raise SchedulingError(f"no progress since cycle {last_progress}; {len(remaining)} blocks left")
        c += 1

    last_issue = max(issue_cycle.values(), default=-1)
    last_instr = max(instr, default=-1)
    n_instr = max(last_issue, last_instr) + 1
    instructions = [instr.get(k, Instruction(k)) for k in range(n_instr)]

    # replay lowest-free allocation to fix every address
    writes.sort(key=lambda w: (w[0], w[1], w[2]))
    by_cycle_w: dict[int, list] = defaultdict(list)
    for w in writes:
        by_cycle_w[w[0]].append(w)
    by_cycle_f: dict[int, list] = defaultdict(list)
    for f in frees:
        by_cycle_f[f[0]].append(f)
    free_heap: list[list[int]] = [[] for _ in range(B)]
    top = [0] * B
    addr_of: dict[tuple[int, int], int] = {}
    predicted = []
    last_cycle = max([w[0] for w in writes] + [n_instr - 1, 0])
    for cyc in range(-1, last_cycle + 1):
        for kind, holder, rs in read_log.get(cyc, ()):
            resolved = [Read(b, addr_of[(v, b)], v) for v, b in rs]
            if kind == "issue":
                holder.reads = resolved
            else:
                holder.src = resolved[0]
        for _, b, _, v in by_cycle_w.get(cyc, ()):
            if free_heap[b]:
                a = heapq.heappop(free_heap[b])
            else:
                a = top[b]
                top[b] += 1
            if a >= R:
                raise RegisterOverflow(f"bank {b} overflow at cycle {cyc}")
            addr_of[(v, b)] = a
            predicted.append((cyc, b, a, v))
        if 0 <= cyc < n_instr:
            instructions[cyc].releases = [Read(r.bank, addr_of[(r.value, r.bank)], r.value)
                                          for r in instructions[cyc].releases]
        for _, b, v in by_cycle_f.get(cyc, ()):
            heapq.heappush(free_heap[b], addr_of.pop((v, b)))

    busy = sum(t.busy for t in trees)
    block_table = [
        {"id": b.id, "root": b.root, "members": b.ops, "depth": b.height, "deps": b.deps,
         "operands": b.operands, "issue": issue_cycle[b.id]}
        for b in blocks
    ]
    n_cycles = last_cycle + 1
    stats = {
        "blocks": len(blocks),
        "cross_block_edges": table.cross_edges,
        "mapping_conflicts": rmap.conflicts,
        "busy_node_slots": busy,
        "predicted_utilization": busy / (cfg.nodes_per_pe * cfg.pe_count * max(n_cycles, 1)),
    }
    return MappedProgram(cfg, kernel_kind, instructions, trees, block_table, preloads, predicted,
                         dict(g.leaf_inputs), dict(g.constants), g.roots, spills, copies, reloads,
                         n_cycles, stats)


class StaticCheckError(AssertionError):
    pass


def static_check(prog: MappedProgram) -> dict:
    """Dependency spacing and per-bank port limits over the whole program."""
    I = prog.cfg.interval
    issue = {b["id"]: b["issue"] for b in prog.block_table}
    raw = 0
    for b in prog.block_table:
        for d in b["deps"]:
            if issue[b["id"]] - issue[d] < I:
                raw += 1
    port = 0
    for ins in prog.instructions:
        rd: dict[int, set] = defaultdict(set)
        for s in ins.issues:
            for r in s.reads:
                rd[r.bank].add(r.addr)
        for a in ins.aux:
            if a.src is not None:
                rd[a.src.bank].add(a.src.addr)
        port += sum(len(x) - 1 for x in rd.values() if len(x) > 1)
    wr: dict[tuple[int, int], int] = defaultdict(int)
    for cyc, b, _, _ in prog.predicted_writes:
        if cyc >= 0:
            wr[(cyc, b)] += 1
    port += sum(n - 1 for n in wr.values() if n > 1)
    return {"raw_violations": raw, "port_violations": port}
