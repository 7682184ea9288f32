"""Conflict-aware bank assignment."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from ..config import MachineConfig
from .blocks import BlockTable
from .ops import OpGraph


class InfeasibleWidth(ValueError):
    pass


@dataclass
class RegisterMap:
    bank: dict[int, int]                      # primary bank per value
    read_bank: dict[tuple[int, int], int]     # (block, value) -> bank the block reads
    copies: list[tuple[int, int]] = field(default_factory=list)  # extra (value, bank) instances
    conflicts: int = 0

    def block_reads(self, block) -> list[tuple[int, int]]:
        return [(v, self.read_bank[(block.id, v)]) for v in block.operands]


def pe_banks(cfg: MachineConfig) -> list[int]:
    return sorted({p % cfg.banks for p in range(cfg.pe_count)})


def map_registers(table: BlockTable, g: OpGraph, cfg: MachineConfig) -> RegisterMap:
    """Most-constrained-first bank assignment.

    Operands read by the same block must sit in distinct banks.  Block
    outputs may only live in the bank of a PE (PE p writes bank p mod B).
    The value with the fewest conflict-free banks goes next and takes the
    least-loaded of them, where load is read traffic (block reads of the
    values already there) then value count, ties by bank id.  When no bank is conflict-free the
    clash is resolved later by a duplicate instance in another bank.
    """
    B = cfg.banks
    outs = pe_banks(cfg)
    all_banks = list(range(B))
    values: list[int] = []
    nbrs: dict[int, set[int]] = {}
    for b in table.blocks:
        if len(b.operands) > B:
            raise InfeasibleWidth(f"block {b.id} reads {len(b.operands)} values but only {B} banks exist")
        for v in b.operands:
            nbrs.setdefault(v, set()).update(u for u in b.operands if u != v)
        for v in b.operands + [b.root]:
            if v not in nbrs:
                nbrs[v] = set()
    for v in sorted(nbrs):
        values.append(v)

    def domain(v):
        return outs if v in table.producer else all_banks

    reads = {v: 0 for v in values}
    for b in table.blocks:
        for v in b.operands:
            reads[v] += 1
    excluded: dict[int, set[int]] = {v: set() for v in values}
    dom_size = {v: len(domain(v)) for v in values}
    bank: dict[int, int] = {}
    load = [(0, 0)] * B
    heap = [(dom_size[v], v) for v in values]
    heapq.heapify(heap)
    conflicts = 0
    while heap:
        cnt, v = heapq.heappop(heap)
        if v in bank:
            continue
        dom = domain(v)
        feasible = [b for b in dom if b not in excluded[v]]
        if cnt != len(feasible):
            heapq.heappush(heap, (len(feasible), v))
            continue
        if feasible:
            choice = min(feasible, key=lambda b: (load[b], b))
        else:
            choice = min(dom, key=lambda b: (load[b], b))
            conflicts += 1
        bank[v] = choice
        load[choice] = (load[choice][0] + reads[v], load[choice][1] + 1)
        for u in nbrs[v]:
            if u not in bank and choice not in excluded[u]:
                excluded[u].add(choice)
                if choice in domain(u):
                    heapq.heappush(heap, (dom_size[u] - len(excluded[u] & set(domain(u))), u))

    read_bank: dict[tuple[int, int], int] = {}
    copies: set[tuple[int, int]] = set()
    for blk in table.blocks:
        used: set[int] = set()
        for v in blk.operands:
            b = bank[v]
            if b in used:
                b = min((x for x in all_banks if x not in used), key=lambda x: (load[x], x))
                load[b] = (load[b][0] + 1, load[b][1] + 1)
                copies.add((v, b))
            used.add(b)
            read_bank[(blk.id, v)] = b
    return RegisterMap(bank, read_bank, sorted(copies), conflicts)
