"""Block decomposition: cut the op graph into trees of depth <= D."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..config import MachineConfig
from .ops import OpGraph


@dataclass
class Block:
    id: int
    root: int                              # op id; also the value the block produces
    ops: list[int]                         # members, children before parents
    height: int
    absorbed: dict[int, tuple[bool, ...]]  # op -> which operand positions are in-block
    operands: list[int] = field(default_factory=list)  # distinct external values
    deps: list[int] = field(default_factory=list)      # producer block ids


@dataclass
class BlockTable:
    blocks: list[Block]
    block_of: dict[int, int]   # op id -> block id
    producer: dict[int, int]   # value id -> block id (block roots only)
    cross_edges: int

    def __len__(self):
        return len(self.blocks)

    def consumers(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {b.id: [] for b in self.blocks}
        for b in self.blocks:
            for d in b.deps:
                out[d].append(b.id)
        return out


def decompose_blocks(g: OpGraph, cfg: MachineConfig) -> BlockTable:
    """Bottom-up height cut.

    An op may pull a child op into its block when that child has exactly one
    use and is not a Dag root (so its value never has to reach a register).
    When the resulting height would exceed D the tallest absorbed child is
    cut loose and becomes the root of its own block; repeat until it fits.
    """
    D = cfg.tree_depth
    root_vals = set(g.roots)
    height: dict[int, int] = {}
    absorbed: dict[int, list[bool]] = {}
    for oid, op in g.ops.items():
        flags = [
            v in g.ops and len(g.uses.get(v, ())) == 1 and v not in root_vals
            for v in op.operands
        ]
        while True:
            h = 1 + max((height[v] for v, f in zip(op.operands, flags) if f), default=0)
            if h <= D:
                break
            tallest = max((j for j, f in enumerate(flags) if f),
                          key=lambda j: (height[op.operands[j]], -j))
            flags[tallest] = False
        height[oid] = h
        absorbed[oid] = flags

    inner = {v for oid, op in g.ops.items() for v, f in zip(op.operands, absorbed[oid]) if f}
    roots = [oid for oid in g.ops if oid not in inner]
    blocks: list[Block] = []
    block_of: dict[int, int] = {}
    for bid, r in enumerate(roots):
        members: list[int] = []

        def collect(o):
            for v, f in zip(g.ops[o].operands, absorbed[o]):
                if f:
                    collect(v)
            members.append(o)

        collect(r)
        for o in members:
            block_of[o] = bid
        blocks.append(Block(bid, r, members, height[r], {o: tuple(absorbed[o]) for o in members}))

    producer = {b.root: b.id for b in blocks}
    cross = 0
    for b in blocks:
        ext: list[int] = []

        def walk(o):
            for v, f in zip(g.ops[o].operands, absorbed[o]):
                if f:
                    walk(v)
                else:
                    ext.append(v)

        walk(b.root)  # leaf-slot order, left to right
        seen = []
        for v in ext:
            if v not in seen:
                seen.append(v)
        b.operands = seen
        deps = sorted({producer[v] for v in seen if v in producer})
        b.deps = deps
        cross += sum(1 for v in ext if v in producer)
    return BlockTable(blocks, block_of, producer, cross)
