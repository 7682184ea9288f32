"""Place each block onto the physical node positions of one PE tree.

Position (level, index): level 0 holds the 2^D leaf slots, level D the root.
Node (L, i) takes its inputs from (L-1, 2i) and (L-1, 2i+1).
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..config import MachineConfig
from .blocks import Block, BlockTable
from .ops import OpGraph, apply_op


class BlockTooWide(ValueError):
    pass


@dataclass
class TreeConfig:
    block: int
    nodes: dict[tuple[int, int], str] = field(default_factory=dict)  # internal positions
    leaves: dict[int, int] = field(default_factory=dict)              # leaf slot -> value id
    op_at: dict[int, tuple[int, int]] = field(default_factory=dict)

    @property
    def busy(self) -> int:
        return len(self.nodes) + len(self.leaves)

    def evaluate(self, depth: int, value_of) -> float:
        """Level-by-level evaluation; ``value_of`` maps a leaf value id to a
        number.  Idle positions produce nothing."""
        cur = {(0, i): value_of(v) for i, v in self.leaves.items()}
        for L in range(1, depth + 1):
            for i in range(1 << (depth - L)):
                opc = self.nodes.get((L, i))
                if opc is None:
                    continue
                a, b = cur.get((L - 1, 2 * i)), cur.get((L - 1, 2 * i + 1))
                cur[(L, i)] = apply_op(opc, (a,) if opc == "PASS" else (a, b))
        return cur[(depth, 0)]

    def to_dict(self) -> dict:
        return {
            "block": self.block,
            "nodes": [[L, i, op] for (L, i), op in sorted(self.nodes.items())],
            "leaves": [[i, v] for i, v in sorted(self.leaves.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeConfig":
        return cls(d["block"], {(L, i): op for L, i, op in d["nodes"]},
                   {i: v for i, v in d["leaves"]})


def map_block(block: Block, g: OpGraph, cfg: MachineConfig) -> TreeConfig:
    D = cfg.tree_depth
    if block.height > D:
        raise BlockTooWide(f"block {block.id} has height {block.height} > {D}")
    tc = TreeConfig(block.id)

    def bring(v, level, idx):
        # route an external value from a leaf slot up to (level, idx) by PASS
        if level == 0:
            tc.leaves[idx] = v
            return
        tc.nodes[(level, idx)] = "PASS"
        bring(v, level - 1, 2 * idx)

    def place(o, level, idx):
        if idx >= 1 << (D - level):
            raise BlockTooWide(f"block {block.id}: level {level} needs position {idx}")
        op = g.ops[o]
        tc.nodes[(level, idx)] = op.opcode
        tc.op_at[o] = (level, idx)
        for j, (v, inside) in enumerate(zip(op.operands, block.absorbed[o])):
            if inside:
                place(v, level - 1, 2 * idx + j)
            else:
                bring(v, level - 1, 2 * idx + j)

    place(block.root, block.height, 0)
    for L in range(block.height + 1, D + 1):
        tc.nodes[(L, 0)] = "PASS"
    return tc


def map_trees(table: BlockTable, g: OpGraph, cfg: MachineConfig) -> list[TreeConfig]:
    return [map_block(b, g, cfg) for b in table.blocks]
