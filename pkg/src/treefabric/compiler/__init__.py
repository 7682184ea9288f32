"""Dag -> VLIW program for the tree PE fabric."""
from __future__ import annotations

from ..config import MachineConfig
from ..dag import Dag
from .blocks import Block, BlockTable, decompose_blocks
from .ops import OpGraph, lower
from .program import AuxOp, Instruction, Issue, MappedProgram, Read
from .regmap import InfeasibleWidth, RegisterMap, map_registers
from .schedule import SchedulingError, static_check, schedule
from .treemap import BlockTooWide, TreeConfig, map_trees


def compile_dag(dag: Dag, cfg: MachineConfig | None = None) -> MappedProgram:
    """Lower, decompose, map registers, map trees, schedule."""
    cfg = cfg or MachineConfig()
    g = lower(dag)
    table = decompose_blocks(g, cfg)
    rmap = map_registers(table, g, cfg)
    trees = map_trees(table, g, cfg)
    return schedule(g, table, rmap, trees, cfg, dag.kernel_kind)


__all__ = [
    "compile_dag", "lower", "decompose_blocks", "map_registers", "map_trees", "schedule",
    "static_check", "MappedProgram", "Instruction", "Issue", "AuxOp", "Read", "TreeConfig",
    "Block", "BlockTable", "OpGraph", "RegisterMap", "SchedulingError", "BlockTooWide",
    "InfeasibleWidth",
]
