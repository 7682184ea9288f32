"""Compiled program: VLIW instruction stream plus everything the simulator
needs to run it and check it."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..config import MachineConfig
from .treemap import TreeConfig


@dataclass(frozen=True)
class Read:
    bank: int
    addr: int
    value: int


@dataclass
class Issue:
    block: int
    pe: int
    reads: list[Read]
    out_bank: int
    out_value: int


@dataclass
class AuxOp:
    kind: str            # LOAD | STORE | COPY
    value: int
    dst_bank: int | None = None      # LOAD, COPY
    src: Read | None = None          # STORE, COPY


@dataclass
class Instruction:
    cycle: int
    issues: list[Issue] = field(default_factory=list)
    aux: list[AuxOp] = field(default_factory=list)
    releases: list[Read] = field(default_factory=list)   # freed at end of cycle

    @property
    def nop(self) -> bool:
        return not self.issues


Write = tuple[int, int, int, int]  # (cycle, bank, addr, value id)


@dataclass
class MappedProgram:
    cfg: MachineConfig
    kernel_kind: str
    instructions: list[Instruction]
    trees: list[TreeConfig]
    block_table: list[dict]              # id -> members, depth, deps, operands, root
    preloads: list[tuple[int, int]]      # (bank, value) written at cycle -1, in order
    predicted_writes: list[Write]
    leaf_inputs: dict[int, int]          # value id -> Dag leaf node
    constants: dict[int, float]
    roots: tuple[int, ...]
    spill_count: int = 0
    copy_count: int = 0
    reload_count: int = 0
    predicted_cycles: int = 0
    stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def read(r):
            return None if r is None else [r.bank, r.addr, r.value]

        return {
            "format": "treefabric-program v1",
            "config": self.cfg.to_dict(),
            "kernel_kind": self.kernel_kind,
            "roots": list(self.roots),
            "leaf_inputs": [[v, n] for v, n in sorted(self.leaf_inputs.items())],
            "constants": [[v, c] for v, c in sorted(self.constants.items())],
            "blocks": self.block_table,
            "trees": [t.to_dict() for t in self.trees],
            "preloads": [list(p) for p in self.preloads],
            "instructions": [
                {
                    "cycle": ins.cycle,
                    "issues": [{"block": s.block, "pe": s.pe, "reads": [read(r) for r in s.reads],
                                "out_bank": s.out_bank, "out_value": s.out_value} for s in ins.issues],
                    "aux": [{"kind": a.kind, "value": a.value, "dst_bank": a.dst_bank, "src": read(a.src)}
                            for a in ins.aux],
                    "releases": [read(r) for r in ins.releases],
                }
                for ins in self.instructions
            ],
            "predicted_writes": [list(w) for w in self.predicted_writes],
            "spill_count": self.spill_count,
            "copy_count": self.copy_count,
            "reload_count": self.reload_count,
            "predicted_cycles": self.predicted_cycles,
            "stats": self.stats,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def loads(cls, text: str) -> "MappedProgram":
        d = json.loads(text)
        if d.get("format") != "treefabric-program v1":
            raise ValueError("not a treefabric program")

        def read(x):
            return None if x is None else Read(*x)

        instrs = [
            Instruction(
                i["cycle"],
                [Issue(s["block"], s["pe"], [read(r) for r in s["reads"]], s["out_bank"], s["out_value"])
                 for s in i["issues"]],
                [AuxOp(a["kind"], a["value"], a["dst_bank"], read(a["src"])) for a in i["aux"]],
                [read(r) for r in i["releases"]],
            )
            for i in d["instructions"]
        ]
        return cls(
            MachineConfig.from_dict(d["config"]), d["kernel_kind"], instrs,
            [TreeConfig.from_dict(t) for t in d["trees"]], d["blocks"],
            [tuple(p) for p in d["preloads"]], [tuple(w) for w in d["predicted_writes"]],
            {v: n for v, n in d["leaf_inputs"]}, {v: c for v, c in d["constants"]},
            tuple(d["roots"]), d["spill_count"], d["copy_count"], d["reload_count"],
            d["predicted_cycles"], d["stats"],
        )
