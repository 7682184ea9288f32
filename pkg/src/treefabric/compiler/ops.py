"""Lower a two-input Dag to binary tree-node operations.

Every value (leaf input, weight constant, intermediate) gets an integer id.
Dag nodes keep their NodeId as value id; weight constants and the extra
multiplies needed for weighted Sum edges are numbered from ``len(dag)`` up.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from ..dag import Dag, Kind, max_fan_in, regularize_two_input


class LoweringError(ValueError):
    pass


OPCODE = {Kind.PRODUCT: "MUL", Kind.OR: "MAX", Kind.AND: "MIN"}
EMPTY_VALUE = {Kind.SUM: 0.0, Kind.PRODUCT: 1.0, Kind.OR: 0.0, Kind.AND: 1.0}


@dataclass(frozen=True)
class Op:
    id: int
    opcode: str               # ADD MUL MAX MIN PASS
    operands: tuple[int, ...]
    node: int | None = None   # Dag node realized by this op, if any


@dataclass
class OpGraph:
    ops: dict[int, Op]                    # insertion order is a topological order
    leaf_inputs: dict[int, int]           # value id -> Dag leaf node
    constants: dict[int, float]           # value id -> literal
    roots: tuple[int, ...]                # value id per Dag root
    node_count: int
    uses: dict[int, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        self.uses = {}
        for op in self.ops.values():
            for v in op.operands:
                self.uses.setdefault(v, []).append(op.id)

    def is_input(self, v: int) -> bool:
        return v in self.leaf_inputs or v in self.constants


def lower(dag: Dag) -> OpGraph:
    if max_fan_in(dag) > 2:
        dag, _ = regularize_two_input(dag)
    n = len(dag.nodes)
    next_id = n
    ops: dict[int, Op] = {}
    leaf_inputs: dict[int, int] = {}
    constants: dict[int, float] = {}
    const_ids: dict[float, int] = {}

    def fresh() -> int:
        nonlocal next_id
        next_id += 1
        return next_id - 1

    def const(v: float) -> int:
        if v not in const_ids:
            const_ids[v] = fresh()
            constants[const_ids[v]] = v
        return const_ids[v]

    for i in dag.topo_order:
        node = dag.nodes[i]
        if node.kind.is_leaf:
            leaf_inputs[i] = i
            continue
        ch = node.children
        if not ch:
            constants[i] = EMPTY_VALUE[node.kind]
            continue
        if node.kind is Kind.SUM:
            terms = []
            for c, w in zip(ch, node.weights):
                if w == 1.0:
                    terms.append((c, None))
                else:
                    terms.append((c, const(w)))
            if len(terms) == 1:
                c, k = terms[0]
                ops[i] = Op(i, "PASS", (c,), i) if k is None else Op(i, "MUL", (k, c), i)
            else:
                args = []
                for c, k in terms:
                    if k is None:
                        args.append(c)
                    else:
                        t = fresh()
                        ops[t] = Op(t, "MUL", (k, c), None)
                        args.append(t)
                ops[i] = Op(i, "ADD", tuple(args), i)
        else:
            ops[i] = Op(i, OPCODE[node.kind] if len(ch) == 2 else "PASS", tuple(ch), i)

    roots = []
    for r in dag.roots:
        if r in ops:
            roots.append(r)
        else:
            # a root that is itself an input still has to pass through a tree
            t = fresh()
            ops[t] = Op(t, "PASS", (r,), r)
            roots.append(t)
    return OpGraph(ops, leaf_inputs, constants, tuple(roots), n)


def apply_op(opcode: str, args) -> float:
    if opcode == "PASS":
        return args[0]
    a, b = args
    if opcode == "ADD":
        return a + b
    if opcode == "MUL":
        return a * b
    if opcode == "MAX":
        return a if a >= b else b
    if opcode == "MIN":
        return a if a <= b else b
    raise LoweringError(f"unknown opcode {opcode}")
