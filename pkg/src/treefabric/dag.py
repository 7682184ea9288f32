"""Unified DAG intermediate representation.

Every kernel (CNF, grounded formulas, probabilistic circuits, HMMs) is lowered
into a :class:`Dag` of typed nodes.  Node ids are dense indices into
``Dag.nodes``; edges point from a node to its children (operands).
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Sequence


class Kind(str, Enum):
    LEAF_DIST = "LeafDist"
    LEAF_LITERAL = "LeafLiteral"
    SUM = "Sum"
    PRODUCT = "Product"
    OR = "Or"
    AND = "And"

    @property
    def is_leaf(self) -> bool:
        return self in (Kind.LEAF_DIST, Kind.LEAF_LITERAL)


KERNEL_KINDS = ("SAT", "FOL_GROUNDED", "PC", "HMM", "SPMSPM")

# Serialization tokens, kept short so dumps stay readable.
_KIND_TOKEN = {
    Kind.LEAF_DIST: "LDIST",
    Kind.LEAF_LITERAL: "LLIT",
    Kind.SUM: "SUM",
    Kind.PRODUCT: "PROD",
    Kind.OR: "OR",
    Kind.AND: "AND",
}
_TOKEN_KIND = {v: k for k, v in _KIND_TOKEN.items()}


class DagError(Exception):
    pass


class CycleDetected(DagError):
    def __init__(self, edges):
        self.edges = sorted(edges)
        super().__init__(f"cycle among edges {self.edges[:8]}")


class UnassignedVariable(DagError):
    def __init__(self, var):
        self.var = var
        super().__init__(f"variable {var} is not assigned")


@dataclass(frozen=True)
class DagNode:
    """One node of the unified DAG.

    ``payload`` depends on ``kind``: for LeafDist it is ``(var, table)`` where
    ``var`` is ``None`` for a constant (``table`` then holds the single
    value); for LeafLiteral it is ``(var, polarity)``.
    """

    kind: Kind
    children: tuple[int, ...] = ()
    weights: tuple[float, ...] | None = None
    payload: tuple | None = None
    scope: frozenset[int] = frozenset()

    @property
    def var(self):
        if self.kind.is_leaf and self.payload is not None:
            return self.payload[0]
        return None


def leaf_dist(var: int, table: Sequence[float]) -> DagNode:
    return DagNode(Kind.LEAF_DIST, payload=(var, tuple(float(p) for p in table)), scope=frozenset([var]))


def constant(value: float) -> DagNode:
    return DagNode(Kind.LEAF_DIST, payload=(None, (float(value),)))


def literal(var: int, polarity: bool) -> DagNode:
    return DagNode(Kind.LEAF_LITERAL, payload=(var, bool(polarity)), scope=frozenset([var]))


@dataclass(eq=False)
class Dag:
    nodes: tuple[DagNode, ...]
    roots: tuple[int, ...]
    kernel_kind: str = "PC"
    labels: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = tuple(self.nodes)
        self.roots = tuple(self.roots)
        if self.kernel_kind not in KERNEL_KINDS:
            raise DagError(f"unknown kernel kind {self.kernel_kind!r}")

    def __len__(self) -> int:
        return len(self.nodes)

    @cached_property
    def topo_order(self) -> tuple[int, ...]:
        return tuple(topo_sort(self))

    @cached_property
    def parents(self) -> tuple[tuple[int, ...], ...]:
        par: list[list[int]] = [[] for _ in self.nodes]
        for i, node in enumerate(self.nodes):
            for c in node.children:
                if not par[c] or par[c][-1] != i:
                    par[c].append(i)
        return tuple(tuple(p) for p in par)

    def edge_count(self) -> int:
        return sum(len(n.children) for n in self.nodes)

    def depth(self) -> int:
        """Longest root-to-leaf path counted in edges."""
        height = [0] * len(self.nodes)
        for i in self.topo_order:
            ch = self.nodes[i].children
            height[i] = 1 + max(height[c] for c in ch) if ch else 0
        return max((height[r] for r in self.roots), default=0)

    def variables(self) -> set[int]:
        return {n.var for n in self.nodes if n.kind.is_leaf and n.var is not None}


def compute_scopes(nodes: Sequence[DagNode]) -> tuple[DagNode, ...]:
    """Return ``nodes`` with scopes recomputed bottom-up (nodes must be acyclic)."""
    tmp = Dag(tuple(nodes), (), "PC")
    out = list(nodes)
    for i in topo_sort(tmp):
        n = out[i]
        if n.kind.is_leaf:
            scope = frozenset() if n.var is None else frozenset([n.var])
        else:
            scope = frozenset().union(*(out[c].scope for c in n.children)) if n.children else frozenset()
        if scope != n.scope:
            out[i] = DagNode(n.kind, n.children, n.weights, n.payload, scope)
    return tuple(out)


# ---------------------------------------------------------------------------
# topological sort


def topo_sort(dag: Dag) -> list[int]:
    """Children-first order; ties broken by smallest NodeId."""
    n = len(dag.nodes)
    pending = [0] * n  # unfinished children (counted with multiplicity)
    users: list[list[int]] = [[] for _ in range(n)]
    for i, node in enumerate(dag.nodes):
        for c in node.children:
            if not 0 <= c < n:
                raise DagError(f"node {i} references missing child {c}")
            pending[i] += 1
            users[c].append(i)
    heap = [i for i in range(n) if pending[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        i = heapq.heappop(heap)
        order.append(i)
        for u in users[i]:
            pending[u] -= 1
            if pending[u] == 0:
                heapq.heappush(heap, u)
    if len(order) != n:
        done = set(order)
        edges = {(i, c) for i, node in enumerate(dag.nodes) if i not in done
                 for c in node.children if c not in done}
        raise CycleDetected(edges)
    return order


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    node: int | None
    rule: str
    detail: str = ""


def _strongly_connected(n: int, succ: Sequence[Sequence[int]]) -> list[list[int]]:
    # iterative Tarjan
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            if pi < len(succ[v]):
                work[-1] = (v, pi + 1)
                w = succ[v][pi]
                if index[w] == -1:
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


def validate(dag: Dag, *, table_tol: float = 1e-9) -> list[Violation]:
    """Collect every invariant violation; never raises."""
    out: list[Violation] = []
    n = len(dag.nodes)
    succ: list[list[int]] = []
    for i, node in enumerate(dag.nodes):
        good = [c for c in node.children if isinstance(c, int) and 0 <= c < n]
        if len(good) != len(node.children):
            out.append(Violation(i, "child-range", f"children {node.children}"))
        succ.append(good)
        if node.kind is Kind.SUM:
            if not node.children:
                out.append(Violation(i, "sum-arity", "Sum node without children"))
            if node.weights is None or len(node.weights) != len(node.children):
                out.append(Violation(i, "weights", "Sum weights must match children"))
            elif any(not (w >= 0.0) or math.isinf(w) for w in node.weights):
                out.append(Violation(i, "weights", f"negative or non-finite weight in {node.weights}"))
        elif node.weights is not None:
            out.append(Violation(i, "weights", f"{node.kind.value} node carries weights"))
        if node.kind.is_leaf:
            if node.children:
                out.append(Violation(i, "leaf-children", "leaf with children"))
            if node.payload is None:
                out.append(Violation(i, "payload", "leaf without payload"))
            elif node.kind is Kind.LEAF_DIST:
                var, table = node.payload
                if any(not math.isfinite(p) or p < 0 for p in table):
                    out.append(Violation(i, "leaf-table", "table entries must be finite and >= 0"))
                elif var is not None and abs(sum(table) - 1.0) > table_tol:
                    out.append(Violation(i, "leaf-table", f"table sums to {sum(table)!r}"))
    for r in dag.roots:
        if not 0 <= r < n:
            out.append(Violation(r, "root-range", "root id out of range"))

    cyclic = False
    for comp in _strongly_connected(n, succ):
        if len(comp) > 1 or comp[0] in succ[comp[0]]:
            cyclic = True
            out.append(Violation(min(comp), "acyclicity", f"cycle through nodes {sorted(comp)[:8]}"))

    seen = [False] * n
    stack = [r for r in dag.roots if 0 <= r < n]
    for r in stack:
        seen[r] = True
    while stack:
        v = stack.pop()
        for c in succ[v]:
            if not seen[c]:
                seen[c] = True
                stack.append(c)
    for i in range(n):
        if not seen[i]:
            out.append(Violation(i, "reachability", "not reachable from any root"))

    if not cyclic and not any(v.rule == "child-range" for v in out):
        order = topo_sort(dag)
        for i in order:
            node = dag.nodes[i]
            if node.kind.is_leaf:
                want = frozenset() if node.var is None else frozenset([node.var])
            else:
                want = frozenset().union(*(dag.nodes[c].scope for c in node.children)) if node.children else frozenset()
            if node.scope != want:
                out.append(Violation(i, "scope", f"scope {sorted(node.scope)} != {sorted(want)}"))
    return out


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalResult:
    roots: tuple[float, ...]
    nodes: tuple[float, ...] | None = None
    log_domain: bool = False

    @property
    def value(self) -> float:
        return self.roots[0]


def _logsumexp(xs: Iterable[float]) -> float:
    xs = list(xs)
    m = max(xs)
    if m == -math.inf:
        return -math.inf
    return m + math.log(sum(math.exp(x - m) for x in xs))


def _leaf_value(node: DagNode, assignment: Mapping, marginalize: bool) -> float:
    var = node.var
    if node.kind is Kind.LEAF_DIST:
        table = node.payload[1]
        if var is None:
            return table[0]
        if var in assignment and assignment[var] is not None:
            return table[int(assignment[var])]
    else:
        if var in assignment and assignment[var] is not None:
            return 1.0 if bool(assignment[var]) == node.payload[1] else 0.0
    if marginalize:
        return 1.0
    raise UnassignedVariable(var)


def evaluate(dag: Dag, assignment: Mapping, *, marginalize: bool = False,
             log_domain: bool = False, keep_nodes: bool = False) -> EvalResult:
    """Single bottom-up pass in topological order.

    Missing variables raise :class:`UnassignedVariable` unless ``marginalize``
    is set, in which case their leaves evaluate to 1 (valid for smooth,
    decomposable circuits).  With ``log_domain`` every value is a natural log.
    """
    vals = [0.0] * len(dag.nodes)
    for i in dag.topo_order:
        node = dag.nodes[i]
        k = node.kind
        if k.is_leaf:
            v = _leaf_value(node, assignment, marginalize)
            vals[i] = (math.log(v) if v > 0 else -math.inf) if log_domain else v
            continue
        cs = [vals[c] for c in node.children]
        if k is Kind.SUM:
            if log_domain:
                vals[i] = _logsumexp(
                    (math.log(w) + c if w > 0 else -math.inf) for w, c in zip(node.weights, cs))
            else:
                vals[i] = sum(w * c for w, c in zip(node.weights, cs))
        elif k is Kind.PRODUCT:
            if log_domain:
                vals[i] = sum(cs)
            else:
                p = 1.0
                for c in cs:
                    p *= c
                vals[i] = p
        elif k is Kind.OR:
            vals[i] = max(cs) if cs else (-math.inf if log_domain else 0.0)
        else:
            vals[i] = min(cs) if cs else (0.0 if log_domain else 1.0)
    return EvalResult(tuple(vals[r] for r in dag.roots),
                      tuple(vals) if keep_nodes else None, log_domain)


def leaf_inputs(dag: Dag, assignment: Mapping, *, marginalize: bool = False) -> dict[int, float]:
    """Per-leaf values the host hands to the accelerator for one query."""
    return {i: _leaf_value(n, assignment, marginalize)
            for i, n in enumerate(dag.nodes) if n.kind.is_leaf}


# ---------------------------------------------------------------------------
# two-input regularization


def regularize_two_input(dag: Dag) -> tuple[Dag, dict[int, int]]:
    """Split every node with fan-in > 2 into a balanced binary tree.

    Original nodes keep their ids (the top of each decomposition reuses the
    id), so the returned remapping is the identity on old ids; helper nodes
    are appended.  For Sum nodes the original weights stay on the edges into
    the original children and every helper edge carries weight 1.0.
    """
    nodes = list(dag.nodes)
    extra: list[DagNode] = []
    base = len(nodes)

    def scope_any(ref):
        return nodes[ref].scope if ref < base else extra[ref - base].scope

    def build(kind: Kind, items) -> tuple[int, float]:
        # items: list of (tag, id, weight); returns (node id, edge weight to use)
        if len(items) == 1:
            _, ref, w = items[0]
            return ref, w
        half = (len(items) + 1) // 2
        left = build(kind, items[:half])
        right = build(kind, items[half:])
        node = DagNode(kind, (left[0], right[0]),
                       (left[1], right[1]) if kind is Kind.SUM else None,
                       None, scope_any(left[0]) | scope_any(right[0]))
        extra.append(node)
        return base + len(extra) - 1, 1.0

    for i, node in enumerate(dag.nodes):
        k = len(node.children)
        if k <= 2 or node.kind.is_leaf:
            continue
        ws = node.weights if node.kind is Kind.SUM else (1.0,) * k
        items = [("orig", c, w) for c, w in zip(node.children, ws)]
        half = (k + 1) // 2
        left = build(node.kind, items[:half])
        right = build(node.kind, items[half:])
        nodes[i] = DagNode(node.kind, (left[0], right[0]),
                           (left[1], right[1]) if node.kind is Kind.SUM else None,
                           node.payload, node.scope)
    out = Dag(tuple(nodes) + tuple(extra), dag.roots, dag.kernel_kind, dict(dag.labels))
    return out, {i: i for i in range(base)}


def max_fan_in(dag: Dag) -> int:
    return max((len(n.children) for n in dag.nodes), default=0)


# ---------------------------------------------------------------------------
# text serialization


def _fmt(x: float) -> str:
    return repr(float(x))


def dumps(dag: Dag) -> str:
    lines = [f"dag v1 kernel={dag.kernel_kind} roots={','.join(map(str, dag.roots))}"]
    for i, node in enumerate(dag.nodes):
        parts = [str(i), _KIND_TOKEN[node.kind]]
        if node.kind is Kind.SUM:
            parts += [f"w={_fmt(w)}:{c}" for w, c in zip(node.weights, node.children)]
        else:
            parts += [str(c) for c in node.children]
        if node.kind is Kind.LEAF_DIST:
            var, table = node.payload
            if var is None:
                parts += ["@", "const", _fmt(table[0])]
            else:
                parts += ["@", f"var={var}"] + [_fmt(p) for p in table]
        elif node.kind is Kind.LEAF_LITERAL:
            var, pol = node.payload
            parts += ["@", f"var={var}", "pos" if pol else "neg"]
        lines.append(" ".join(parts))
    for i in sorted(dag.labels):
        lines.append(f"label {i} {dag.labels[i]}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> Dag:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("dag v1 "):
        raise DagError("missing 'dag v1' header")
    header = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    roots = tuple(int(r) for r in header.get("roots", "").split(",") if r)
    raw: list[DagNode] = []
    labels: dict[int, str] = {}
    for ln in lines[1:]:
        if ln.startswith("label "):
            _, nid, txt = ln.split(" ", 2)
            labels[int(nid)] = txt
            continue
        body, _, payload = ln.partition(" @ ")
        toks = body.split()
        nid, kind = int(toks[0]), _TOKEN_KIND[toks[1]]
        if nid != len(raw):
            raise DagError(f"node ids must be dense and ordered, got {nid}")
        children, weights = [], []
        for t in toks[2:]:
            if t.startswith("w="):
                w, c = t[2:].rsplit(":", 1)
                weights.append(float(w))
                children.append(int(c))
            else:
                children.append(int(t))
        pl = None
        scope = frozenset()
        if kind is Kind.LEAF_DIST:
            ptoks = payload.split()
            if ptoks[0] == "const":
                pl = (None, (float(ptoks[1]),))
            else:
                var = int(ptoks[0][4:])
                pl = (var, tuple(float(p) for p in ptoks[1:]))
                scope = frozenset([var])
        elif kind is Kind.LEAF_LITERAL:
            ptoks = payload.split()
            var = int(ptoks[0][4:])
            pl = (var, ptoks[1] == "pos")
            scope = frozenset([var])
        raw.append(DagNode(kind, tuple(children), tuple(weights) if kind is Kind.SUM else None, pl, scope))
    return Dag(compute_scopes(raw), roots, header.get("kernel", "PC"), labels)
