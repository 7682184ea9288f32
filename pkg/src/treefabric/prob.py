"""Probabilistic frontend: PC text format, HMM JSON, and their lowering into
the unified DAG."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .dag import Dag, DagNode, Kind, compute_scopes, constant, leaf_dist


class PcFormatError(ValueError):
    pass


class ForwardReference(PcFormatError):
    pass


class NegativeWeight(PcFormatError):
    pass


class BadLeafTable(PcFormatError):
    pass


class HmmFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PcNode:
    id: int
    type: str  # "leaf" | "sum" | "product"
    children: tuple[int, ...] = ()
    weights: tuple[float, ...] = ()
    var: int | None = None
    table: tuple[float, ...] = ()


@dataclass
class PcSpec:
    num_vars: int
    nodes: list[PcNode]
    normalized: bool = False

    @property
    def root(self) -> int:
        return self.nodes[-1].id

    def by_id(self) -> dict[int, PcNode]:
        return {n.id: n for n in self.nodes}


def _check_pc(spec: PcSpec, tol: float = 1e-9):
    seen: set[int] = set()
    for n in spec.nodes:
        if n.id in seen:
            raise PcFormatError(f"duplicate node id {n.id}")
        for c in n.children:
            if c not in seen:
                raise ForwardReference(f"node {n.id} references {c} before its definition")
        if n.type == "leaf":
            if not n.table or any(not math.isfinite(p) or p < 0 for p in n.table):
                raise BadLeafTable(f"leaf {n.id} has invalid table {n.table}")
            if abs(sum(n.table) - 1.0) > tol:
                raise BadLeafTable(f"leaf {n.id} table sums to {sum(n.table)!r}")
            if n.var is None or not 0 <= n.var < spec.num_vars:
                raise BadLeafTable(f"leaf {n.id} variable {n.var} outside 0..{spec.num_vars - 1}")
        elif n.type == "sum":
            if not n.children:
                raise PcFormatError(f"sum node {n.id} has no children")
            if any(not w >= 0 or math.isinf(w) for w in n.weights):
                raise NegativeWeight(f"sum node {n.id} has weights {n.weights}")
            if spec.normalized and abs(sum(n.weights) - 1.0) > tol:
                raise PcFormatError(f"sum node {n.id} weights sum to {sum(n.weights)!r} in a normalized file")
        elif n.type != "product":
            raise PcFormatError(f"unknown node type {n.type!r}")
        seen.add(n.id)
    if not spec.nodes:
        raise PcFormatError("empty circuit")


def parse_pc(text: str) -> PcSpec:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or not lines[0].startswith("pc v1"):
        raise PcFormatError("missing 'pc v1' header")
    htoks = lines[0].split()[2:]
    opts = dict(t.split("=", 1) for t in htoks if "=" in t)
    if "vars" not in opts:
        raise PcFormatError("header lacks vars=<n>")
    spec = PcSpec(int(opts["vars"]), [], "normalized" in htoks)
    for ln in lines[1:]:
        toks = ln.split()
        try:
            nid, typ = int(toks[0]), toks[1]
            if typ == "L":
                spec.nodes.append(PcNode(nid, "leaf", var=int(toks[2]),
                                         table=tuple(float(p) for p in toks[3:])))
            elif typ == "S":
                ch, ws = [], []
                for t in toks[2:]:
                    c, w = t.split(":")
                    ch.append(int(c))
                    ws.append(float(w))
                spec.nodes.append(PcNode(nid, "sum", tuple(ch), tuple(ws)))
            elif typ == "P":
                spec.nodes.append(PcNode(nid, "product", tuple(int(t) for t in toks[2:])))
            else:
                raise PcFormatError(f"unknown node type {typ!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, PcFormatError):
                raise
            raise PcFormatError(f"malformed line {ln!r}") from None
    _check_pc(spec)
    return spec


def dumps_pc(spec: PcSpec) -> str:
    head = f"pc v1 vars={spec.num_vars}" + (" normalized" if spec.normalized else "")
    out = [head]
    for n in spec.nodes:
        if n.type == "leaf":
            out.append(f"{n.id} L {n.var} " + " ".join(repr(p) for p in n.table))
        elif n.type == "sum":
            out.append(f"{n.id} S " + " ".join(f"{c}:{w!r}" for c, w in zip(n.children, n.weights)))
        else:
            out.append(f"{n.id} P " + " ".join(map(str, n.children)))
    return "\n".join(out) + "\n"


def lower_pc_to_dag(spec: PcSpec) -> Dag:
    """Node-for-node: file position i becomes NodeId i."""
    pos = {n.id: i for i, n in enumerate(spec.nodes)}
    nodes: list[DagNode] = []
    for n in spec.nodes:
        if n.type == "leaf":
            nodes.append(leaf_dist(n.var, n.table))
        elif n.type == "sum":
            nodes.append(DagNode(Kind.SUM, tuple(pos[c] for c in n.children), tuple(n.weights)))
        else:
            nodes.append(DagNode(Kind.PRODUCT, tuple(pos[c] for c in n.children)))
    return Dag(compute_scopes(nodes), (len(nodes) - 1,), "PC")


@dataclass(frozen=True)
class StructureReport:
    smooth: bool
    decomposable: bool
    witnesses: dict[str, int] = field(default_factory=dict)


def check_structure(dag: Dag) -> StructureReport:
    """Smoothness (Sum children share a scope) and decomposability (Product
    children have pairwise-disjoint scopes); witnesses name the lowest-id
    violating node."""
    smooth_w = decomp_w = None
    for i, n in enumerate(dag.nodes):
        if n.kind is Kind.SUM and smooth_w is None and n.children:
            first = dag.nodes[n.children[0]].scope
            if any(dag.nodes[c].scope != first for c in n.children[1:]):
                smooth_w = i
        elif n.kind is Kind.PRODUCT and decomp_w is None:
            acc: set = set()
            for c in n.children:
                sc = dag.nodes[c].scope
                if acc & sc:
                    decomp_w = i
                    break
                acc |= sc
    wit = {}
    if smooth_w is not None:
        wit["smooth"] = smooth_w
    if decomp_w is not None:
        wit["decomposable"] = decomp_w
    return StructureReport(smooth_w is None, decomp_w is None, wit)


# ---------------------------------------------------------------------------
# HMMs


@dataclass
class HmmSpec:
    K: int
    V: int
    pi: list[float]
    A: list[list[float]]
    B: list[list[float]]
    obs: list[int] = field(default_factory=list)

    def __post_init__(self):
        tol = 1e-9

        def row_ok(row, n):
            return len(row) == n and all(p >= 0 and math.isfinite(p) for p in row) and abs(sum(row) - 1.0) <= tol

        if self.K < 1 or self.V < 1:
            raise HmmFormatError("K and V must be positive")
        if not row_ok(self.pi, self.K):
            raise HmmFormatError("pi must be a length-K distribution")
        if len(self.A) != self.K or not all(row_ok(r, self.K) for r in self.A):
            raise HmmFormatError("A must be a KxK row-stochastic matrix")
        if len(self.B) != self.K or not all(row_ok(r, self.V) for r in self.B):
            raise HmmFormatError("B must be a KxV row-stochastic matrix")
        if any(not 0 <= x < self.V for x in self.obs):
            raise HmmFormatError("observation outside [0, V)")

    def with_obs(self, obs: Sequence[int]) -> "HmmSpec":
        return HmmSpec(self.K, self.V, list(self.pi), [list(r) for r in self.A],
                       [list(r) for r in self.B], list(obs))


def parse_hmm(text: str) -> HmmSpec:
    try:
        d = json.loads(text)
        return HmmSpec(int(d["K"]), int(d["V"]), [float(x) for x in d["pi"]],
                       [[float(x) for x in r] for r in d["A"]],
                       [[float(x) for x in r] for r in d["B"]],
                       [int(x) for x in d.get("obs", [])])
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise HmmFormatError(f"bad HMM document: {exc}") from None


def dumps_hmm(hmm: HmmSpec) -> str:
    return json.dumps({"K": hmm.K, "V": hmm.V, "pi": hmm.pi, "A": hmm.A, "B": hmm.B,
                       "obs": hmm.obs}, sort_keys=True) + "\n"


def unroll_hmm_to_dag(hmm: HmmSpec) -> Dag:
    """Forward recursion as a DAG.

    Layer t holds alpha_t(k) = E[k, x_t] * sum_j alpha_{t-1}(j) * A[j, k]; the
    root sums alpha_T over states.  pi, A and the emission entries that the
    sequence touches are constant leaves.
    """
    T, K = len(hmm.obs), hmm.K
    if T < 1:
        raise HmmFormatError("need at least one observation")
    nodes: list[DagNode] = []
    labels: dict[int, str] = {}

    def add(node: DagNode, label: str | None = None) -> int:
        nodes.append(node)
        if label:
            labels[len(nodes) - 1] = label
        return len(nodes) - 1

    pi_ids = [add(constant(hmm.pi[k]), f"pi[{k}]") for k in range(K)]
    a_ids = [[add(constant(hmm.A[j][k]), f"A[{j}][{k}]") for k in range(K)] for j in range(K)] if T > 1 else []
    e_ids: dict[tuple[int, int], int] = {}
    for x in hmm.obs:
        for k in range(K):
            if (k, x) not in e_ids:
                e_ids[(k, x)] = add(constant(hmm.B[k][x]), f"B[{k}][{x}]")

    alpha = [add(DagNode(Kind.PRODUCT, (pi_ids[k], e_ids[(k, hmm.obs[0])])), f"alpha[0][{k}]")
             for k in range(K)]
    for t in range(1, T):
        nxt = []
        for k in range(K):
            prods = tuple(add(DagNode(Kind.PRODUCT, (alpha[j], a_ids[j][k]))) for j in range(K))
            s = add(DagNode(Kind.SUM, prods, (1.0,) * K))
            nxt.append(add(DagNode(Kind.PRODUCT, (s, e_ids[(k, hmm.obs[t])])), f"alpha[{t}][{k}]"))
        alpha = nxt
    root = add(DagNode(Kind.SUM, tuple(alpha), (1.0,) * K), "likelihood")
    return Dag(tuple(nodes), (root,), "HMM", labels)
