"""Seeded random workloads: CNFs, circuits, HMMs, sparse matrices, formulas."""
from __future__ import annotations

import numpy as np

from .dag import Dag, DagNode, Kind, compute_scopes, leaf_dist, literal
from .logic import CnfFormula
from .prob import HmmSpec, PcNode, PcSpec


def rng_of(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# CNF


def random_kcnf(seed, n_vars: int, n_clauses: int, k: int = 3) -> CnfFormula:
    """Uniform random k-CNF: each clause draws k distinct variables and
    independent signs, as in the uf benchmark families."""
    rng = rng_of(seed)
    clauses = []
    for _ in range(n_clauses):
        vs = rng.choice(n_vars, size=k, replace=False) + 1
        signs = rng.integers(0, 2, size=k)
        clauses.append([int(v) if s else -int(v) for v, s in zip(vs, signs)])
    return CnfFormula(n_vars, clauses)


def random_mixed_cnf(seed, n_vars: int, n_clauses: int, binary_frac: float = 0.3,
                     max_width: int = 4) -> CnfFormula:
    """Mix of binary and wider clauses; at least ``binary_frac`` are binary."""
    rng = rng_of(seed)
    n_bin = int(np.ceil(binary_frac * n_clauses))
    clauses = []
    for i in range(n_clauses):
        k = 2 if i < n_bin else int(rng.integers(3, max_width + 1))
        k = min(k, n_vars)
        vs = rng.choice(n_vars, size=k, replace=False) + 1
        signs = rng.integers(0, 2, size=k)
        clauses.append([int(v) if s else -int(v) for v, s in zip(vs, signs)])
    order = rng.permutation(n_clauses)
    return CnfFormula(n_vars, [clauses[i] for i in order])


def uf_like_instances(seed, count: int, n_vars: int = 20, n_clauses: int = 91,
                      is_sat=None) -> list[CnfFormula]:
    """Satisfiable uniform 3-SAT instances at the uf20-91 shape.

    ``is_sat`` decides satisfiability (defaults to the exhaustive oracle);
    unsatisfiable draws are discarded, matching how the benchmark set was
    filtered.
    """
    if is_sat is None:
        from .oracles import exhaustive_sat as is_sat
    rng = rng_of(seed)
    out = []
    while len(out) < count:
        f = random_kcnf(rng, n_vars, n_clauses)
        if is_sat(f):
            out.append(f)
    return out


def random_formula(seed, n_atoms: int, size: int):
    """Random propositional formula over atoms a0..a{n-1}, as s-expression text."""
    rng = rng_of(seed)
    ops = ["and", "or", "not", "implies", "iff"]

    def build(budget):
        if budget <= 1:
            return f"a{int(rng.integers(n_atoms))}"
        op = ops[int(rng.integers(len(ops)))]
        if op == "not":
            return ["not", build(budget - 1)]
        left = int(rng.integers(1, budget))
        return [op, build(left), build(budget - left)]

    from .logic import format_sexpr
    return format_sexpr(build(size))


def cnf_to_dag(cnf: CnfFormula) -> Dag:
    from .logic import lower_cnf_to_dag
    return lower_cnf_to_dag(cnf)


# ---------------------------------------------------------------------------
# probabilistic circuits


def random_pc(seed, n_vars: int, *, domain: int = 2, sums_per_region: int = 2,
              products_per_sum: int = 2, leaves_per_var: int = 2,
              min_weight: float = 0.0) -> PcSpec:
    """Smooth, decomposable circuit built by recursive variable partitioning.

    Regions (variable subsets) are cached so that sub-circuits are shared
    between parents, which makes the result a DAG rather than a tree.
    """
    rng = rng_of(seed)
    nodes: list[PcNode] = []
    cache: dict[tuple[int, ...], list[int]] = {}

    def new(node_kw) -> int:
        nid = len(nodes)
        nodes.append(PcNode(nid, **node_kw))
        return nid

    def weights(n):
        w = rng.dirichlet(np.ones(n))
        if min_weight:
            w = np.maximum(w, min_weight)
            w /= w.sum()
        return tuple(float(x) for x in w)

    def region(vs: tuple[int, ...], n_out: int) -> list[int]:
        if vs in cache:
            return cache[vs]
        if len(vs) == 1:
            ids = [new(dict(type="leaf", var=vs[0], table=weights(domain))) for _ in range(leaves_per_var)]
        else:
            ids = []
            for _ in range(n_out):
                prods = []
                for _ in range(products_per_sum):
                    perm = [vs[i] for i in rng.permutation(len(vs))]
                    cut = int(rng.integers(1, len(vs)))
                    a, b = tuple(sorted(perm[:cut])), tuple(sorted(perm[cut:]))
                    ra, rb = region(a, sums_per_region), region(b, sums_per_region)
                    ca = ra[int(rng.integers(len(ra)))]
                    cb = rb[int(rng.integers(len(rb)))]
                    prods.append(new(dict(type="product", children=(ca, cb))))
                ids.append(new(dict(type="sum", children=tuple(prods), weights=weights(len(prods)))))
        cache[vs] = ids
        return ids

    region(tuple(range(n_vars)), 1)
    # the root is the last node; drop anything unreachable from it
    return _reachable_only(PcSpec(n_vars, nodes, normalized=True))


def _reachable_only(spec: PcSpec) -> PcSpec:
    table = spec.by_id()
    keep: set[int] = set()
    stack = [spec.root]
    while stack:
        n = stack.pop()
        if n in keep:
            continue
        keep.add(n)
        stack.extend(table[n].children)
    remap = {}
    out = []
    for n in spec.nodes:
        if n.id in keep:
            remap[n.id] = len(out)
            out.append(PcNode(len(out), n.type, tuple(remap[c] for c in n.children),
                              n.weights, n.var, n.table))
    return PcSpec(spec.num_vars, out, spec.normalized)


def random_pc_bounded(seed, max_nodes: int = 200, max_vars: int = 10) -> PcSpec:
    """Draw circuits until one fits under ``max_nodes``."""
    rng = rng_of(seed)
    while True:
        n_vars = int(rng.integers(3, max_vars + 1))
        spec = random_pc(rng, n_vars,
                         sums_per_region=int(rng.integers(1, 3)),
                         products_per_sum=int(rng.integers(2, 4)),
                         leaves_per_var=int(rng.integers(1, 3)))
        if len(spec.nodes) <= max_nodes:
            return spec


def sample_pc(spec: PcSpec, seed, n: int) -> list[dict[int, int]]:
    """Ancestral samples; assumes normalized weights and decomposability."""
    rng = rng_of(seed)
    table = spec.by_id()
    out = []
    for _ in range(n):
        x: dict[int, int] = {}
        stack = [spec.root]
        while stack:
            node = table[stack.pop()]
            if node.type == "leaf":
                x[node.var] = int(rng.choice(len(node.table), p=np.asarray(node.table) / sum(node.table)))
            elif node.type == "product":
                stack.extend(node.children)
            else:
                w = np.asarray(node.weights, dtype=float)
                stack.append(node.children[int(rng.choice(len(w), p=w / w.sum()))])
        out.append(x)
    return out


def random_dag(seed, n_leaves: int = 6, n_internal: int = 10, max_fan_in: int = 4) -> Dag:
    """Arbitrary arithmetic DAG (Sum/Product only) with a single root.

    Not necessarily smooth or decomposable; used for IR and compiler tests.
    """
    rng = rng_of(seed)
    nodes: list[DagNode] = [leaf_dist(i, tuple(float(p) for p in rng.dirichlet(np.ones(2)))) for i in range(n_leaves)]
    for _ in range(n_internal):
        k = int(rng.integers(2, max_fan_in + 1))
        k = min(k, len(nodes))
        ch = tuple(int(c) for c in sorted(rng.choice(len(nodes), size=k, replace=False)))
        if rng.random() < 0.5:
            nodes.append(DagNode(Kind.SUM, ch, tuple(float(w) for w in rng.uniform(0.1, 1.0, size=k))))
        else:
            nodes.append(DagNode(Kind.PRODUCT, ch))
    # collect dangling nodes under one root so everything is reachable
    used = {c for n in nodes for c in n.children}
    dangling = tuple(i for i in range(len(nodes)) if i not in used and i != len(nodes) - 1)
    if dangling:
        nodes.append(DagNode(Kind.SUM, dangling + (len(nodes) - 1,), (1.0,) * (len(dangling) + 1)))
    return Dag(compute_scopes(nodes), (len(nodes) - 1,), "PC")


def random_logic_dag(seed, n_vars: int = 5, n_internal: int = 8) -> Dag:
    rng = rng_of(seed)
    nodes: list[DagNode] = [literal(v, pol) for v in range(1, n_vars + 1) for pol in (True, False)]
    for _ in range(n_internal):
        k = int(rng.integers(2, 4))
        ch = tuple(int(c) for c in sorted(rng.choice(len(nodes), size=k, replace=False)))
        nodes.append(DagNode(Kind.OR if rng.random() < 0.5 else Kind.AND, ch))
    used = {c for n in nodes for c in n.children}
    dangling = tuple(i for i in range(len(nodes)) if i not in used and i != len(nodes) - 1)
    if dangling:
        nodes.append(DagNode(Kind.AND, dangling + (len(nodes) - 1,)))
    return Dag(compute_scopes(nodes), (len(nodes) - 1,), "SAT")


def balanced_layered_dag(width_log2: int, layers: int | None = None, kind: Kind = Kind.PRODUCT,
                         trees: int = 1, seed=0) -> Dag:
    """``trees`` independent complete binary trees with 2^width_log2 leaves.

    With ``layers`` < width_log2 each tree is truncated to that many levels
    of internal nodes, leaving several roots per tree.
    """
    rng = rng_of(seed)
    layers = width_log2 if layers is None else layers
    nodes: list[DagNode] = []
    roots: list[int] = []
    var = 0
    for _ in range(trees):
        level = []
        for _ in range(1 << width_log2):
            p = float(rng.uniform(0.2, 0.8))
            nodes.append(leaf_dist(var, (1 - p, p)))
            level.append(len(nodes) - 1)
            var += 1
        for _ in range(layers):
            nxt = []
            for a, b in zip(level[::2], level[1::2]):
                if kind is Kind.SUM:
                    nodes.append(DagNode(Kind.SUM, (a, b), (0.5, 0.5)))
                else:
                    nodes.append(DagNode(kind, (a, b)))
                nxt.append(len(nodes) - 1)
            level = nxt
        roots.extend(level)
    return Dag(compute_scopes(nodes), tuple(roots), "PC")


# ---------------------------------------------------------------------------
# HMMs and matrices


def random_hmm(seed, K: int, V: int, T: int = 0, *, sparsity: float = 0.0) -> HmmSpec:
    """Random HMM with ``T`` sampled observations.

    ``sparsity`` zeroes that fraction of transition entries per row (keeping
    at least one) to create structurally unused transitions.
    """
    rng = rng_of(seed)

    def stochastic(rows, cols, sparse=0.0):
        M = rng.dirichlet(np.ones(cols), size=rows)
        if sparse:
            for r in range(rows):
                drop = rng.random(cols) < sparse
                if drop.all():
                    drop[int(rng.integers(cols))] = False
                M[r, drop] = 0.0
                M[r] /= M[r].sum()
        return M

    pi = rng.dirichlet(np.ones(K))
    A = stochastic(K, K, sparsity)
    B = stochastic(K, V)
    h = HmmSpec(K, V, pi.tolist(), A.tolist(), B.tolist(), [])
    return h.with_obs(sample_hmm(h, rng, T)) if T else h


def sample_hmm(hmm: HmmSpec, seed, T: int) -> list[int]:
    rng = rng_of(seed)
    z = int(rng.choice(hmm.K, p=_norm(hmm.pi)))
    obs = []
    for t in range(T):
        if t:
            z = int(rng.choice(hmm.K, p=_norm(hmm.A[z])))
        obs.append(int(rng.choice(hmm.V, p=_norm(hmm.B[z]))))
    return obs


def _norm(p):
    p = np.asarray(p, dtype=float)
    return p / p.sum()


def random_sparse_int(seed, rows: int, cols: int, density: float, lo: int = -4, hi: int = 5) -> np.ndarray:
    """Integer matrix with roughly ``density`` non-zeros (exact arithmetic)."""
    rng = rng_of(seed)
    M = rng.integers(lo, hi, size=(rows, cols))
    M[M == 0] = 1
    M[rng.random((rows, cols)) >= density] = 0
    return M.astype(np.int64)


__all__ = [
    "rng_of", "random_kcnf", "random_mixed_cnf", "uf_like_instances", "random_formula",
    "random_pc", "random_pc_bounded", "sample_pc", "random_dag", "random_logic_dag",
    "balanced_layered_dag", "random_hmm", "sample_hmm", "random_sparse_int",
]
