"""Adaptive pruning: hidden-literal removal for CNFs, circuit-flow edge pruning
for PCs and posterior-usage pruning for HMMs."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dag import Dag, DagNode, Kind, _strongly_connected, compute_scopes, evaluate
from .logic import CnfFormula
from .prob import HmmSpec, check_structure


class PruneError(Exception):
    pass


class EmptyDataset(PruneError):
    pass


class BudgetTooLarge(PruneError):
    pass


class NotTractable(PruneError):
    pass


# ---------------------------------------------------------------------------
# implication graph


def _vid(lit: int) -> int:
    return 2 * (abs(lit) - 1) + (lit < 0)


def _lit(vid: int) -> int:
    v = vid // 2 + 1
    return -v if vid & 1 else v


@dataclass
class ImplicationGraph:
    num_vars: int
    edges: list[tuple[int, int]]  # (from literal, to literal), signed ints

    def successors(self) -> list[list[int]]:
        succ: list[list[int]] = [[] for _ in range(2 * self.num_vars)]
        for a, b in self.edges:
            succ[_vid(a)].append(_vid(b))
        return succ

    def reachability(self) -> list[int]:
        """Bitset per literal vertex of the vertices reachable by a path of
        length >= 1.  Memoized over the SCC condensation, sinks first."""
        n = 2 * self.num_vars
        succ = self.successors()
        comps = _strongly_connected(n, succ)
        comp_of = [0] * n
        for ci, comp in enumerate(comps):
            for v in comp:
                comp_of[v] = ci
        members = [sum(1 << v for v in comp) for comp in comps]
        reach_c = [0] * len(comps)
        for ci, comp in enumerate(comps):  # Tarjan emits successors before predecessors
            acc = 0
            cyclic = len(comp) > 1
            for v in comp:
                for w in succ[v]:
                    cw = comp_of[w]
                    if cw == ci:
                        cyclic = True
                    else:
                        acc |= members[cw] | reach_c[cw]
            reach_c[ci] = acc | (members[ci] if cyclic else 0)
        return [reach_c[comp_of[v]] for v in range(n)]

    def implies(self, a: int, b: int, reach: list[int] | None = None) -> bool:
        reach = self.reachability() if reach is None else reach
        return bool(reach[_vid(a)] >> _vid(b) & 1)


def build_implication_graph(cnf: CnfFormula) -> ImplicationGraph:
    edges = []
    for c in cnf.clauses:
        if len(c) == 2:
            l1, l2 = c
            edges.append((-l1, l2))
            edges.append((-l2, l1))
    return ImplicationGraph(cnf.num_vars, edges)


@dataclass
class PruneLog:
    passes: int = 0
    removed: list[tuple[int, int, int]] = field(default_factory=list)  # (clause index, dropped, kept witness)


def prune_hidden_literals(cnf: CnfFormula) -> tuple[CnfFormula, PruneLog]:
    """Drop literal ``a`` from any clause that also holds ``b`` with a => b.

    Because the formula entails (not a or b), the shortened clause is entailed
    too, and it subsumes the original, so the model set is unchanged.  The
    graph is rebuilt after every pass since shortened clauses may become
    binary; the loop stops at a fixpoint.
    """
    clauses = [list(c) for c in cnf.clauses]
    log = PruneLog()
    while True:
        log.passes += 1
        reach = build_implication_graph(CnfFormula(cnf.num_vars, clauses)).reachability()
        changed = False
        for ci, c in enumerate(clauses):
            if len(c) < 2:
                continue
            kept = list(c)
            for a in c:
                va = reach[_vid(a)]
                if not va:
                    continue
                witness = next((b for b in kept if b != a and va >> _vid(b) & 1), None)
                if witness is not None:
                    kept.remove(a)
                    log.removed.append((ci, a, witness))
            if len(kept) != len(c):
                clauses[ci] = kept
                changed = True
        if not changed:
            break
    return CnfFormula(cnf.num_vars, clauses, cnf.tautologies_dropped, dict(cnf.atoms)), log


# ---------------------------------------------------------------------------
# circuit flows


@dataclass
class FlowStats:
    edges: list[tuple[int, int]]          # (parent, child index) for every Sum edge
    edge_flow: np.ndarray                 # cumulative F_{n,c}(D), aligned with ``edges``
    node_flow: np.ndarray                 # cumulative F_n(D)
    samples: list[Mapping[int, int]]      # samples actually used
    loglik: np.ndarray                    # log p_root(x) per used sample
    skipped: int = 0
    sample_edge_flow: np.ndarray | None = None  # samples x edges
    sample_node_flow: np.ndarray | None = None  # samples x nodes

    def flow_of(self, parent: int, idx: int) -> float:
        return float(self.edge_flow[self.edges.index((parent, idx))])


def _sum_edges(dag: Dag) -> list[tuple[int, int]]:
    return [(i, j) for i, n in enumerate(dag.nodes) if n.kind is Kind.SUM for j in range(len(n.children))]


def compute_flows(dag: Dag, dataset: Sequence[Mapping[int, int]], *, keep_samples: bool = True,
                  marginalize: bool = True) -> FlowStats:
    """One bottom-up (log-domain) evaluation and one top-down pass per sample."""
    if not dataset:
        raise EmptyDataset("flow computation needs at least one sample")
    rep = check_structure(dag)
    if not (rep.smooth and rep.decomposable):
        raise NotTractable(f"circuit is not smooth and decomposable: {rep.witnesses}")
    if len(dag.roots) != 1:
        raise PruneError("flow computation expects a single root")
    root = dag.roots[0]
    edges = _sum_edges(dag)
    eidx = {e: k for k, e in enumerate(edges)}
    n = len(dag.nodes)
    order = dag.topo_order[::-1]  # parents before children
    rows_e, rows_n, used, lls = [], [], [], []
    skipped = 0
    for x in dataset:
        lp = evaluate(dag, x, marginalize=marginalize, log_domain=True, keep_nodes=True).nodes
        if lp[root] == -math.inf:
            skipped += 1
            continue
        F = np.zeros(n)
        Fe = np.zeros(len(edges))
        F[root] = 1.0
        for i in order:
            node = dag.nodes[i]
            if F[i] == 0.0 or lp[i] == -math.inf:
                continue
            if node.kind is Kind.SUM:
                for j, (c, w) in enumerate(zip(node.children, node.weights)):
                    if w <= 0 or lp[c] == -math.inf:
                        continue
                    f = w * math.exp(lp[c] - lp[i]) * F[i]
                    Fe[eidx[(i, j)]] = f
                    F[c] += f
            elif node.kind is Kind.PRODUCT:
                for c in node.children:
                    F[c] += F[i]
        rows_e.append(Fe)
        rows_n.append(F)
        used.append(x)
        lls.append(lp[root])
    if not used:
        raise EmptyDataset(f"all {skipped} samples have zero probability")
    E = np.array(rows_e)
    N = np.array(rows_n)
    return FlowStats(edges, E.sum(axis=0), N.sum(axis=0), used, np.array(lls), skipped,
                     E if keep_samples else None, N if keep_samples else None)


@dataclass
class PruneReport:
    edges_removed: list
    bound_delta_loglik: float | None
    measured_delta_loglik: float
    size_before: dict
    size_after: dict
    sound_bound_delta_loglik: float | None = None
    skipped_samples: int = 0
    notes: list[str] = field(default_factory=list)
    node_map: dict[int, int] = field(default_factory=dict)

    def to_json(self) -> str:
        d = asdict(self)
        d["node_map"] = {str(k): v for k, v in self.node_map.items()}
        return json.dumps(d, sort_keys=True, indent=1) + "\n"


def _size(dag: Dag) -> dict:
    return {"nodes": len(dag.nodes), "edges": dag.edge_count()}


def _drop_orphans(dag: Dag, nodes: list[DagNode]) -> tuple[Dag, dict[int, int]]:
    live: set[int] = set()
    stack = list(dag.roots)
    while stack:
        i = stack.pop()
        if i in live:
            continue
        live.add(i)
        stack.extend(nodes[i].children)
    node_map = {}
    for i in range(len(nodes)):
        if i in live:
            node_map[i] = len(node_map)
    out = []
    for i, nd in enumerate(nodes):
        if i in live:
            out.append(DagNode(nd.kind, tuple(node_map[c] for c in nd.children), nd.weights,
                               nd.payload, nd.scope))
    labels = {node_map[i]: t for i, t in dag.labels.items() if i in node_map}
    return Dag(compute_scopes(out), tuple(node_map[r] for r in dag.roots), dag.kernel_kind, labels), node_map


def select_edges(dag: Dag, stats: FlowStats, budget: int | None = None,
                 threshold: float | None = None) -> tuple[list[int], list[str]]:
    """Indices into ``stats.edges`` to remove, lowest cumulative flow first.

    Ties break by (parent id, child index).  The last surviving edge of a Sum
    node is never selected.
    """
    if (budget is None) == (threshold is None):
        raise ValueError("give exactly one of budget or threshold")
    order = sorted(range(len(stats.edges)), key=lambda k: (stats.edge_flow[k], stats.edges[k]))
    remaining = {i: len(n.children) for i, n in enumerate(dag.nodes) if n.kind is Kind.SUM}
    chosen, notes = [], []
    for k in order:
        if budget is not None and len(chosen) >= budget:
            break
        if threshold is not None and stats.edge_flow[k] >= threshold:
            break
        parent = stats.edges[k][0]
        if remaining[parent] == 1:
            notes.append(f"kept last edge of sum node {parent}")
            continue
        remaining[parent] -= 1
        chosen.append(k)
    if budget is not None and len(chosen) < budget:
        raise BudgetTooLarge(f"only {len(chosen)} of {budget} edges can be removed without emptying a sum node")
    return chosen, notes


def average_loglik(dag: Dag, samples: Sequence[Mapping[int, int]], marginalize: bool = True) -> float:
    return float(np.mean([evaluate(dag, x, marginalize=marginalize, log_domain=True).value for x in samples]))


def prune_low_flow(dag: Dag, stats: FlowStats, budget: int | None = None,
                   threshold: float | None = None) -> tuple[Dag, PruneReport]:
    """Remove low-flow Sum edges without renormalizing the remaining weights.

    ``bound_delta_loglik`` is the first-order certificate sum(F_e(D))/|D|.
    ``sound_bound_delta_loglik`` is mean_x -log(1 - sum_e F_e(x)), which holds
    exactly because the removed mass at sample x is at most sum_e F_e(x)
    times p(x).
    """
    chosen, notes = select_edges(dag, stats, budget, threshold)
    nD = len(stats.samples)
    drop: dict[int, set[int]] = {}
    removed = []
    for k in chosen:
        p, j = stats.edges[k]
        drop.setdefault(p, set()).add(j)
        removed.append([p, j, dag.nodes[p].children[j], float(stats.edge_flow[k])])
    if not chosen:
        return dag, PruneReport([], 0.0, 0.0, _size(dag), _size(dag), 0.0, stats.skipped, notes,
                                {i: i for i in range(len(dag.nodes))})
    nodes = list(dag.nodes)
    for p, js in drop.items():
        nd = nodes[p]
        keep = [j for j in range(len(nd.children)) if j not in js]
        nodes[p] = DagNode(nd.kind, tuple(nd.children[j] for j in keep),
                           tuple(nd.weights[j] for j in keep), nd.payload, nd.scope)
    pruned, node_map = _drop_orphans(dag, nodes)

    bound = float(stats.edge_flow[chosen].sum()) / nD
    sound = None
    if stats.sample_edge_flow is not None:
        lost = np.minimum(stats.sample_edge_flow[:, chosen].sum(axis=1), 1.0)
        with np.errstate(divide="ignore"):
            sound = float(np.mean(-np.log1p(-lost)))
    after = np.array([evaluate(pruned, x, marginalize=True, log_domain=True).value for x in stats.samples])
    measured = float(np.mean(stats.loglik - after))
    return pruned, PruneReport(removed, bound, measured, _size(dag), _size(pruned), sound,
                               stats.skipped, notes, node_map)


def budget_from_fraction(dag: Dag, fraction: float) -> int:
    """Edge budget as a fraction of the prunable (Sum) edges."""
    return int(math.floor(fraction * len(_sum_edges(dag))))


# ---------------------------------------------------------------------------
# HMMs


@dataclass
class Posteriors:
    gamma: np.ndarray  # T x K
    xi: np.ndarray     # (T-1) x K x K
    loglik: float


def forward_backward(hmm: HmmSpec, obs: Sequence[int] | None = None) -> Posteriors:
    """Scaled forward-backward; each step is normalized to avoid underflow."""
    from .oracles import ZeroLikelihoodSequence

    obs = list(hmm.obs if obs is None else obs)
    T = len(obs)
    if T == 0:
        raise ValueError("empty observation sequence")
    pi, A, B = np.asarray(hmm.pi), np.asarray(hmm.A), np.asarray(hmm.B)
    K = hmm.K
    alpha = np.zeros((T, K))
    c = np.zeros(T)
    a = pi * B[:, obs[0]]
    for t in range(T):
        if t:
            a = (alpha[t - 1] @ A) * B[:, obs[t]]
        c[t] = a.sum()
        if c[t] <= 0:
            raise ZeroLikelihoodSequence(f"zero likelihood at step {t}")
        alpha[t] = a / c[t]
    beta = np.ones((T, K))
    for t in range(T - 2, -1, -1):
        beta[t] = A @ (B[:, obs[t + 1]] * beta[t + 1]) / c[t + 1]
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    xi = np.zeros((max(T - 1, 0), K, K))
    for t in range(T - 1):
        m = alpha[t][:, None] * A * (B[:, obs[t + 1]] * beta[t + 1])[None, :]
        xi[t] = m / m.sum()
    return Posteriors(gamma, xi, float(np.log(c).sum()))


def expected_usage(hmm: HmmSpec, dataset: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Dataset-averaged transition and emission usage.

    Per sequence, transition usage is sum_t xi[t] / (T - 1) and emission usage
    is sum_t gamma[t, k] [x_t = v] / T; both are then averaged over sequences.
    """
    UA = np.zeros((hmm.K, hmm.K))
    UB = np.zeros((hmm.K, hmm.V))
    n_trans = 0
    for obs in dataset:
        post = forward_backward(hmm, obs)
        T = len(obs)
        if T > 1:
            UA += post.xi.sum(axis=0) / (T - 1)
            n_trans += 1
        onehot = np.zeros((T, hmm.V))
        onehot[np.arange(T), obs] = 1.0
        UB += post.gamma.T @ onehot / T
    return UA / max(n_trans, 1), UB / len(dataset)


def _prune_rows(M: np.ndarray, U: np.ndarray, eps: float, name: str, removed: list, notes: list) -> np.ndarray:
    M = M.copy()
    for r in range(M.shape[0]):
        mask = (U[r] < eps) & (M[r] > 0)
        if not mask.any():
            continue
        if not (M[r][~mask] > 0).any():
            notes.append(f"{name} row {r} left intact: pruning would zero it")
            continue
        for c in np.flatnonzero(mask):
            removed.append([name, r, int(c), float(U[r, c])])
        M[r, mask] = 0.0
        M[r] /= M[r].sum()
    return M


def hmm_posterior_prune(hmm: HmmSpec, dataset: Sequence[Sequence[int]], eps: float) -> tuple[HmmSpec, PruneReport]:
    if not dataset:
        raise EmptyDataset("posterior pruning needs at least one sequence")
    A, B = np.asarray(hmm.A), np.asarray(hmm.B)
    UA, UB = expected_usage(hmm, dataset)
    removed: list = []
    notes: list[str] = []
    A2 = _prune_rows(A, UA, eps, "A", removed, notes)
    B2 = _prune_rows(B, UB, eps, "B", removed, notes)
    out = HmmSpec(hmm.K, hmm.V, list(hmm.pi), A2.tolist(), B2.tolist(), list(hmm.obs))

    def ll(h):
        tot = 0.0
        for obs in dataset:
            try:
                tot += forward_backward(h, obs).loglik
            except Exception:
                return -math.inf
        return tot / len(dataset)

    before = ll(hmm)
    after = ll(out) if removed else before
    size = lambda a, b: {"nodes": hmm.K, "edges": int((a > 0).sum() + (b > 0).sum())}
    return out, PruneReport(removed, None, before - after, size(A, B), size(A2, B2), None, 0, notes)
