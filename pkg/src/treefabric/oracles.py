"""Reference implementations used to check the toolchain.

Everything here is written directly from the model equations and deliberately
avoids the code paths in ``dag``, ``pruner`` and ``sim``: recursive circuit
evaluation on the parsed spec, textbook HMM recursions, a plain DPLL solver,
bit-parallel truth tables and triple-loop matrix products.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .logic import CnfFormula
from .prob import HmmSpec, PcSpec


class OracleError(Exception):
    pass


class NotDecomposable(OracleError):
    pass


class ZeroLikelihoodSequence(OracleError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class OracleVerdict:
    agree: bool
    max_rel_err: float
    first_divergence: str = ""


def compare(got: Sequence[float], want: Sequence[float], tol: float) -> OracleVerdict:
    worst, first = 0.0, ""
    if len(got) != len(want):
        return OracleVerdict(False, math.inf, f"length {len(got)} != {len(want)}")
    for i, (g, w) in enumerate(zip(got, want)):
        if g == w:
            continue
        err = abs(g - w) / max(abs(w), 1e-300)
        if err > worst:
            worst = err
        if err > tol and not first:
            first = f"index {i}: got {g!r}, want {w!r}"
    return OracleVerdict(worst <= tol, worst, first)


# ---------------------------------------------------------------------------
# probabilistic circuits


def _pc_scopes(spec: PcSpec) -> dict[int, frozenset]:
    scopes: dict[int, frozenset] = {}
    for n in spec.nodes:
        if n.type == "leaf":
            scopes[n.id] = frozenset([n.var])
        else:
            scopes[n.id] = frozenset().union(*(scopes[c] for c in n.children))
    return scopes


def pc_is_tractable(spec: PcSpec) -> bool:
    scopes = _pc_scopes(spec)
    for n in spec.nodes:
        if n.type == "sum" and len({scopes[c] for c in n.children}) > 1:
            return False
        if n.type == "product":
            seen: set = set()
            for c in n.children:
                if seen & scopes[c]:
                    return False
                seen |= scopes[c]
    return True


def exact_pc_eval(spec: PcSpec, evidence: Mapping[int, int]) -> float:
    """p(evidence); variables absent from ``evidence`` are summed out."""
    missing = set(range(spec.num_vars)) - set(evidence)
    if missing and not pc_is_tractable(spec):
        raise NotDecomposable("marginal query on a circuit that is not smooth and decomposable")
    table = spec.by_id()

    @lru_cache(maxsize=None)
    def p(nid: int) -> float:
        n = table[nid]
        if n.type == "leaf":
            return n.table[evidence[n.var]] if n.var in evidence else 1.0
        if n.type == "product":
            out = 1.0
            for c in n.children:
                out *= p(c)
            return out
        return sum(w * p(c) for c, w in zip(n.children, n.weights))

    return p(spec.root)


def pc_conditional(spec: PcSpec, query: Mapping[int, int], evidence: Mapping[int, int]) -> float:
    denom = exact_pc_eval(spec, evidence)
    if denom == 0.0:
        raise ZeroDivisionError("evidence has zero probability")
    return exact_pc_eval(spec, {**evidence, **query}) / denom


def pc_domain_sizes(spec: PcSpec) -> list[int]:
    sizes = [1] * spec.num_vars
    for n in spec.nodes:
        if n.type == "leaf":
            sizes[n.var] = max(sizes[n.var], len(n.table))
    return sizes


def pc_marginal_by_enumeration(spec: PcSpec, evidence: Mapping[int, int]) -> float:
    """Explicit sum of full-assignment probabilities over the free variables."""
    sizes = pc_domain_sizes(spec)
    free = [v for v in range(spec.num_vars) if v not in evidence]
    total = 0.0
    for values in itertools.product(*(range(sizes[v]) for v in free)):
        full = dict(evidence)
        full.update(zip(free, values))
        total += exact_pc_eval(spec, full)
    return total


# ---------------------------------------------------------------------------
# HMMs


def hmm_forward(hmm: HmmSpec, obs: Sequence[int] | None = None) -> float:
    """log p(x_{1:T}) by the scaled forward recursion."""
    obs = hmm.obs if obs is None else obs
    K = hmm.K
    alpha = [hmm.pi[k] * hmm.B[k][obs[0]] for k in range(K)]
    loglik = 0.0
    for t in range(len(obs)):
        if t > 0:
            alpha = [sum(alpha[j] * hmm.A[j][k] for j in range(K)) * hmm.B[k][obs[t]] for k in range(K)]
        c = sum(alpha)
        if c <= 0.0:
            raise ZeroLikelihoodSequence(f"sequence has zero probability at step {t}")
        loglik += math.log(c)
        alpha = [a / c for a in alpha]
    return loglik


def hmm_viterbi(hmm: HmmSpec, obs: Sequence[int] | None = None) -> tuple[list[int], float]:
    obs = hmm.obs if obs is None else obs
    K, T = hmm.K, len(obs)

    def lg(x):
        return math.log(x) if x > 0 else -math.inf

    score = [lg(hmm.pi[k]) + lg(hmm.B[k][obs[0]]) for k in range(K)]
    back: list[list[int]] = []
    for t in range(1, T):
        prev = score
        ptr, score = [], []
        for k in range(K):
            best_j = max(range(K), key=lambda j: (prev[j] + lg(hmm.A[j][k]), -j))
            ptr.append(best_j)
            score.append(prev[best_j] + lg(hmm.A[best_j][k]) + lg(hmm.B[k][obs[t]]))
        back.append(ptr)
    last = max(range(K), key=lambda k: (score[k], -k))
    if score[last] == -math.inf:
        raise ZeroLikelihoodSequence("no path has positive probability")
    path = [last]
    for ptr in reversed(back):
        path.append(ptr[path[-1]])
    return path[::-1], score[last]


def hmm_path_probability(hmm: HmmSpec, path: Sequence[int], obs: Sequence[int]) -> float:
    p = hmm.pi[path[0]] * hmm.B[path[0]][obs[0]]
    for t in range(1, len(obs)):
        p *= hmm.A[path[t - 1]][path[t]] * hmm.B[path[t]][obs[t]]
    return p


def hmm_enumerate(hmm: HmmSpec, obs: Sequence[int] | None = None, max_paths: int = 4096):
    """Brute force over all K^T state paths.

    Returns ``(likelihood, gamma, xi, best_path)`` with posteriors as nested
    lists.
    """
    obs = hmm.obs if obs is None else obs
    K, T = hmm.K, len(obs)
    if K ** T > max_paths:
        raise OracleError(f"{K}^{T} paths exceeds cap {max_paths}")
    total = 0.0
    gamma = [[0.0] * K for _ in range(T)]
    xi = [[[0.0] * K for _ in range(K)] for _ in range(T - 1)]
    best, best_p = None, -1.0
    for path in itertools.product(range(K), repeat=T):
        p = hmm_path_probability(hmm, path, obs)
        total += p
        if p > best_p:
            best, best_p = list(path), p
        for t in range(T):
            gamma[t][path[t]] += p
        for t in range(T - 1):
            xi[t][path[t]][path[t + 1]] += p
    if total <= 0.0:
        raise ZeroLikelihoodSequence("all paths have zero probability")
    gamma = [[g / total for g in row] for row in gamma]
    xi = [[[x / total for x in row] for row in mat] for mat in xi]
    return total, gamma, xi, best


# ---------------------------------------------------------------------------
# SAT


@dataclass
class RefSatResult:
    sat: bool
    model: dict[int, bool] | None = None
    nodes: int = 0


def reference_sat(cnf: CnfFormula) -> RefSatResult:
    """Recursive DPLL with unit propagation and pure-literal elimination."""
    stats = {"nodes": 0}

    def simplify(clauses, lit):
        out = []
        for c in clauses:
            if lit in c:
                continue
            if -lit in c:
                c = tuple(x for x in c if x != -lit)
            out.append(c)
        return out

    def solve(clauses, assign):
        stats["nodes"] += 1
        while True:
            if any(len(c) == 0 for c in clauses):
                return None
            unit = next((c[0] for c in clauses if len(c) == 1), None)
            if unit is None:
                break
            assign = {**assign, abs(unit): unit > 0}
            clauses = simplify(clauses, unit)
        lits = {l for c in clauses for l in c}
        pure = [l for l in lits if -l not in lits]
        if pure:
            for l in sorted(pure):
                assign = {**assign, abs(l): l > 0}
                clauses = simplify(clauses, l)
        if not clauses:
            return assign
        shortest = min(len(c) for c in clauses)
        counts: dict[int, int] = {}
        for c in clauses:
            if len(c) == shortest:
                for l in c:
                    counts[abs(l)] = counts.get(abs(l), 0) + 1
        var = min(counts, key=lambda v: (-counts[v], v))
        for lit in (var, -var):
            res = solve(simplify(clauses, lit), {**assign, var: lit > 0})
            if res is not None:
                return res
        return None

    res = solve([tuple(c) for c in cnf.clauses], {})
    if res is None:
        return RefSatResult(False, None, stats["nodes"])
    model = {v: res.get(v, False) for v in range(1, cnf.num_vars + 1)}
    return RefSatResult(True, model, stats["nodes"])


_PATTERN_CACHE: dict[int, np.ndarray] = {}


def _var_patterns(n: int) -> np.ndarray:
    """Row v-1 is the packed truth column of variable v over all 2^n rows."""
    if n not in _PATTERN_CACHE:
        idx = np.arange(1 << n, dtype=np.uint32)
        rows = [np.packbits(((idx >> v) & 1).astype(bool)) for v in range(n)]
        _PATTERN_CACHE[n] = np.array(rows) if rows else np.zeros((0, 1), dtype=np.uint8)
    return _PATTERN_CACHE[n]


def exhaustive_models(cnf: CnfFormula, max_vars: int = 24) -> np.ndarray:
    """Boolean vector over all 2^V assignments (bit v-1 of the row index is
    variable v) marking the models."""
    n = cnf.num_vars
    if n > max_vars:
        raise OracleError(f"{n} variables exceeds exhaustive cap {max_vars}")
    if n == 0:
        return np.array([all(len(c) > 0 for c in cnf.clauses) and True], dtype=bool) \
            if cnf.clauses else np.array([True])
    pats = _var_patterns(n)
    acc = np.full(pats.shape[1], 0xFF, dtype=np.uint8)
    for c in cnf.clauses:
        cl = np.zeros_like(acc)
        for lit in c:
            row = pats[abs(lit) - 1]
            cl |= row if lit > 0 else ~row
        acc &= cl
    return np.unpackbits(acc)[: 1 << n].astype(bool)


def exhaustive_sat(cnf: CnfFormula, max_vars: int = 24) -> bool:
    return bool(exhaustive_models(cnf, max_vars).any())


# ---------------------------------------------------------------------------
# matrices


def _shape(M) -> tuple[int, int]:
    rows = len(M)
    cols = len(M[0]) if rows else 0
    return rows, cols


def dense_matmul(A, B) -> list[list[float]]:
    n, k = _shape(A)
    k2, m = _shape(B)
    if k != k2:
        raise DimensionMismatch(f"{n}x{k} @ {k2}x{m}")
    C = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += A[i][t] * B[t][j]
            C[i][j] = acc
    return C


def dense_matmul_kij(A, B) -> list[list[float]]:
    """Same product with the k loop outermost (different accumulation order)."""
    n, k = _shape(A)
    k2, m = _shape(B)
    if k != k2:
        raise DimensionMismatch(f"{n}x{k} @ {k2}x{m}")
    C = [[0.0] * m for _ in range(n)]
    for t in range(k):
        for i in range(n):
            a = A[i][t]
            if a == 0:
                continue
            row = C[i]
            for j in range(m):
                row[j] += a * B[t][j]
    return C


# ---------------------------------------------------------------------------
# two-stage pipeline


def two_stage_event_sim(neural: Sequence[float], symbolic: Sequence[float]) -> float:
    """Discrete-event simulation of a host stage feeding an accelerator stage,
    each serving one batch at a time in order."""
    if len(neural) != len(symbolic):
        raise ValueError("length mismatch")
    n = len(neural)
    if n == 0:
        return 0.0
    events: list[tuple[float, int, str, int]] = []
    seq = itertools.count()
    heapq.heappush(events, (neural[0], next(seq), "neural_done", 0))
    sym_busy = False
    waiting: list[int] = []
    end = 0.0
    while events:
        t, _, kind, b = heapq.heappop(events)
        if kind == "neural_done":
            if b + 1 < n:
                heapq.heappush(events, (t + neural[b + 1], next(seq), "neural_done", b + 1))
            waiting.append(b)
        else:
            sym_busy = False
            end = t
        if not sym_busy and waiting:
            nb = waiting.pop(0)
            sym_busy = True
            heapq.heappush(events, (t + symbolic[nb], next(seq), "sym_done", nb))
    return end
