"""Event-driven model of CDCL on the tree fabric.

Timing model (all latencies from MachineConfig):

* The controller owns one broadcast channel.  Sending a literal occupies it
  for D * broadcast_latency_per_level cycles; the literal reaches the leaves
  when the channel frees.
* Watch lists are partitioned over the 2^D leaves by literal id.  When literal
  L is assigned, the leaf owning the list of the now-false literal -L walks
  it: one head lookup, then one clause fetch per hop (sram_hit_latency when the
  clause lies below sram_words, otherwise a DMA of dma_latency on the single
  DMA engine).  Each leaf walks one list at a time.
* Implications climb the reduction tree in D * reduction_latency_per_level
  cycles and leave its root at most one per cycle.  The controller assigns
  them on arrival, broadcasts at once if the channel is idle and the FIFO
  empty, and otherwise queues them in the BCP FIFO.
* Conflicts climb with priority.  On arrival the controller halts the DMA,
  flushes the FIFO, discards everything in flight, and hands the conflict to
  the scalar PE (first-UIP learning, scalar_op_latency per resolution step),
  then backjumps and asserts the learned literal.
* Decisions are taken only when the fabric is quiescent.
"""
from __future__ import annotations

import heapq
import itertools
from collections import deque
from typing import Callable

from ..config import MachineConfig
from ..logic import NIL, CnfFormula, WatchIndex, build_watch_index, lit_id
from .report import CycleReport, ResourceExhausted, SatResult, SimError, Trace


class StaticOrder:
    """Highest occurrence count first, positive polarity."""

    def __init__(self, cnf: CnfFormula):
        counts: dict[int, int] = {}
        for c in cnf.clauses:
            for l in c:
                counts[abs(l)] = counts.get(abs(l), 0) + 1
        self.order = sorted(counts, key=lambda v: (-counts[v], v))

    def pick(self, assign: dict[int, bool]) -> int | None:
        for v in self.order:
            if v not in assign:
                return v
        return None

    def on_learn(self, lits):
        pass


class Vsids(StaticOrder):
    def __init__(self, cnf: CnfFormula, decay: float = 0.95):
        super().__init__(cnf)
        self.act = {v: 0.0 for v in self.order}
        self.inc = 1.0
        self.decay = decay

    def pick(self, assign):
        best = None
        for v in self.order:
            if v not in assign and (best is None or self.act[v] > self.act[best]):
                best = v
        return best

    def on_learn(self, lits):
        for l in lits:
            self.act[abs(l)] = self.act.get(abs(l), 0.0) + self.inc
        self.inc /= self.decay
        if self.inc > 1e100:
            self.act = {v: a * 1e-100 for v, a in self.act.items()}
            self.inc *= 1e-100


HEURISTICS: dict[str, Callable] = {"static": StaticOrder, "vsids": Vsids}


class _Machine:
    def __init__(self, cnf: CnfFormula, cfg: MachineConfig, heuristic: str, trace: bool,
                 max_conflicts: int | None):
        self.cnf = cnf
        self.cfg = cfg
        self.D = cfg.tree_depth
        self.nleaves = cfg.leaves_per_pe
        self.bl = self.D * cfg.broadcast_latency_per_level
        self.rl = self.D * cfg.reduction_latency_per_level
        self.tr = Trace(trace)
        self.heur = HEURISTICS[heuristic](cnf)
        self.max_conflicts = max_conflicts
        self.wi: WatchIndex = build_watch_index(cnf)
        self.n_orig = len(cnf.clauses)
        self.learned_words = 0
        self.assign: dict[int, bool] = {}
        self.level: dict[int, int] = {}
        self.reason: dict[int, int | None] = {}
        self.trail: list[int] = []
        self.dl = 0
        self.epoch = 0
        self.heap: list = []
        self.seq = itertools.count()
        self.ids = itertools.count()
        self.fifo: deque = deque()       # (id, lit)
        self.backlog: deque = deque()    # (id, lit, arrival) waiting for FIFO space
        self.inflight: dict[int, int] = {}  # id -> lit, climbing the reduction tree
        self.chan_free = 0
        self.root_next = 0
        self.leaf_free = [True] * self.nleaves
        self.leaf_queue = [deque() for _ in range(self.nleaves)]
        self.dma_free = 0
        self.dma_jobs: deque = deque()  # (clause, start, done), served in order
        self.now = 0
        self.stats = dict(decisions=0, propagations=0, conflicts=0, learned=0, deleted=0)
        self.busy = dict(leaf=0, scalar_pe=0, dma=0, broadcast=0)
        self.stalls = dict(raw=0, bank_conflict=0, fifo_full=0, sram_miss=0)
        self.fifo_hist: dict[int, int] = {}
        self._occ_since = 0
        self.verdict: str | None = None

    # -- helpers ------------------------------------------------------------
    def value(self, lit: int):
        v = self.assign.get(abs(lit))
        if v is None:
            return None
        return v if lit > 0 else not v

    def push(self, t: int, kind: str, *data):
        heapq.heappush(self.heap, (t, next(self.seq), kind, self.epoch, data))

    def emit(self, t, unit, ev, **kv):
        self.tr.emit(t, unit, ev, **kv)

    def _occ_change(self, t: int):
        occ = len(self.fifo)
        self.fifo_hist[occ] = self.fifo_hist.get(occ, 0) + (t - self._occ_since)
        self._occ_since = t

    def do_assign(self, lit: int, reason: int | None, t: int, iid=None):
        v = abs(lit)
        self.assign[v] = lit > 0
        self.level[v] = self.dl
        self.reason[v] = reason
        self.trail.append(lit)
        self.emit(t, "ctrl", "assign", lit=lit, level=self.dl, **({"id": iid} if iid is not None else {}))

    def broadcast(self, lit: int, t: int):
        self.chan_free = t + self.bl
        self.busy["broadcast"] += self.bl
        self.emit(t, "bcast", "send", lit=lit)
        self.push(self.chan_free, "arrive", lit)
        self.push(self.chan_free, "chan_free")

    def offer(self, iid: int, lit: int, t: int):
        """An assigned literal that must be propagated."""
        if not self.fifo and not self.backlog and self.chan_free <= t:
            self.broadcast(lit, t)
        elif len(self.fifo) < self.cfg.fifo_depth:
            self._occ_change(t)
            self.fifo.append((iid, lit))
            self.emit(t, "fifo", "push", id=iid, lit=lit, occ=len(self.fifo))
        else:
            self.backlog.append((iid, lit, t))
            self.emit(t, "fifo", "full", id=iid)

    def pump(self, t: int):
        if self.chan_free <= t and self.fifo:
            self._occ_change(t)
            iid, lit = self.fifo.popleft()
            self.emit(t, "fifo", "pop", id=iid, lit=lit, occ=len(self.fifo))
            self.broadcast(lit, t)
            if self.backlog:
                bid, blit, arr = self.backlog.popleft()
                self.stalls["fifo_full"] += t - arr
                self._occ_change(t)
                self.fifo.append((bid, blit))
                self.emit(t, "fifo", "push", id=bid, lit=blit, occ=len(self.fifo))

    # -- leaves ---------------------------------------------------------------
    def leaf_of(self, false_lit: int) -> int:
        return lit_id(false_lit) % self.nleaves

    def leaf_arrive(self, t: int, lit: int):
        f = -lit
        leaf = self.leaf_of(f)
        self.emit(t, "bcast", "arrive", lit=lit, leaf=leaf)
        if self.leaf_free[leaf]:
            self.start_job(t, leaf, f)
        else:
            self.leaf_queue[leaf].append(f)

    def start_job(self, t: int, leaf: int, f: int):
        self.leaf_free[leaf] = False
        self.emit(t, f"leaf{leaf}", "lookup", lit=f)
        lat = self.cfg.sram_hit_latency
        self.busy["leaf"] += lat
        self.push(t + lat, "step", leaf, f, self.wi.head[lit_id(f)], NIL)

    def finish_job(self, t: int, leaf: int):
        if self.leaf_queue[leaf]:
            self.start_job(t, leaf, self.leaf_queue[leaf].popleft())
        else:
            self.leaf_free[leaf] = True

    def step(self, t: int, leaf: int, f: int, k: int, prev: int):
        if k == NIL:
            self.finish_job(t, leaf)
            return
        wi = self.wi
        addr = wi.base[k]
        if addr + wi.words(k) <= self.cfg.sram_words:
            lat = self.cfg.sram_hit_latency
            self.emit(t, f"leaf{leaf}", "fetch", clause=k, addr=addr, src="sram")
            self.busy["leaf"] += lat
            self.push(t + lat, "eval", leaf, f, k, prev)
        else:
            start = max(t, self.dma_free)
            done = start + self.cfg.dma_latency
            self.dma_free = done
            self.dma_jobs.append((k, start, done))
            self.stalls["sram_miss"] += done - t
            self.busy["leaf"] += done - t
            self.emit(t, f"leaf{leaf}", "fetch", clause=k, addr=addr, src="dma")
            self.emit(start, "dma", "start", clause=k, until=done)
            self.push(done, "dma_done", leaf, f, k, prev)

    def evaluate(self, t: int, leaf: int, f: int, k: int, prev: int):
        wi = self.wi
        lits = wi.lits[k]
        h = lit_id(f)
        slot = wi.slot_of(k, h)
        nxt = wi.next[k][slot]
        falses = sum(1 for l in lits if self.value(l) is False)
        if len(lits) == 1:
            if self.value(lits[0]) is False:
                self.leaf_conflict(t, leaf, k)
                return
            self.push(t, "step", leaf, f, nxt, k)
            return
        other = lits[1 - slot]
        if self.value(other) is True:
            self.push(t, "step", leaf, f, nxt, k)
            return
        for j in range(2, len(lits)):
            if self.value(lits[j]) is not False:
                wi.move_watch(k, slot, prev, j)
                self.emit(t, f"leaf{leaf}", "rewatch", clause=k, lit=lits[slot])
                self.push(t, "step", leaf, f, nxt, prev)
                return
        if self.value(other) is None:
            iid = next(self.ids)
            self.stats["propagations"] += 1
            self.emit(t, f"leaf{leaf}", "imply", id=iid, lit=other, clause=k, falses=falses)
            arr = max(t + self.rl, self.root_next)
            self.root_next = arr + 1
            self.inflight[iid] = other
            self.push(arr, "impl", iid, other, k)
            self.push(t, "step", leaf, f, nxt, k)
        else:
            self.leaf_conflict(t, leaf, k)

    def leaf_conflict(self, t: int, leaf: int, k: int):
        self.emit(t, f"leaf{leaf}", "conflict", clause=k)
        self.push(t + self.rl, "conflict", k)
        # the leaf freezes; the controller will cancel everything on arrival

    # -- controller -------------------------------------------------------------
    def impl_arrive(self, t: int, iid: int, lit: int, k: int):
        self.inflight.pop(iid, None)
        self.emit(t, "reduce", "arrive", id=iid, lit=lit)
        val = self.value(lit)
        if val is True:
            self.emit(t, "ctrl", "drop", id=iid)
            return
        if val is False:
            self.handle_conflict(t, k)
            return
        self.do_assign(lit, k, t, iid)
        self.offer(iid, lit, t)

    def handle_conflict(self, t: int, k: int):
        self.stats["conflicts"] += 1
        self.emit(t, "ctrl", "conflict", clause=k)
        for ck, start, done in self.dma_jobs:
            # the fetch in flight is cut short; queued ones never start
            self.emit(t, "dma", "halt", clause=ck)
            self.busy["dma"] += max(0, t - start)
            self.busy["leaf"] -= done - t
            self.stalls["sram_miss"] -= done - t
        if self.dma_jobs:
            self.dma_free = t
            self.dma_jobs.clear()
        flushed = [iid for iid, _ in self.fifo] + [iid for iid, _, _ in self.backlog]
        self._occ_change(t)
        self.fifo.clear()
        self.backlog.clear()
        self.emit(t, "fifo", "flush", ids=flushed)
        discarded = sorted(flushed + list(self.inflight))
        if discarded:
            self.emit(t, "ctrl", "discard", ids=discarded)
        self.inflight.clear()
        self.epoch += 1
        self.heap = [e for e in self.heap if e[3] == self.epoch]
        heapq.heapify(self.heap)
        self.leaf_free = [True] * self.nleaves
        self.leaf_queue = [deque() for _ in range(self.nleaves)]
        self.chan_free = min(self.chan_free, t)
        self.root_next = t

        learnt, bj, steps = self.analyze(k)
        lat = self.cfg.scalar_op_latency * max(1, steps)
        self.busy["scalar_pe"] += lat
        done = t + lat
        if learnt is None:
            self.emit(done, "scalar", "analyze", steps=steps, result="unsat")
            self.verdict = "UNSAT"
            self.now = done
            return
        self.emit(done, "scalar", "analyze", steps=steps, learned=learnt, backjump=bj)
        self.backjump(bj, done)
        kk = self.learn(learnt)
        self.heur.on_learn(learnt)
        iid = next(self.ids)
        self.do_assign(learnt[0], kk, done, iid)
        self.offer(iid, learnt[0], done)
        self.now = done
        if self.max_conflicts is not None and self.stats["conflicts"] >= self.max_conflicts:
            raise ResourceExhausted(f"conflict limit {self.max_conflicts} reached")

    def analyze(self, k: int):
        """First-UIP learning.  Returns (clause, backjump level, steps) or
        (None, 0, steps) for a level-0 conflict."""
        lits = self.wi.lits[k]
        cur = max((self.level[abs(l)] for l in lits), default=0)
        if cur == 0:
            return None, 0, 1
        seen: set[int] = set()
        out: list[int] = []
        counter = 0
        p = None
        idx = len(self.trail) - 1
        clause = lits
        steps = 0
        while True:
            steps += 1
            for q in clause:
                v = abs(q)
                if p is not None and v == abs(p):
                    continue
                if v in seen or self.level[v] == 0:
                    continue
                seen.add(v)
                if self.level[v] >= cur:
                    counter += 1
                else:
                    out.append(q)
            while abs(self.trail[idx]) not in seen:
                idx -= 1
            p = self.trail[idx]
            idx -= 1
            counter -= 1
            if counter == 0:
                break
            clause = self.wi.lits[self.reason[abs(p)]]
        learnt = [-p] + out
        if len(learnt) > 1:
            j = max(range(1, len(learnt)), key=lambda i: (self.level[abs(learnt[i])], -i))
            learnt[1], learnt[j] = learnt[j], learnt[1]
            bj = self.level[abs(learnt[1])]
        else:
            bj = 0
        return learnt, bj, steps

    def backjump(self, level: int, t: int):
        while self.trail and self.level[abs(self.trail[-1])] > level:
            lit = self.trail.pop()
            v = abs(lit)
            del self.assign[v], self.level[v], self.reason[v]
        self.dl = level
        self.emit(t, "ctrl", "backjump", level=level)

    def locked(self, k: int) -> bool:
        lits = self.wi.lits[k]
        return any(self.reason.get(abs(l)) == k for l in lits)

    def learn(self, lits: list[int]) -> int:
        wi = self.wi
        k = wi.add_clause(lits, link=True)
        self.stats["learned"] += 1
        self.learned_words += wi.words(k)
        if self.learned_words > self.cfg.sram_words:
            cands = [j for j in range(self.n_orig, len(wi.lits))
                     if wi.alive[j] and j != k and not self.locked(j)]
            cands.sort(key=lambda j: (-len(wi.lits[j]), j))
            for j in cands:
                if self.learned_words <= self.cfg.sram_words:
                    break
                wi.remove_clause(j)
                self.learned_words -= wi.words(j)
                self.stats["deleted"] += 1
            if self.learned_words > self.cfg.sram_words:
                raise ResourceExhausted("learned clauses exceed sram_words and none can be deleted")
        return k

    def decide(self, t: int) -> bool:
        v = self.heur.pick(self.assign)
        if v is None:
            return False
        self.dl += 1
        self.stats["decisions"] += 1
        self.emit(t, "ctrl", "decide", lit=v, level=self.dl)
        self.do_assign(v, None, t)
        self.offer(next(self.ids), v, t)
        return True

    # -- main loop ------------------------------------------------------------
    def run(self) -> SatResult:
        t = 0
        if any(len(c) == 0 for c in self.cnf.clauses):
            self.verdict = "UNSAT"
        else:
            for k, c in enumerate(self.cnf.clauses):
                if len(c) == 1:
                    val = self.value(c[0])
                    if val is False:
                        self.emit(0, "ctrl", "conflict", clause=k)
                        self.verdict = "UNSAT"
                        break
                    if val is None:
                        iid = next(self.ids)
                        self.do_assign(c[0], k, 0, iid)
                        self.offer(iid, c[0], 0)
        while self.verdict is None:
            if not self.heap:
                t = max(t, self.chan_free, self.now)
                if self.fifo:
                    self.pump(t)
                    continue
                if not self.decide(t):
                    self.verdict = "SAT"
                    break
                continue
            te, _, kind, ep, data = heapq.heappop(self.heap)
            if ep != self.epoch:
                continue
            t = max(t, te)
            if kind == "chan_free":
                self.pump(t)
            elif kind == "arrive":
                self.leaf_arrive(t, *data)
            elif kind == "step":
                self.step(t, *data)
            elif kind == "eval":
                self.evaluate(t, *data)
            elif kind == "dma_done":
                leaf, f, k, prev = data
                _, start, done = self.dma_jobs.popleft()
                self.busy["dma"] += done - start
                self.emit(t, "dma", "done", clause=k)
                self.evaluate(t, leaf, f, k, prev)
            elif kind == "impl":
                self.impl_arrive(t, *data)
            elif kind == "conflict":
                self.handle_conflict(t, *data)
            else:
                raise SimError(f"unknown event {kind}")
        self.now = max(t, self.now)
        self._occ_change(self.now)
        self.emit(self.now, "ctrl", "result", verdict=self.verdict)
        model = None
        if self.verdict == "SAT":
            model = {v: self.assign.get(v, True) for v in range(1, self.cnf.num_vars + 1)}
            if not self.cnf.satisfied_by(model):
                raise SimError("returned model violates a clause")
        return SatResult(self.verdict, model, self.stats["learned"], self.stats["decisions"],
                         self.stats["propagations"], self.stats["conflicts"])

    def report(self) -> CycleReport:
        total = max(self.now, 1)
        units = dict(self.busy)
        cap = {"leaf": total * self.nleaves}
        util = {u: b / cap.get(u, total) for u, b in units.items()}
        return CycleReport(
            total_cycles=total, busy=units, utilization=util, stalls=dict(self.stalls),
            hazards={"raw": 0, "bank_conflict": 0}, fifo_histogram=dict(sorted(self.fifo_hist.items())),
            config=self.cfg.to_dict(),
            extra={"capacity": cap, "learned_deleted": self.stats["deleted"],
                   "broadcast_latency": self.bl, "reduction_latency": self.rl},
            trace=self.tr.lines(),
        )


def run_symbolic_sat(cnf: CnfFormula, cfg: MachineConfig | None = None, heuristic: str = "static", *,
                     trace: bool = False, max_conflicts: int | None = None) -> tuple[SatResult, CycleReport]:
    m = _Machine(cnf, cfg or MachineConfig(), heuristic, trace, max_conflicts)
    res = m.run()
    return res, m.report()


def cube_split_vars(cnf: CnfFormula, k: int) -> list[int]:
    return StaticOrder(cnf).order[:k]


def run_cube_and_conquer(cnf: CnfFormula, cfg: MachineConfig | None = None, k: int = 0,
                         heuristic: str = "static") -> tuple[SatResult, list[CycleReport]]:
    """Split on the top-k variables; each cube is solved as a fresh run with
    the cube literals added as unit clauses."""
    if k <= 0:
        res, rep = run_symbolic_sat(cnf, cfg, heuristic)
        return res, [rep]
    vs = cube_split_vars(cnf, k)
    reports = []
    agg = SatResult("UNSAT")
    for signs in itertools.product((True, False), repeat=len(vs)):
        cube = [[v if s else -v] for v, s in zip(vs, signs)]
        sub = CnfFormula(cnf.num_vars, [list(c) for c in cnf.clauses] + cube)
        res, rep = run_symbolic_sat(sub, cfg, heuristic)
        reports.append(rep)
        agg.learned += res.learned
        agg.decisions += res.decisions
        agg.propagations += res.propagations
        agg.conflicts += res.conflicts
        if res.sat:
            agg.verdict, agg.model = "SAT", res.model
            break
    return agg, reports


def overlap_scenario(depth: int = 3) -> tuple[CnfFormula, MachineConfig]:
    """Small instance that exercises FIFO queueing, a DMA miss overlapped by
    broadcasts, and a conflict that flushes a pending implication.

    Deciding x1 implies x2, x12, x99, x4, x5 and -x3.  The clause watched by
    -x12 sits just past the on-chip limit, and (-x99 | x3) conflicts while -x3
    is still queued.
    """
    clauses = [[-1, 2], [-1, 12], [-1, 99], [-1, 4], [-1, 5], [-1, -3], [-99, 3], [-12, 50, 51]]
    cnf = CnfFormula(99, clauses)
    wi = build_watch_index(cnf)
    cfg = MachineConfig(tree_depth=depth, sram_words=wi.base[len(clauses) - 1])
    return cnf, cfg
