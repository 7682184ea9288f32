"""Sparse x sparse matrix product on the tree: leaves multiply, internal
nodes add."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import MachineConfig
from .report import CycleReport, Trace


class DimensionMismatch(ValueError):
    pass


@dataclass
class SparseMatrix:
    """Row-compressed storage: ``rows[i]`` maps column -> value."""
    shape: tuple[int, int]
    rows: list[dict[int, float]] = field(default_factory=list)

    @classmethod
    def from_dense(cls, M) -> "SparseMatrix":
        M = np.asarray(M)
        if M.ndim != 2:
            raise DimensionMismatch(f"expected a 2-D matrix, got shape {M.shape}")
        rows = [{int(j): M[i, j].item() for j in np.flatnonzero(M[i])} for i in range(M.shape[0])]
        return cls((int(M.shape[0]), int(M.shape[1])), rows)

    @classmethod
    def from_coo(cls, shape, triples) -> "SparseMatrix":
        rows: list[dict] = [dict() for _ in range(shape[0])]
        for i, j, v in triples:
            if not (0 <= i < shape[0] and 0 <= j < shape[1]):
                raise DimensionMismatch(f"entry ({i},{j}) outside {shape}")
            if v != 0:
                rows[i][j] = rows[i].get(j, 0) + v
        return cls(tuple(shape), rows)

    @property
    def nnz(self) -> int:
        return sum(len(r) for r in self.rows)

    def columns(self) -> list[dict[int, float]]:
        cols: list[dict] = [dict() for _ in range(self.shape[1])]
        for i, r in enumerate(self.rows):
            for j, v in r.items():
                cols[j][i] = v
        return cols

    def to_dense(self) -> np.ndarray:
        vals = [v for r in self.rows for v in r.values()]
        dtype = np.int64 if all(isinstance(v, (int, np.integer)) for v in vals) else np.float64
        out = np.zeros(self.shape, dtype=dtype)
        for i, r in enumerate(self.rows):
            for j, v in r.items():
                out[i, j] = v
        return out


def _as_sparse(M) -> SparseMatrix:
    return M if isinstance(M, SparseMatrix) else SparseMatrix.from_dense(M)


def _tree_reduce(vals: list):
    """Pairwise adder tree over a padded leaf row."""
    while len(vals) > 1:
        vals = [vals[i] + vals[i + 1] for i in range(0, len(vals), 2)]
    return vals[0]


def run_spmspm(A, Bm, cfg: MachineConfig | None = None, *, trace: bool = False) -> tuple[SparseMatrix, CycleReport]:
    """Each output element gathers its matching (a_ik, b_kj) pairs and feeds
    them 2^D at a time to the leaf multipliers.  Independent issues go one per
    cycle; the last result leaves the tree D cycles after its issue, so the
    run takes issues + D cycles.  Partial sums of one element accumulate in
    issue order."""
    cfg = cfg or MachineConfig()
    A, Bm = _as_sparse(A), _as_sparse(Bm)
    if A.shape[1] != Bm.shape[0]:
        raise DimensionMismatch(f"{A.shape[0]}x{A.shape[1]} @ {Bm.shape[0]}x{Bm.shape[1]}")
    D = cfg.tree_depth
    width = cfg.leaves_per_pe
    tr = Trace(trace)
    cols = Bm.columns()
    out = SparseMatrix((A.shape[0], Bm.shape[1]), [dict() for _ in range(A.shape[0])])
    cycle = 0
    mults = adds = 0
    for i, row in enumerate(A.rows):
        if not row:
            continue
        for j, col in enumerate(cols):
            ks = sorted(row.keys() & col.keys())
            if not ks:
                continue
            acc = None
            for s in range(0, len(ks), width):
                chunk = ks[s:s + width]
                prods = [row[k] * col[k] for k in chunk]
                mults += len(chunk)
                adds += len(chunk) - 1
                part = _tree_reduce(prods + [0] * (width - len(prods)))
                tr.emit(cycle, "pe0", "issue", row=i, col=j, pairs=len(chunk))
                tr.emit(cycle + D, "pe0", "result", row=i, col=j)
                acc = part if acc is None else acc + part
                cycle += 1
            if acc != 0:
                out.rows[i][j] = acc
    issues = cycle
    total = issues + D if issues else 0
    nodes = cfg.nodes_per_pe
    cap = max(total, 1)
    report = CycleReport(
        total_cycles=total,
        busy={"leaf": mults, "internal": adds},
        utilization={"leaf": mults / (width * cap), "internal": adds / ((nodes - width) * cap)},
        stalls={"raw": 0, "bank_conflict": 0, "fifo_full": 0, "sram_miss": 0},
        hazards={"raw": 0, "bank_conflict": 0},
        config=cfg.to_dict(),
        extra={"issues": issues, "capacity": {"leaf": width * cap, "internal": (nodes - width) * cap}},
        trace=tr.lines(),
    )
    return out, report
