"""Host-side view: the two-level pipeline and the flag-buffer handshake."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

from ..config import MachineConfig
from ..dag import Dag, leaf_inputs
from ..logic import CnfFormula
from .report import CycleReport


class LengthMismatch(ValueError):
    pass


class BusySlot(RuntimeError):
    pass


@dataclass
class BatchTimes:
    batch: int
    neural_start: float
    neural_end: float
    symbolic_start: float
    symbolic_end: float


@dataclass
class PipelineResult:
    makespan: float
    timeline: list[BatchTimes]


def pipeline_two_level(neural: Sequence[float], symbolic: Sequence[float]) -> PipelineResult:
    """Host runs neural stages back to back; the accelerator starts batch i
    once its neural stage is done and batch i-1 has left the accelerator."""
    if len(neural) != len(symbolic):
        raise LengthMismatch(f"{len(neural)} neural vs {len(symbolic)} symbolic latencies")
    if any(x < 0 for x in list(neural) + list(symbolic)):
        raise ValueError("latencies must be non-negative")
    timeline = []
    end_n = end_s = 0
    for i, (n, s) in enumerate(zip(neural, symbolic)):
        start_n = end_n
        end_n = start_n + n
        start_s = max(end_n, end_s)
        end_s = start_s + s
        timeline.append(BatchTimes(i, start_n, end_n, start_s, end_s))
    return PipelineResult(end_s, timeline)


class SlotStatus(str, Enum):
    IDLE = "IDLE"
    EXECUTION = "EXECUTION"


@dataclass
class Slot:
    status: SlotStatus = SlotStatus.IDLE
    neural_ready: bool = False
    symbolic_ready: bool = False
    done_at: int = 0
    result: Any = None
    report: CycleReport | None = None
    pending: tuple | None = None   # (result, report) not yet visible


@dataclass
class Host:
    """Simulated host API.  ``execute`` hands a batch to the accelerator and
    returns at once; the result becomes visible when the simulated clock
    passes the run's cycle count."""
    cfg: MachineConfig = field(default_factory=MachineConfig)
    clock: int = 0
    slots: dict[int, Slot] = field(default_factory=dict)

    def execute(self, batch_id: int, payload, mode: str) -> None:
        slot = self.slots.setdefault(batch_id, Slot())
        if slot.status is SlotStatus.EXECUTION:
            raise BusySlot(f"batch slot {batch_id} is still executing")
        slot.neural_ready = True
        slot.symbolic_ready = False
        slot.result = None
        slot.status = SlotStatus.EXECUTION
        result, report = run_payload(payload, mode, self.cfg)
        slot.neural_ready = False
        slot.done_at = self.clock + report.total_cycles
        slot.pending = (result, report)

    def advance(self, cycles: int) -> None:
        self.clock += cycles
        self._retire()

    def _retire(self):
        for slot in self.slots.values():
            if slot.status is SlotStatus.EXECUTION and slot.done_at <= self.clock:
                slot.result, slot.report = slot.pending
                slot.pending = None
                slot.symbolic_ready = True
                slot.status = SlotStatus.IDLE

    def check_status(self, batch_id: int, blocking: bool = False) -> SlotStatus:
        slot = self.slots.get(batch_id)
        if slot is None:
            return SlotStatus.IDLE
        if blocking and slot.status is SlotStatus.EXECUTION:
            self.clock = max(self.clock, slot.done_at)
        self._retire()
        return slot.status

    def result(self, batch_id: int):
        slot = self.slots.get(batch_id)
        return None if slot is None else slot.result


def run_payload(payload, mode: str, cfg: MachineConfig):
    """Dispatch one batch to the matching simulator entry point.

    pc/hmm: ``(dag, assignment)`` or a bare Dag (no evidence, marginalized).
    sat: a CnfFormula.  spmspm: ``(A, B)``.
    """
    if mode in ("pc", "hmm"):
        from ..compiler import compile_dag
        from .probabilistic import run_probabilistic
        if isinstance(payload, Dag):
            dag, assignment = payload, {}
        else:
            dag, assignment = payload
        prog = compile_dag(dag, cfg)
        res, rep = run_probabilistic(prog, leaf_inputs(dag, assignment, marginalize=True))
        return res.value, rep
    if mode == "sat":
        from .symbolic import run_symbolic_sat
        if not isinstance(payload, CnfFormula):
            raise TypeError("sat mode expects a CnfFormula")
        return run_symbolic_sat(payload, cfg)
    if mode == "spmspm":
        from .spmspm import run_spmspm
        A, B = payload
        return run_spmspm(A, B, cfg)
    raise ValueError(f"unknown mode {mode!r}")
