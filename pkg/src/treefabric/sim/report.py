"""Cycle reports, SAT results and the event trace."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


class SimError(RuntimeError):
    pass


class HazardViolation(SimError):
    pass


class BankConflict(SimError):
    pass


class ResourceExhausted(SimError):
    pass


@dataclass
class CycleReport:
    total_cycles: int
    busy: dict[str, int] = field(default_factory=dict)
    utilization: dict[str, float] = field(default_factory=dict)
    stalls: dict[str, int] = field(default_factory=dict)
    hazards: dict[str, int] = field(default_factory=dict)
    fifo_histogram: dict[int, int] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    trace: list[str] = field(default_factory=list)

    def __post_init__(self):
        for unit, b in self.busy.items():
            cap = self.extra.get("capacity", {}).get(unit, self.total_cycles)
            if b > cap:
                raise SimError(f"unit {unit} busy {b} > capacity {cap}")

    def to_dict(self, with_trace: bool = False) -> dict:
        d = asdict(self)
        d["fifo_histogram"] = {str(k): v for k, v in sorted(self.fifo_histogram.items())}
        if not with_trace:
            d.pop("trace")
        return d

    def to_json(self, with_trace: bool = False) -> str:
        return json.dumps(self.to_dict(with_trace), sort_keys=True, indent=1) + "\n"


@dataclass
class SatResult:
    verdict: str                       # "SAT" | "UNSAT"
    model: dict[int, bool] | None = None
    learned: int = 0
    decisions: int = 0
    propagations: int = 0
    conflicts: int = 0

    @property
    def sat(self) -> bool:
        return self.verdict == "SAT"


def _fmt(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


class Trace:
    """Buffered events, emitted sorted by cycle (stable within a cycle)."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.events: list[tuple[int, int, str, str, tuple]] = []
        self._seq = 0

    def emit(self, cycle: int, unit: str, ev: str, **kv):
        if not self.enabled:
            return
        self.events.append((cycle, self._seq, unit, ev, tuple(kv.items())))
        self._seq += 1

    def lines(self) -> list[str]:
        out = []
        for cycle, _, unit, ev, kv in sorted(self.events, key=lambda e: (e[0], e[1])):
            extra = "".join(f" {k}={_fmt(v)}" for k, v in kv)
            out.append(f"cycle={cycle} unit={unit} ev={ev}{extra}")
        return out

    def text(self) -> str:
        return "".join(ln + "\n" for ln in self.lines())


def parse_trace_line(line: str) -> dict[str, str]:
    return dict(tok.split("=", 1) for tok in line.split())
