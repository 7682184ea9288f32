"""Machine parameters for the tree fabric."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MachineConfig:
    tree_depth: int = 3
    banks: int = 64
    regs_per_bank: int = 32
    pe_count: int = 12
    pipeline_interval: int | None = None  # None means tree_depth + 1
    broadcast_latency_per_level: int = 1
    reduction_latency_per_level: int = 1
    fifo_depth: int = 16
    sram_words: int = 16384
    sram_hit_latency: int = 1
    dma_latency: int = 16
    scalar_op_latency: int = 2
    scratchpad_ports: int = 2

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{f.name} must be a positive integer, got {v!r}")
        if self.banks < 2 * self.leaves_per_pe:
            raise ConfigError(f"banks={self.banks} < 2 * leaves_per_pe={2 * self.leaves_per_pe}")
        if self.regs_per_bank < 2:
            raise ConfigError("regs_per_bank must be at least 2")

    @property
    def leaves_per_pe(self) -> int:
        return 1 << self.tree_depth

    @property
    def nodes_per_pe(self) -> int:
        return (1 << (self.tree_depth + 1)) - 1

    @property
    def interval(self) -> int:
        return self.tree_depth + 1 if self.pipeline_interval is None else self.pipeline_interval

    def replace(self, **kw) -> "MachineConfig":
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["pipeline_interval"] = self.interval
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MachineConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def parse_config(text: str) -> MachineConfig:
    """JSON object, or ``key = value`` lines (``#`` comments allowed)."""
    text = text.strip()
    if text.startswith("{"):
        try:
            return MachineConfig.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad JSON config: {exc}") from None
    d = {}
    for ln in text.splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise ConfigError(f"expected key = value, got {ln!r}")
        k, v = (s.strip() for s in ln.split("=", 1))
        try:
            d[k] = int(v)
        except ValueError:
            raise ConfigError(f"{k}: not an integer: {v!r}") from None
    return MachineConfig.from_dict(d)


def load_config(path: str | Path | None) -> MachineConfig:
    return MachineConfig() if path is None else parse_config(Path(path).read_text())
