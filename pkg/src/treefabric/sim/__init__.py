"""Cycle-level model of the tree fabric."""
from .host import BusySlot, Host, LengthMismatch, PipelineResult, SlotStatus, pipeline_two_level
from .interconnect import TOPOLOGIES, interconnect_latency, measure_broadcast
from .probabilistic import run_probabilistic, simulated_writes
from .report import (BankConflict, CycleReport, HazardViolation, ResourceExhausted, SatResult,
                     SimError, Trace, parse_trace_line)
from .spmspm import DimensionMismatch, SparseMatrix, run_spmspm
from .symbolic import overlap_scenario, run_cube_and_conquer, run_symbolic_sat

__all__ = [
    "run_probabilistic", "simulated_writes", "run_symbolic_sat", "run_cube_and_conquer",
    "overlap_scenario", "run_spmspm", "SparseMatrix", "interconnect_latency", "measure_broadcast",
    "TOPOLOGIES", "pipeline_two_level", "PipelineResult", "Host", "SlotStatus", "BusySlot",
    "LengthMismatch", "CycleReport", "SatResult", "Trace", "parse_trace_line", "SimError",
    "HazardViolation", "BankConflict", "ResourceExhausted", "DimensionMismatch",
]
