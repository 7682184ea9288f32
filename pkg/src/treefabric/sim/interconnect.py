"""Hop-count latency of root-to-leaf broadcast on three interconnects."""
from __future__ import annotations

import math

from ..config import MachineConfig

TOPOLOGIES = ("tree", "mesh", "bus")


def mesh_shape(n: int) -> tuple[int, int]:
    """Near-square grid holding ``n`` endpoints: c = ceil(sqrt n) columns."""
    c = math.isqrt(n - 1) + 1 if n > 1 else 1
    return -(-n // c), c


def interconnect_latency(topology: str, n: int) -> int:
    """Hops from the controller to the farthest of ``n`` endpoints.

    The tree's root is the controller.  On the mesh and the bus the
    controller hangs off one corner or end, so reaching the fabric costs one
    extra hop.  A single endpoint is colocated with the controller.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if topology not in TOPOLOGIES:
        raise ValueError(f"unknown topology {topology!r}")
    if n == 1:
        return 0
    if topology == "tree":
        return (n - 1).bit_length()          # ceil(log2 n)
    if topology == "mesh":
        r, c = mesh_shape(n)
        return 1 + (r - 1) + (c - 1)
    return n


def measure_broadcast(n_leaves: int, cfg: MachineConfig | None = None) -> int:
    """Broadcast latency read off the symbolic engine's trace for a tree with
    ``n_leaves`` leaves (a power of two): cycles from send to leaf arrival."""
    from ..logic import CnfFormula
    from .report import parse_trace_line
    from .symbolic import run_symbolic_sat

    if n_leaves < 2 or n_leaves & (n_leaves - 1):
        raise ValueError("n_leaves must be a power of two >= 2")
    depth = n_leaves.bit_length() - 1
    base = cfg or MachineConfig()
    cfg = base.replace(tree_depth=depth, banks=max(base.banks, 2 * n_leaves))
    _, rep = run_symbolic_sat(CnfFormula(2, [[1, 2]]), cfg, trace=True)
    send = arrive = None
    for ln in rep.trace:
        ev = parse_trace_line(ln)
        if ev["unit"] == "bcast" and ev["ev"] == "send" and send is None:
            send = int(ev["cycle"])
        elif ev["unit"] == "bcast" and ev["ev"] == "arrive" and arrive is None:
            arrive = int(ev["cycle"])
    return arrive - send
