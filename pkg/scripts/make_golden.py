"""Regenerate the golden files for the DMA/FIFO overlap scenario.

Writes overlap.cnf, overlap.cfg and overlap_trace.txt under tests/golden/.
Only rerun after a deliberate change to the symbolic timing model; the
trace is checked byte-for-byte by the test suite.
"""
from __future__ import annotations

import argparse
from pathlib import Path

from treefabric.logic import dumps_dimacs
from treefabric.sim.symbolic import overlap_scenario, run_symbolic_sat

HERE = Path(__file__).resolve().parent.parent / "tests" / "golden"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dir", type=Path, default=HERE)
    args = ap.parse_args(argv)
    cnf, cfg = overlap_scenario()
    res, rep = run_symbolic_sat(cnf, cfg, trace=True)
    args.dir.mkdir(parents=True, exist_ok=True)
    (args.dir / "overlap.cnf").write_text(dumps_dimacs(cnf))
    (args.dir / "overlap.cfg").write_text("".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items()
                                                  if k != "pipeline_interval"))
    (args.dir / "overlap_trace.txt").write_text("".join(ln + "\n" for ln in rep.trace))
    print(f"{res.verdict}: {len(rep.trace)} trace lines, {rep.total_cycles} cycles -> {args.dir}")


if __name__ == "__main__":
    main()
