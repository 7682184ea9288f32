"""treefabric command line: compile, simulate, prune, bench, dse, check."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigError, MachineConfig, load_config
from .dag import Dag, dumps as dumps_dag, evaluate, leaf_inputs
from .logic import CnfFormula, ParseError, dumps_dimacs, lower_cnf_to_dag, parse_dimacs
from .prob import (HmmFormatError, HmmSpec, PcFormatError, PcSpec, dumps_hmm, lower_pc_to_dag,
                   parse_hmm, parse_pc, unroll_hmm_to_dag)

EXIT_OK, EXIT_INVARIANT, EXIT_INPUT = 0, 1, 2
MODES = ("pc", "hmm", "sat", "spmspm")
SUFFIX_MODE = {".pc": "pc", ".cnf": "sat", ".hmm": "hmm", ".mtx": "spmspm"}


class InputError(Exception):
    """Bad user input (exit code 2)."""


class InvariantError(Exception):
    """A checked property failed (exit code 1)."""


# ---------------------------------------------------------------------------
# manifest and I/O


def manifest(args, cfg: MachineConfig) -> dict:
    return {
        "tool": "treefabric", "version": __version__, "verb": args.verb,
        "inputs": [str(p) for p in getattr(args, "inputs", []) or []],
        "mode": args.mode, "config": cfg.to_dict(),
        "prune_budget": args.prune_budget, "prune_eps": args.prune_eps,
        "seed": args.seed, "out": str(args.out),
    }


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def guess_mode(path: Path, mode: str | None) -> str:
    if mode:
        return mode
    m = SUFFIX_MODE.get(path.suffix)
    if m is None:
        raise InputError(f"{path}: cannot infer --mode from suffix {path.suffix!r}")
    return m


def read_input(path: Path, mode: str):
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    try:
        if mode == "pc":
            return parse_pc(text)
        if mode == "hmm":
            return parse_hmm(text)
        if mode == "sat":
            return parse_dimacs(text)
        d = json.loads(text)
        return d["A"], d["B"]
    except (PcFormatError, HmmFormatError, ParseError) as exc:
        raise InputError(f"{path}: {exc}") from None
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: bad matrix document: {exc}") from None


def parse_evidence(text: str | None) -> dict[int, int]:
    if not text:
        return {}
    out = {}
    for tok in text.split(","):
        try:
            k, v = tok.split("=")
            out[int(k)] = int(v)
        except ValueError:
            raise InputError(f"bad evidence item {tok!r}; expected var=value") from None
    return out


# ---------------------------------------------------------------------------
# pipeline stages


def to_dag(obj, mode: str) -> Dag:
    if mode == "pc":
        return lower_pc_to_dag(obj)
    if mode == "hmm":
        return unroll_hmm_to_dag(obj)
    if mode == "sat":
        return lower_cnf_to_dag(obj)
    raise InputError(f"mode {mode} has no DAG form")


def prune_stage(obj, mode: str, args):
    """Returns (pruned object or dag, report dict or None)."""
    from . import pruner
    from .generators import sample_hmm, sample_pc

    if mode == "pc":
        dag = lower_pc_to_dag(obj)
        budget = args.prune_budget
        if not budget:
            return dag, None
        data = sample_pc(obj, args.seed, args.samples)
        stats = pruner.compute_flows(dag, data)
        n = budget_count(dag, budget)
        try:
            pruned, rep = pruner.prune_low_flow(dag, stats, budget=n)
        except pruner.BudgetTooLarge as exc:
            raise InputError(str(exc)) from None
        return pruned, json.loads(rep.to_json())
    if mode == "hmm":
        if args.prune_eps is None:
            return obj, None
        data = [list(obj.obs)] + [sample_hmm(obj, args.seed + i, max(1, len(obj.obs)))
                                  for i in range(args.samples)]
        pruned, rep = pruner.hmm_posterior_prune(obj, data, args.prune_eps)
        return pruned.with_obs(obj.obs), json.loads(rep.to_json())
    if mode == "sat":
        if not args.prune_budget and args.prune_eps is None and not args.prune_literals:
            return obj, None
        pruned, log = pruner.prune_hidden_literals(obj)
        return pruned, {"passes": log.passes, "removed": [list(r) for r in log.removed]}
    return obj, None


def budget_count(dag: Dag, budget: float) -> int:
    from .pruner import budget_from_fraction
    if budget < 1:
        return budget_from_fraction(dag, budget)
    if budget != int(budget):
        raise InputError("--prune-budget must be a fraction < 1 or a whole edge count")
    return int(budget)


def prepared_dag(obj, mode: str, args) -> tuple[Dag, dict | None]:
    pruned, rep = prune_stage(obj, mode, args)
    if isinstance(pruned, Dag):
        return pruned, rep
    return to_dag(pruned, mode), rep


def oracle_value(obj, mode: str, evidence: dict[int, int]) -> float:
    from .oracles import exact_pc_eval, hmm_forward
    if mode == "pc":
        return exact_pc_eval(obj, evidence)
    return math.exp(hmm_forward(obj))


def simulate_one(obj, mode: str, args, cfg: MachineConfig) -> dict:
    """Run one instance; returns a result dict (raises InvariantError on any
    failed check)."""
    from .compiler import compile_dag, static_check
    from .oracles import DimensionMismatch as OracleDim, dense_matmul, reference_sat
    from .sim import run_cube_and_conquer, run_probabilistic, run_spmspm, run_symbolic_sat, simulated_writes
    from .sim.report import SimError

    out: dict = {"mode": mode}
    try:
        if mode in ("pc", "hmm"):
            evidence = parse_evidence(args.evidence) if mode == "pc" else {}
            dag, prep = prepared_dag(obj, mode, args)
            prog = compile_dag(dag, cfg)
            chk = static_check(prog)
            res, rep = run_probabilistic(prog, leaf_inputs(dag, evidence, marginalize=True), trace=args.trace)
            got = res.value
            want = evaluate(dag, evidence, marginalize=True).value
            out.update(value=got, reference=want, prune=prep, static_check=chk,
                       address_contract=[list(w) for w in prog.predicted_writes] == [list(w) for w in simulated_writes(rep)])
            if prep is None:
                out["oracle"] = oracle_value(obj, mode, evidence)
            if not out["address_contract"] or any(chk.values()):
                raise InvariantError(f"address contract or static check failed: {chk}")
            for key in ("reference", "oracle"):
                ref = out.get(key)
                if ref is not None and abs(got - ref) > 1e-9 * max(abs(ref), 1e-300):
                    raise InvariantError(f"simulated value {got!r} != {key} {ref!r}")
        elif mode == "sat":
            cnf, prep = prune_stage(obj, mode, args)
            if args.cubes:
                sr, reps = run_cube_and_conquer(cnf, cfg, args.cubes, args.heuristic)
                rep = reps[-1]
                out["cube_cycles"] = [r.total_cycles for r in reps]
            else:
                sr, rep = run_symbolic_sat(cnf, cfg, args.heuristic, trace=args.trace)
            out.update(verdict=sr.verdict, learned=sr.learned, decisions=sr.decisions,
                       propagations=sr.propagations, conflicts=sr.conflicts, prune=prep,
                       model=None if sr.model is None else [v if b else -v for v, b in sorted(sr.model.items())])
            if sr.model is not None and not obj.satisfied_by(sr.model):
                raise InvariantError("model violates an original clause")
            if obj.num_vars <= args.oracle_max_vars:
                ref = reference_sat(obj)
                out["oracle"] = "SAT" if ref.sat else "UNSAT"
                if ref.sat != sr.sat:
                    raise InvariantError(f"verdict {sr.verdict} disagrees with reference {out['oracle']}")
        else:
            A, B = obj
            try:
                C, rep = run_spmspm(A, B, cfg, trace=args.trace)
                want = dense_matmul(A, B)
            except (ValueError, OracleDim) as exc:
                raise InputError(str(exc)) from None
            got = C.to_dense().tolist()
            out.update(C=got, value=f"{C.shape[0]}x{C.shape[1]} nnz={C.nnz}")
            if got != want:
                raise InvariantError("sparse product differs from dense reference")
    except SimError as exc:
        raise InvariantError(f"{type(exc).__name__}: {exc}") from None
    out["report"] = rep.to_dict()
    out["_trace"] = rep.trace
    return out


# ---------------------------------------------------------------------------
# verbs


def load_one(args) -> tuple[object, str, Path]:
    if len(args.inputs) != 1:
        raise InputError(f"{args.verb} takes exactly one input file")
    path = Path(args.inputs[0])
    mode = guess_mode(path, args.mode)
    args.mode = mode
    return read_input(path, mode), mode, path


def cmd_compile(args, cfg) -> int:
    from .compiler import compile_dag, static_check
    obj, mode, path = load_one(args)
    if mode in ("sat", "spmspm"):
        raise InputError(f"{mode} mode runs on the symbolic/SpMSpM engine and has no VLIW program; use simulate")
    dag, prep = prepared_dag(obj, mode, args)
    prog = compile_dag(dag, cfg)
    chk = static_check(prog)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "program.json").write_text(prog.dumps())
    report = {"manifest": manifest(args, cfg), "stats": prog.stats, "blocks": len(prog.block_table),
              "spills": prog.spill_count, "copies": prog.copy_count, "reloads": prog.reload_count,
              "predicted_cycles": prog.predicted_cycles, "static_check": chk, "prune": prep}
    write_json(out / "compile_report.json", report)
    if any(chk.values()):
        raise InvariantError(f"static check failed: {chk}")
    print(f"compiled {path}: {len(prog.block_table)} blocks, {prog.predicted_cycles} cycles -> {out}")
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    obj, mode, path = load_one(args)
    res = simulate_one(obj, mode, args, cfg)
    trace = res.pop("_trace")
    res["manifest"] = manifest(args, cfg)
    out = Path(args.out)
    write_json(out / "result.json", res)
    if args.trace:
        (out / "trace.txt").write_text("".join(ln + "\n" for ln in trace))
    summary = res.get("verdict", res.get("value", "ok"))
    print(f"simulated {path}: {summary} in {res['report']['total_cycles']} cycles -> {out}")
    return EXIT_OK


def cmd_prune(args, cfg) -> int:
    obj, mode, path = load_one(args)
    if mode == "sat":
        args.prune_literals = True
    pruned, rep = prune_stage(obj, mode, args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(pruned, Dag):
        (out / "pruned.dag").write_text(dumps_dag(pruned))
    elif isinstance(pruned, HmmSpec):
        (out / "pruned.hmm").write_text(dumps_hmm(pruned))
    elif isinstance(pruned, CnfFormula):
        (out / "pruned.cnf").write_text(dumps_dimacs(pruned))
    else:
        raise InputError(f"mode {mode} has nothing to prune")
    write_json(out / "prune_report.json", {"manifest": manifest(args, cfg), "report": rep})
    print(f"pruned {path} -> {out}")
    return EXIT_OK


def generated_suite(mode: str, seed: int, count: int):
    from .generators import random_hmm, random_kcnf, random_pc_bounded, random_sparse_int
    items = []
    for i in range(count):
        s = seed * 1000 + i
        if mode == "pc":
            obj = random_pc_bounded(s, max_nodes=120, max_vars=8)
        elif mode == "hmm":
            obj = random_hmm(s, K=2 + i % 4, V=4, T=4 + i % 8)
        elif mode == "sat":
            import numpy as np
            obj = random_kcnf(np.random.default_rng(s), 20, 85)
        else:
            obj = (random_sparse_int(s, 8, 8, 0.3).tolist(), random_sparse_int(s + 1, 8, 8, 0.3).tolist())
        items.append((f"gen-{mode}-{i:03d}", mode, obj))
    return items


BENCH_FIELDS = ["instance", "mode", "status", "cycles", "utilization", "stall_raw", "stall_bank_conflict",
                "stall_fifo_full", "stall_sram_miss", "result", "edges_removed", "prune_bound", "prune_measured"]


def bench_row(name: str, mode: str, res: dict) -> dict:
    rep = res["report"]
    util = rep["utilization"]
    u = util.get("tree", util.get("leaf", 0.0))
    st = rep["stalls"]
    prep = res.get("prune") or {}
    removed = prep.get("edges_removed", prep.get("removed"))
    return {
        "instance": name, "mode": mode, "status": "ok", "cycles": rep["total_cycles"],
        "utilization": f"{u:.6f}", "stall_raw": st.get("raw", 0), "stall_bank_conflict": st.get("bank_conflict", 0),
        "stall_fifo_full": st.get("fifo_full", 0), "stall_sram_miss": st.get("sram_miss", 0),
        "result": res["verdict"] if "verdict" in res else (res["value"] if isinstance(res["value"], str) else repr(res["value"])),
        "edges_removed": "" if removed is None else len(removed),
        "prune_bound": "" if prep.get("bound_delta_loglik") is None else repr(prep["bound_delta_loglik"]),
        "prune_measured": "" if prep.get("measured_delta_loglik") is None else repr(prep["measured_delta_loglik"]),
    }


def write_csv(path: Path, fields: list[str], rows: list[dict], man: dict) -> str:
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(man, sort_keys=True) + "\n")
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return buf.getvalue()


def cmd_bench(args, cfg) -> int:
    items = []
    if args.inputs:
        for p in args.inputs:
            p = Path(p)
            files = sorted(f for f in p.iterdir() if f.suffix in SUFFIX_MODE) if p.is_dir() else [p]
            for f in files:
                mode = guess_mode(f, args.mode)
                try:
                    items.append((f.name, mode, read_input(f, mode)))
                except InputError as exc:
                    items.append((f.name, mode, exc))
    else:
        items = generated_suite(args.mode or "pc", args.seed, args.count)
    rows = []
    start = time.monotonic()
    for name, mode, obj in items:
        blank = {k: "" for k in BENCH_FIELDS} | {"instance": name, "mode": mode}
        if args.time_budget and time.monotonic() - start > args.time_budget:
            rows.append(blank | {"status": "skipped: time budget"})
            continue
        if isinstance(obj, Exception):
            rows.append(blank | {"status": f"error: {obj}"})
            continue
        try:
            rows.append(bench_row(name, mode, simulate_one(obj, mode, args, cfg)))
        except (InvariantError, InputError, ValueError, RuntimeError) as exc:
            rows.append(blank | {"status": f"error: {type(exc).__name__}: {exc}"})
    rows.sort(key=lambda r: (r["instance"], r["mode"]))
    ok = [r for r in rows if r["status"] == "ok"]
    summary = {k: "" for k in BENCH_FIELDS} | {
        "instance": "SUMMARY", "status": f"{len(ok)}/{len(rows)} ok",
        "cycles": sum(int(r["cycles"]) for r in ok),
        "utilization": f"{(sum(float(r['utilization']) for r in ok) / len(ok)) if ok else 0.0:.6f}",
    }
    out = Path(args.out) / "bench.csv"
    write_csv(out, BENCH_FIELDS, rows + [summary], manifest(args, cfg))
    print(f"bench: {summary['status']} -> {out}")
    return EXIT_OK if len(ok) == len(rows) or args.keep_going else EXIT_INVARIANT


DSE_FIELDS = ["tree_depth", "banks", "regs_per_bank", "status", "cycles", "spills", "reloads", "copies",
              "register_reads", "register_writes", "register_traffic", "utilization", "default"]


def _ints(text: str) -> list[int]:
    try:
        vals = sorted({int(t) for t in text.split(",") if t.strip()})
    except ValueError:
        raise InputError(f"bad integer list {text!r}") from None
    if not vals:
        raise InputError("empty grid axis")
    return vals


def dse_cell(dag: Dag, leaves: dict, base: MachineConfig, D: int, B: int, R: int) -> dict:
    from .compiler import compile_dag, static_check
    from .sim import run_probabilistic, simulated_writes
    row = {k: "" for k in DSE_FIELDS} | {"tree_depth": D, "banks": B, "regs_per_bank": R,
                                        "default": int((D, B, R) == (3, 64, 32))}
    try:
        cfg = base.replace(tree_depth=D, banks=B, regs_per_bank=R)
        prog = compile_dag(dag, cfg)
        _, rep = run_probabilistic(prog, leaves)
        if any(static_check(prog).values()) or [list(w) for w in prog.predicted_writes] != [list(w) for w in simulated_writes(rep)]:
            raise InvariantError("address contract violated")
    except Exception as exc:  # recorded per cell
        return row | {"status": f"error: {type(exc).__name__}: {exc}"}
    reads = sum(len(s.reads) for ins in prog.instructions for s in ins.issues)
    writes = len(prog.predicted_writes)
    return row | {"status": "ok", "cycles": rep.total_cycles, "spills": prog.spill_count,
                  "reloads": prog.reload_count, "copies": prog.copy_count, "register_reads": reads,
                  "register_writes": writes, "register_traffic": reads + writes,
                  "utilization": f"{rep.utilization['tree']:.6f}"}


def cmd_dse(args, cfg) -> int:
    if args.inputs:
        obj, mode, _ = load_one(args)
    else:
        from .generators import random_pc_bounded
        mode, obj = "pc", random_pc_bounded(args.seed, max_nodes=200, max_vars=10)
        args.mode = mode
    if mode not in ("pc", "hmm"):
        raise InputError("dse sweeps probabilistic programs (pc or hmm)")
    dag, _ = prepared_dag(obj, mode, args)
    leaves = leaf_inputs(dag, {}, marginalize=True)
    rows = [dse_cell(dag, leaves, cfg, D, B, R)
            for D in _ints(args.depths) for B in _ints(args.banks) for R in _ints(args.regs)]
    rows.sort(key=lambda r: (r["tree_depth"], r["banks"], r["regs_per_bank"]))
    out = Path(args.out) / "dse.csv"
    write_csv(out, DSE_FIELDS, rows, manifest(args, cfg))
    bad = spill_monotonicity(rows)
    print(f"dse: {len(rows)} cells, {sum(r['status'] == 'ok' for r in rows)} ok -> {out}")
    if bad:
        print("spill count rose with R at: " + "; ".join(bad), file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def spill_monotonicity(rows: list[dict]) -> list[str]:
    bad = []
    groups: dict = {}
    for r in rows:
        if r["status"] == "ok":
            groups.setdefault((r["tree_depth"], r["banks"]), []).append((r["regs_per_bank"], r["spills"]))
    for key, pts in groups.items():
        pts.sort()
        for (r0, s0), (r1, s1) in zip(pts, pts[1:]):
            if s1 > s0:
                bad.append(f"D={key[0]} B={key[1]} R={r0}->{r1}")
    return bad


def cmd_check(args, cfg) -> int:
    """Oracle-equivalence sweep over a seeded corpus."""
    failures = 0
    lines = []
    for mode in ("pc", "hmm", "sat", "spmspm"):
        items = generated_suite(mode, args.seed, args.count)
        bad = 0
        for name, _, obj in items:
            try:
                simulate_one(obj, mode, args, cfg)
            except (InvariantError, ValueError, RuntimeError) as exc:
                bad += 1
                lines.append(f"FAIL {name}: {exc}")
        failures += bad
        lines.append(f"{'PASS' if not bad else 'FAIL'} {mode}: {len(items) - bad}/{len(items)} agree with oracles")
    print("\n".join(lines))
    if args.out:
        write_json(Path(args.out) / "check.json", {"manifest": manifest(args, cfg), "lines": lines})
    return EXIT_OK if failures == 0 else EXIT_INVARIANT


VERBS = {"compile": cmd_compile, "simulate": cmd_simulate, "prune": cmd_prune,
         "bench": cmd_bench, "dse": cmd_dse, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="treefabric", description=__doc__)
    p.add_argument("--version", action="version", version=f"treefabric {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        sp = sub.add_parser(verb, help=VERBS[verb].__doc__ or verb)
        sp.add_argument("inputs", nargs="*", help="input file(s); bench also takes directories")
        sp.add_argument("--config", help="MachineConfig file (JSON or key = value lines)")
        sp.add_argument("--mode", choices=MODES, help="kernel kind (default: from file suffix)")
        sp.add_argument("--prune-budget", type=float, default=0.0,
                        help="PC edges to prune: fraction of sum edges if < 1, else a count (0 = off)")
        sp.add_argument("--prune-eps", type=float, default=None, help="HMM posterior-usage threshold")
        sp.add_argument("--prune-literals", action="store_true", help="SAT: drop hidden literals first")
        sp.add_argument("--trace", action="store_true", help="write the cycle event trace")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default="treefabric-out", help="output directory")
        sp.add_argument("--evidence", help="PC evidence as var=value,... (others marginalized)")
        sp.add_argument("--samples", type=int, default=128, help="samples drawn for pruning statistics")
        sp.add_argument("--heuristic", choices=("static", "vsids"), default="static")
        sp.add_argument("--cubes", type=int, default=0, help="cube-and-conquer split variables (0 = plain CDCL)")
        sp.add_argument("--oracle-max-vars", type=int, default=60,
                        help="cross-check SAT verdicts with the reference solver up to this many vars")
        sp.add_argument("--count", type=int, default=10, help="generated instances for bench/check")
        sp.add_argument("--time-budget", type=float, default=0.0, help="bench wall-clock budget in seconds")
        sp.add_argument("--keep-going", action="store_true", help="bench exits 0 despite failed rows")
        sp.add_argument("--depths", default="2,3", help="dse tree depths")
        sp.add_argument("--banks", default="8,64", help="dse bank counts")
        sp.add_argument("--regs", default="8,32", help="dse registers per bank")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return VERBS[args.verb](args, cfg)
    except (InputError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
