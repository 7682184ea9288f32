import csv
import json
import shutil
import subprocess
from pathlib import Path

import pytest

from treefabric.cli import main
from treefabric.generators import random_hmm, random_kcnf, random_pc_bounded, random_sparse_int
from treefabric.logic import dumps_dimacs
from treefabric.prob import dumps_hmm, dumps_pc

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def inputs(tmp_path):
    d = tmp_path / "in"
    d.mkdir()
    (d / "a.pc").write_text(dumps_pc(random_pc_bounded(1, max_nodes=80, max_vars=6)))
    (d / "b.hmm").write_text(dumps_hmm(random_hmm(2, 3, 4, 5)))
    (d / "c.cnf").write_text(dumps_dimacs(random_kcnf(3, 20, 85)))
    A, B = random_sparse_int(4, 6, 5, 0.4), random_sparse_int(5, 5, 7, 0.4)
    (d / "d.mtx").write_text(json.dumps({"A": A.tolist(), "B": B.tolist()}))
    return d


def run(*argv):
    return main([str(a) for a in argv])


def read_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest: ")
    return list(csv.DictReader(lines[1:]))


@pytest.mark.parametrize("name", ["a.pc", "b.hmm", "c.cnf", "d.mtx"])
def test_simulate_each_mode(inputs, tmp_path, name):
    out = tmp_path / "out"
    assert run("simulate", inputs / name, "--out", out, "--trace") == 0
    res = json.loads((out / "result.json").read_text())
    assert res["manifest"]["config"]["tree_depth"] == 3
    assert (out / "trace.txt").exists()


def test_simulate_is_deterministic(inputs, tmp_path):
    for k in (1, 2):
        assert run("simulate", inputs / "c.cnf", "--out", tmp_path / f"o{k}", "--trace") == 0
    for f in ("result.json", "trace.txt"):
        a = (tmp_path / "o1" / f).read_text().replace(str(tmp_path / "o1"), "")
        b = (tmp_path / "o2" / f).read_text().replace(str(tmp_path / "o2"), "")
        assert a == b


def test_golden_trace_via_cli(tmp_path):
    out = tmp_path / "g"
    rc = run("simulate", GOLDEN / "overlap.cnf", "--config", GOLDEN / "overlap.cfg", "--out", out, "--trace")
    assert rc == 0
    assert (out / "trace.txt").read_text() == (GOLDEN / "overlap_trace.txt").read_text()


def test_compile_writes_program(inputs, tmp_path):
    out = tmp_path / "c"
    assert run("compile", inputs / "a.pc", "--out", out) == 0
    rep = json.loads((out / "compile_report.json").read_text())
    assert rep["static_check"] == {"raw_violations": 0, "port_violations": 0}
    assert (out / "program.json").read_text()


def test_zero_budget_matches_unpruned(inputs, tmp_path):
    run("compile", inputs / "a.pc", "--out", tmp_path / "p0")
    run("compile", inputs / "a.pc", "--out", tmp_path / "p1", "--prune-budget", "0")
    assert (tmp_path / "p0" / "program.json").read_text() == (tmp_path / "p1" / "program.json").read_text()


def test_prune_outputs(inputs, tmp_path):
    assert run("prune", inputs / "a.pc", "--out", tmp_path / "pa", "--prune-budget", "0.2") == 0
    rep = json.loads((tmp_path / "pa" / "prune_report.json").read_text())["report"]
    assert rep["edges_removed"]
    assert (tmp_path / "pa" / "pruned.dag").exists()
    assert run("prune", inputs / "c.cnf", "--out", tmp_path / "pc") == 0
    assert (tmp_path / "pc" / "pruned.cnf").exists()
    assert run("prune", inputs / "b.hmm", "--out", tmp_path / "ph", "--prune-eps", "0.01") == 0
    assert (tmp_path / "ph" / "pruned.hmm").exists()


def test_bench_over_directory(inputs, tmp_path):
    assert run("bench", inputs, "--out", tmp_path / "b") == 0
    rows = read_rows(tmp_path / "b" / "bench.csv")
    assert [r["instance"] for r in rows] == ["a.pc", "b.hmm", "c.cnf", "d.mtx", "SUMMARY"]
    assert rows[-1]["status"] == "4/4 ok"


def test_bench_bad_file_is_recorded(inputs, tmp_path):
    (inputs / "e.cnf").write_text("p cnf 2 1\n1 5 0\n")
    assert run("bench", inputs, "--out", tmp_path / "b") == 1
    assert run("bench", inputs, "--out", tmp_path / "b", "--keep-going") == 0
    rows = read_rows(tmp_path / "b" / "bench.csv")
    assert next(r for r in rows if r["instance"] == "e.cnf")["status"].startswith("error")


def test_dse_grid(tmp_path):
    assert run("dse", "--out", tmp_path / "d") == 0
    rows = read_rows(tmp_path / "d" / "dse.csv")
    assert len(rows) == 8
    assert sum(r["default"] == "1" or r["default"] == "True" for r in rows) <= 1
    # B=8 cannot feed an 8-leaf tree
    assert all(r["status"] != "ok" for r in rows if r["tree_depth"] == "3" and r["banks"] == "8")


def test_check_passes(tmp_path, capsys):
    assert run("check", "--count", "3", "--out", tmp_path / "k") == 0
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split()[0] for ln in lines] == ["PASS"] * 4


@pytest.mark.parametrize("argv", [
    ["simulate", "missing.cnf"],
    ["simulate", "x.unknown"],
    ["simulate", "{bad}"],
])
def test_input_errors_exit_two(tmp_path, argv):
    argv = [a.replace("{bad}", str(tmp_path / "bad.cnf")) for a in argv]
    (tmp_path / "bad.cnf").write_text("p cnf 1 1\n1 2 0\n")
    assert run(*argv, "--out", tmp_path / "o") == 2


def test_bad_config_exit_two(inputs, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("banks = 4\n")
    assert run("simulate", inputs / "c.cnf", "--config", cfg, "--out", tmp_path / "o") == 2
    assert run("simulate", inputs / "c.cnf", "--config", tmp_path / "nope.cfg", "--out", tmp_path / "o") == 2


@pytest.mark.skipif(shutil.which("treefabric") is None, reason="console script not installed")
def test_console_script(inputs, tmp_path):
    p = subprocess.run(["treefabric", "simulate", str(inputs / "c.cnf"), "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert p.returncode == 0 and "simulated" in p.stdout
