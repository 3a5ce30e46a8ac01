import csv
import json
import subprocess
import sys
from importlib import resources

import pytest

from eqsynth.bench import generate_synthetic
from eqsynth.cli import (EXIT_INFEASIBLE_CLOCK, EXIT_IO, EXIT_OK, EXIT_PARSE,
                         EXIT_SATURATION_LIMIT, EXIT_TIMEOUT, EXIT_UNSCHEDULABLE, EXIT_USAGE,
                         main)
from eqsynth.ir import format_program

from conftest import comb

BENCH = resources.files("eqsynth") / "data" / "benchmarks"


def bench(name):
    return str(BENCH / f"{name}.ir")


def stderr_lines(capsys):
    return [line for line in capsys.readouterr().err.splitlines() if line]


def test_synth_fig1_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["synth", bench("add_neg_mul"), "--clock-mhz", "450", "--solver", "asap",
                 "-o", str(out)])
    assert code == EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == [
        "add_neg_mul.report.txt", "add_neg_mul.sched.json", "add_neg_mul.v"]
    assert "latency = 2 cycles" in (out / "add_neg_mul.report.txt").read_text()
    doc = json.loads((out / "add_neg_mul.sched.json").read_text())
    assert doc["latency"] == 2
    for line in stderr_lines(capsys):
        assert line.split(":", 1)[0] in ("DEBUG", "INFO", "WARNING", "ERROR")


def test_outputs_are_byte_identical(tmp_path):
    args = ["synth", bench("fir4"), bench("horner"), "--clock-mhz", "200"]
    assert main(args + ["-o", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["-o", str(tmp_path / "b"), "--jobs", "2"]) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(names) == 6
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_stamp_opts_into_timestamp(tmp_path):
    assert main(["synth", bench("lerp"), "--stamp", "-o", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "lerp.report.txt").read_text().startswith("generated: ")


def test_clock_ns_equals_mhz(tmp_path):
    main(["synth", bench("horner"), "--clock-ns", "5", "-o", str(tmp_path / "ns")])
    main(["synth", bench("horner"), "--clock-mhz", "200", "-o", str(tmp_path / "mhz")])
    assert ((tmp_path / "ns" / "horner.v").read_text()
            == (tmp_path / "mhz" / "horner.v").read_text())


def test_export_subcommands(tmp_path):
    assert main(["dot", bench("add_neg_mul"), "-o", str(tmp_path)]) == EXIT_OK
    assert main(["paths", bench("add_neg_mul"), "-o", str(tmp_path)]) == EXIT_OK
    assert main(["export-lp", bench("add_neg_mul"), "-o", str(tmp_path)]) == EXIT_OK
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "add_neg_mul.egraph.dot", "add_neg_mul.lp", "add_neg_mul.paths.csv",
        "add_neg_mul.program.dot"]
    assert (tmp_path / "add_neg_mul.program.dot").read_text().startswith("digraph")
    header = (tmp_path / "add_neg_mul.paths.csv").read_text().splitlines()[0]
    assert header == "src,dst,delay_ns,cuts,edges"
    lp = (tmp_path / "add_neg_mul.lp").read_text()
    assert "Minimize" in lp and lp.rstrip().endswith("End")


def test_solver_export_lp_matches_subcommand(tmp_path):
    main(["export-lp", bench("fir4"), "-o", str(tmp_path / "a")])
    main(["synth", bench("fir4"), "--solver", "export-lp", "-o", str(tmp_path / "b")])
    assert (tmp_path / "a" / "fir4.lp").read_text() == (tmp_path / "b" / "fir4.lp").read_text()


def test_missing_file_is_io_error(tmp_path, capsys):
    assert main(["synth", str(tmp_path / "nope.ir"), "-o", str(tmp_path)]) == EXIT_IO
    assert stderr_lines(capsys)[-1].startswith("ERROR: ")


def test_parse_error(tmp_path, capsys):
    f = tmp_path / "bad.ir"
    f.write_text("a = input i8\nb = frob i8 a\nreturn b\n")
    assert main(["synth", str(f), "-o", str(tmp_path)]) == EXIT_PARSE
    assert "2:5" in stderr_lines(capsys)[-1]


def test_bad_library_is_parse_error(tmp_path):
    lib = tmp_path / "lib.json"
    lib.write_text("{not json")
    assert main(["synth", bench("fir4"), "--lib", str(lib), "-o", str(tmp_path)]) == EXIT_PARSE


def test_infeasible_clock(tmp_path):
    code = main(["synth", bench("add_neg_mul"), "--clock-mhz", "5000", "-o", str(tmp_path)])
    assert code == EXIT_INFEASIBLE_CLOCK


def test_saturation_limit_still_writes(tmp_path, capsys):
    code = main(["synth", bench("fir4"), "--max-iters", "1", "-o", str(tmp_path)])
    assert code == EXIT_SATURATION_LIMIT
    assert (tmp_path / "fir4.v").exists()
    assert any(line.startswith("WARNING: fir4: saturation stopped early")
               for line in stderr_lines(capsys))


def test_unschedulable(tmp_path):
    lib = tmp_path / "neg_only.json"
    lib.write_text(json.dumps({
        "version": 1, "name": "neg-only",
        "constants": {"t_net": 0.5, "t_su": 0.1, "t_clkq": 0.1},
        "algebraic_rules": [],
        "implementations": [comb("N", "(neg ?p)", {"p": 0.2})]}))
    prog = tmp_path / "x.ir"
    prog.write_text("a = input i8\nb = input i8\ny = xor i8 a b\nreturn y\n")
    assert main(["synth", str(prog), "--lib", str(lib), "-o", str(tmp_path)]) == \
        EXIT_UNSCHEDULABLE


def test_exact_timeout_writes_best(tmp_path):
    prog = tmp_path / "s26.ir"
    prog.write_text(format_program(generate_synthetic(25, "int", 26)))
    code = main(["synth", str(prog), "--solver", "exact", "--clock-mhz", "400",
                 "--timeout-s", "1", "-o", str(tmp_path)])
    assert code == EXIT_TIMEOUT
    assert json.loads((tmp_path / "s26.sched.json").read_text())["status"] == "timeout"


@pytest.mark.parametrize("argv", [
    ["synth", "x.ir", "--clock-mhz", "100", "--clock-ns", "5"],
    ["synth", "x.ir", "--solver", "milp"],
    ["synth"],
    ["frobnicate"],
    ["synth", "x.ir", "--top-k", "0"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert stderr_lines(capsys)[-1].startswith("ERROR: ")


def test_worst_code_wins(tmp_path):
    code = main(["synth", bench("lerp"), str(tmp_path / "missing.ir"), "-o", str(tmp_path)])
    assert code == EXIT_IO
    assert (tmp_path / "lerp.v").exists()


def test_bench_writes_csv(tmp_path):
    out = tmp_path / "b.csv"
    code = main(["bench", "--clock-mhz", "200", "--synthetic", "12", "--seed", "4",
                 "-o", str(out)])
    assert code == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    names = {r["benchmark"] for r in rows}
    assert "synth_i12_s4" in names and "add_neg_mul" in names
    assert all(r["status"] == "feasible" for r in rows)
    assert {r["seed"] for r in rows if r["benchmark"] == "synth_i12_s4"} == {"4"}


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "eqsynth.cli", "synth", bench("add_neg_mul"),
                        "--clock-mhz", "450", "-o", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout == ""
    assert "INFO: add_neg_mul: latency 2 cycles" in r.stderr
