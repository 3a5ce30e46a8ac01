"""Synthetic kernels and a batch evaluation harness."""
from __future__ import annotations

import csv
import io
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .codegen import build_netlist, check_netlist_timing
from .egraph import Limits
from .ir import DataType, Program, Value, format_program, parse_program
from .library import ImplLibrary, resolve_library
from .pipeline import Options, analyze, schedule

INT_OPS = ("add", "add", "sub", "mul", "mul", "and", "or", "xor", "div")
FLOAT_OPS = ("add", "add", "sub", "mul", "mul", "div", "exp", "sqrt", "log", "recip")
UNARY = {"exp", "sqrt", "log", "recip", "neg"}
RECONVERGENCE = 0.1

I16 = DataType("int", 16)
I32 = DataType("int", 32)
F32 = DataType("float", 32)


def generate_synthetic(size: int, dtype_class: str = "int", seed: int = 0) -> Program:
    """Random straight-line kernel with ``size`` operations.

    Each operand is an as-yet-unused value when one exists, except that with
    probability 0.1 any earlier value is reused (reconvergent fan-out). Values
    nobody consumes become outputs. Integer kernels read 16-bit inputs and
    keep 32-bit intermediates.
    """
    if size < 1:
        raise ValueError("size must be at least 1")
    if dtype_class not in ("int", "float"):
        raise ValueError("dtype_class must be 'int' or 'float'")
    rng = random.Random(seed)
    is_float = dtype_class == "float"
    n_inputs = max(2, size // 4)
    values: list[Value] = []
    for i in range(n_inputs):
        values.append(Value(f"in{i}", "input", (), F32 if is_float else I16))
    unused = [v.id for v in values]
    by_id = {v.id: v for v in values}
    ops = FLOAT_OPS if is_float else INT_OPS

    def operand() -> str:
        if unused and rng.random() >= RECONVERGENCE:
            return unused.pop(rng.randrange(len(unused)))
        vid = rng.choice(values).id
        if vid in unused:
            unused.remove(vid)
        return vid

    for k in range(size):
        op = rng.choice(ops)
        arity = 1 if op in UNARY else 2
        args = tuple(operand() for _ in range(arity))
        if is_float:
            t = F32
        else:
            bits = [by_id[a].dtype.bits for a in args]
            natural = {"add": max(bits) + 1, "sub": max(bits) + 1, "mul": sum(bits),
                       "div": bits[0]}.get(op, max(bits))
            t = DataType("int", min(32, natural))
        v = Value(f"v{k}", op, args, t)
        values.append(v)
        by_id[v.id] = v
        unused.append(v.id)
    used = {a for v in values for a in v.operands}
    outputs = [v.id for v in values if v.op != "input" and v.id not in used]
    kind = "f" if is_float else "i"
    p = Program(f"synth_{kind}{size}_s{seed}", values, outputs)
    # normalise through the parser so every invariant is checked
    return parse_program(format_program(p), p.name)


def bundled_benchmarks() -> dict[str, Program]:
    root = resources.files("eqsynth") / "data" / "benchmarks"
    out = {}
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".ir"):
            name = entry.name[:-3]
            out[name] = parse_program(entry.read_text(), name)
    return out


def is_integer_program(p: Program) -> bool:
    return not any(v.dtype.is_float for v in p.values)


@dataclass
class SuiteConfig:
    programs: dict[str, Program]
    library: str | None = None
    clocks_mhz: tuple[float, ...] = (100.0, 200.0, 400.0)
    solvers: tuple[str, ...] = ("asap",)
    top_k: int = 3
    timeout: float = 60.0
    jobs: int = 1
    seeds: dict[str, int] = field(default_factory=dict)


COLUMNS = ("benchmark", "clock_mhz", "solver", "latency", "runtime_s", "status",
           "impl_count", "violations", "timing_violations", "seed")


def _run_row(args) -> dict:
    name, text, lib_spec, mhz, solver, top_k, timeout, seed = args
    row = {"benchmark": name, "clock_mhz": mhz, "solver": solver, "latency": "",
           "runtime_s": "", "status": "", "impl_count": "", "violations": "",
           "timing_violations": "", "seed": "" if seed is None else seed}
    try:
        lib = resolve_library(lib_spec)
        p = parse_program(text, name)
        t0 = time.perf_counter()
        res = analyze(p, lib, Options(1000.0 / mhz, solver, top_k, limits=Limits()))
        schedule(res, solver, timeout)
        row["runtime_s"] = round(time.perf_counter() - t0, 4)
        sol = res.solution
        row.update(latency=sol.latency, status=sol.status, impl_count=sol.impl_count,
                   violations=len(res.violations))
        nl = build_netlist(sol, res.space, p)
        row["timing_violations"] = len(check_netlist_timing(nl, res.space.lib, res.space.t_clk))
    except TimeoutError:
        row["status"] = "timeout"
    except Exception as e:  # a failing row must not stop the suite
        row["status"] = f"error:{type(e).__name__}"
    return row


def run_suite(cfg: SuiteConfig) -> list[dict]:
    tasks = [(name, format_program(p), cfg.library, mhz, solver, cfg.top_k, cfg.timeout,
              cfg.seeds.get(name))
             for name, p in sorted(cfg.programs.items())
             for mhz in cfg.clocks_mhz for solver in cfg.solvers]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            rows = list(ex.map(_run_row, tasks))
    else:
        rows = [_run_row(t) for t in tasks]
    rows.sort(key=lambda r: (r["benchmark"], float(r["clock_mhz"]), r["solver"]))
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def write_csv(rows: list[dict], path: Path):
    Path(path).write_text(rows_to_csv(rows))


def default_library() -> ImplLibrary:
    return resolve_library(None)
