"""Command-line driver."""
from __future__ import annotations

import argparse
import datetime
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .bench import SuiteConfig, bundled_benchmarks, generate_synthetic, rows_to_csv, run_suite
from .codegen import CodegenError, build_netlist, emit_schedule_report, to_verilog
from .egraph import EGraphError, Limits
from .ir import IRError, parse_program, program_to_dot
from .library import LibraryError, resolve_library
from .milp import build_model, export_lp
from .pipeline import Options, analyze, schedule
from .timing import InfeasibleClockError, UnschedulableError, clock_ns

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_SATURATION_LIMIT = 4
EXIT_INFEASIBLE_CLOCK = 5
EXIT_UNSCHEDULABLE = 6
EXIT_TIMEOUT = 7

log = logging.getLogger("eqsynth")


class _Formatter(logging.Formatter):
    def format(self, record):
        return f"{record.levelname}: {record.getMessage()}"


def _setup_logging(verbose: bool):
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(_Formatter())
    log.handlers[:] = [h]
    log.setLevel(logging.DEBUG if verbose else logging.INFO)
    log.propagate = False


def _common(p: argparse.ArgumentParser):
    p.add_argument("program", nargs="+", help="program file(s) in the textual IR")
    p.add_argument("--lib", default=None, help="library JSON (default: bundled sample library)")
    clk = p.add_mutually_exclusive_group()
    clk.add_argument("--clock-mhz", type=float, help="target clock frequency in MHz")
    clk.add_argument("--clock-ns", type=float, help="target clock period in ns")
    p.add_argument("--top-k", type=int, default=3, help="chaining paths kept per node pair")
    p.add_argument("--max-iters", type=int, default=Limits.max_iterations)
    p.add_argument("--node-limit", type=int, default=Limits.max_nodes)
    p.add_argument("--class-limit", type=int, default=Limits.max_classes)
    p.add_argument("--timeout-s", type=float, default=60.0,
                   help="time limit for saturation and for the exact solver")
    p.add_argument("--per-operation", action="store_true",
                   help="only use implementations covering a single operator")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for randomized generators; synthesis itself is deterministic")
    p.add_argument("-o", "--output", default=".", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="programs processed in parallel")
    p.add_argument("-v", "--verbose", action="store_true")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"ERROR: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="eqsynth", description="Joint implementation selection "
                                 "and scheduling over e-graphs, emitting pipelined Verilog.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("synth", help="synthesize programs to Verilog")
    _common(s)
    s.add_argument("--solver", choices=("asap", "exact", "export-lp"), default="asap")
    s.add_argument("--stamp", action="store_true", help="write a timestamp into the report")
    d = sub.add_parser("dot", help="write program and saturated e-graph as Graphviz text")
    _common(d)
    e = sub.add_parser("export-lp", help="write the joint MILP in CPLEX LP format")
    _common(e)
    pth = sub.add_parser("paths", help="write the top-k chaining path table as CSV")
    _common(pth)
    b = sub.add_parser("bench", help="run the benchmark suite and write a CSV")
    b.add_argument("--lib", default=None)
    b.add_argument("--clock-mhz", type=float, nargs="+", default=[100.0, 200.0, 400.0])
    b.add_argument("--solver", nargs="+", choices=("asap", "exact"), default=["asap"])
    b.add_argument("--synthetic", type=int, nargs="*", default=[],
                   help="add synthetic programs of these sizes")
    b.add_argument("--dtype", choices=("int", "float"), default="int")
    b.add_argument("--seed", type=int, default=0, help="seed for synthetic programs")
    b.add_argument("--top-k", type=int, default=3)
    b.add_argument("--timeout-s", type=float, default=60.0)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("-o", "--output", default="bench.csv", help="CSV path")
    b.add_argument("-v", "--verbose", action="store_true")
    return ap


def _clock(args) -> float:
    if args.clock_ns is not None:
        return args.clock_ns
    if args.clock_mhz is not None:
        return clock_ns(args.clock_mhz)
    return clock_ns(100.0)


def _process(args, path: str) -> int:
    """Run one program through the requested command; returns an exit code."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        log.error(f"{path}: {e.strerror}")
        return EXIT_IO
    name = Path(path).stem
    out = Path(args.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        p = parse_program(text, name)
        lib = resolve_library(args.lib)
        t_clk = _clock(args)
        limits = Limits(args.max_iters, args.class_limit, args.node_limit, args.timeout_s)
        solver = getattr(args, "solver", "asap")
        opts = Options(t_clk, solver, args.top_k, limits=limits, timeout=args.timeout_s,
                       per_operation=args.per_operation)
        res = analyze(p, lib, opts)
        sat = res.saturation
        limited = not sat.saturated
        if limited:
            log.warning(f"{name}: saturation stopped early ({sat.stop_reason}) after "
                        f"{sat.iterations} iterations")
        log.info(f"{name}: {sat.classes} classes, {sat.nodes} e-nodes, "
                 f"{len(res.space.nodes)} usable implementations, "
                 f"{len(res.constraints)} chaining paths")

        if args.command == "dot":
            (out / f"{name}.program.dot").write_text(program_to_dot(p))
            (out / f"{name}.egraph.dot").write_text(res.graph.to_dot())
        elif args.command == "paths":
            (out / f"{name}.paths.csv").write_text(res.constraints.to_csv(res.space))
        elif args.command == "export-lp" or solver == "export-lp":
            model = build_model(res.space, res.constraints, name=name)
            (out / f"{name}.lp").write_text(export_lp(model))
            log.info(f"{name}: wrote {len(model.rows)} rows to {name}.lp")
        else:
            schedule(res, solver, args.timeout_s)
            sol = res.solution
            if not res.violations.ok:
                log.error(f"{name}: solution violates {len(res.violations)} model rows")
                return EXIT_UNSCHEDULABLE
            nl = build_netlist(sol, res.space, p)
            (out / f"{name}.v").write_text(to_verilog(nl, res.space.lib))
            (out / f"{name}.sched.json").write_text(sol.dumps(res.space))
            report = emit_schedule_report(sol, res.space, p)
            if args.stamp:
                report = f"generated: {datetime.datetime.now().isoformat(timespec='seconds')}\n" + report
            (out / f"{name}.report.txt").write_text(report)
            log.info(f"{name}: latency {sol.latency} cycles, {sol.impl_count} implementations "
                     f"({sol.solver}, {sol.status})")
            if sol.status == "timeout":
                log.warning(f"{name}: exact search hit its limit; best solution written")
                return EXIT_TIMEOUT
        return EXIT_SATURATION_LIMIT if limited else EXIT_OK
    except (IRError, LibraryError, EGraphError) as e:
        log.error(f"{path}: {e}")
        return EXIT_PARSE
    except InfeasibleClockError as e:
        log.error(f"{name}: {e}")
        return EXIT_INFEASIBLE_CLOCK
    except (UnschedulableError, CodegenError) as e:
        log.error(f"{name}: {e}")
        return EXIT_UNSCHEDULABLE
    except TimeoutError as e:
        log.error(f"{name}: {e}")
        return EXIT_TIMEOUT
    except OSError as e:
        log.error(f"{e}")
        return EXIT_IO


def _worker(job):
    args, path = job
    _setup_logging(args.verbose)
    return _process(args, path)


def _bench(args) -> int:
    programs = bundled_benchmarks()
    seeds = {}
    for n in args.synthetic:
        p = generate_synthetic(n, args.dtype, args.seed)
        programs[p.name] = p
        seeds[p.name] = args.seed
    try:
        resolve_library(args.lib)
    except (OSError, LibraryError) as e:
        log.error(f"{args.lib}: {e}")
        return EXIT_PARSE
    rows = run_suite(SuiteConfig(programs, args.lib, tuple(args.clock_mhz), tuple(args.solver),
                                 args.top_k, args.timeout_s, args.jobs, seeds))
    try:
        Path(args.output).write_text(rows_to_csv(rows))
    except OSError as e:
        log.error(f"{args.output}: {e.strerror}")
        return EXIT_IO
    bad = [r for r in rows if r["status"] not in ("optimal", "feasible")]
    for r in bad:
        log.warning(f"{r['benchmark']} @ {r['clock_mhz']} MHz ({r['solver']}): {r['status']}")
    log.info(f"wrote {len(rows)} rows to {args.output}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    _setup_logging(args.verbose)
    if args.command == "bench":
        return _bench(args)
    if args.top_k < 1 or args.jobs < 1:
        log.error("--top-k and --jobs must be at least 1")
        return EXIT_USAGE
    for v in ("max_iters", "node_limit", "class_limit", "timeout_s"):
        if getattr(args, v) <= 0:
            log.error(f"--{v.replace('_', '-')} must be positive")
            return EXIT_USAGE
    if args.jobs > 1 and len(args.program) > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            codes = list(ex.map(_worker, [(args, p) for p in args.program]))
    else:
        codes = [_process(args, p) for p in args.program]
    return max(codes)


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
