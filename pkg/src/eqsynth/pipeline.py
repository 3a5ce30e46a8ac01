"""End-to-end flow: parse, saturate, analyze, schedule, validate, emit."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .asap import asap_schedule
from .codegen import build_netlist, check_netlist_timing, emit_schedule_report, to_verilog
from .egraph import EGraph, Limits, SaturationReport, egraph_from_program, saturate
from .ir import Program
from .library import ImplLibrary, enumerate_impl_rules
from .milp import JointModel, ViolationReport, build_model, check_solution, solve_exact
from .solution import Solution
from .timing import (DEFAULT_DEPTH_LIMIT, DEFAULT_TOP_K, ChainingConstraintSet, DesignSpace,
                     build_design_space, enumerate_top_k_paths, paused_gc)

SOLVERS = ("asap", "exact", "export-lp")


@dataclass
class Options:
    t_clk: float
    solver: str = "asap"
    top_k: int = DEFAULT_TOP_K
    depth_limit: int = DEFAULT_DEPTH_LIMIT
    limits: Limits = field(default_factory=Limits)
    timeout: float = 60.0
    per_operation: bool = False


@dataclass
class Result:
    program: Program
    graph: EGraph
    saturation: SaturationReport
    space: DesignSpace
    constraints: ChainingConstraintSet
    solution: Solution | None = None
    violations: ViolationReport | None = None
    model: JointModel | None = None
    timings: dict[str, float] = field(default_factory=dict)

    def netlist(self):
        return build_netlist(self.solution, self.space, self.program)

    def verilog(self) -> str:
        return to_verilog(self.netlist(), self.space.lib)

    def report(self) -> str:
        return emit_schedule_report(self.solution, self.space, self.program)

    def timing_violations(self):
        return check_netlist_timing(self.netlist(), self.space.lib, self.space.t_clk)


def saturated_graph(p: Program, lib: ImplLibrary, limits: Limits | None = None,
                    per_operation: bool = False) -> tuple[EGraph, SaturationReport]:
    if per_operation:
        lib = lib.per_operation()
    g = egraph_from_program(p)
    rules = list(lib.algebraic_rules) + enumerate_impl_rules(lib)
    rep = saturate(g, rules, limits or Limits())
    return g, rep


def analyze(p: Program, lib: ImplLibrary, opts: Options) -> Result:
    times = {}
    t0 = time.perf_counter()
    use = lib.per_operation() if opts.per_operation else lib
    g, rep = saturated_graph(p, use, opts.limits)
    times["saturate"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    space = build_design_space(g, use, opts.t_clk)
    cs = enumerate_top_k_paths(space, opts.top_k, opts.depth_limit)
    times["analyze"] = time.perf_counter() - t0
    return Result(p, g, rep, space, cs, timings=times)


def schedule(res: Result, solver: str, timeout: float = 60.0) -> Result:
    t0 = time.perf_counter()
    with paused_gc():
        if solver == "asap":
            res.solution = asap_schedule(res.space, res.constraints)
        elif solver == "exact":
            seed = asap_schedule(res.space, res.constraints)
            res.solution = solve_exact(res.space, res.constraints, timeout=timeout, incumbent=seed)
        else:
            raise ValueError(f"unknown solver {solver!r}")
        res.timings["schedule"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        res.model = build_model(res.space, res.constraints, name=res.program.name)
        res.violations = check_solution(res.solution, res.model)
        res.timings["validate"] = time.perf_counter() - t0
    return res


def synthesize(p: Program, lib: ImplLibrary, opts: Options) -> Result:
    res = analyze(p, lib, opts)
    if opts.solver == "export-lp":
        with paused_gc():
            res.model = build_model(res.space, res.constraints, name=p.name)
        return res
    return schedule(res, opts.solver, opts.timeout)
