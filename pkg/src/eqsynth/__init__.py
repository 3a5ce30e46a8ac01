"""Joint implementation selection and scheduling over e-graphs."""
from .asap import asap_schedule
from .bench import bundled_benchmarks, generate_synthetic
from .codegen import build_netlist, check_netlist_timing, simulate, to_verilog
from .egraph import EGraph, Limits, egraph_from_program, saturate
from .ir import DataType, Program, evaluate, format_program, parse_program
from .library import ImplLibrary, resolve_library, sample_library
from .milp import build_model, check_solution, export_lp, parse_lp, solve_exact
from .pipeline import Options, Result, analyze, schedule, synthesize
from .solution import Solution
from .timing import build_design_space, cuts, enumerate_top_k_paths

__version__ = "0.1.0"

__all__ = [
    "DataType", "EGraph", "ImplLibrary", "Limits", "Options", "Program", "Result", "Solution",
    "analyze", "asap_schedule", "build_design_space", "build_model", "build_netlist",
    "bundled_benchmarks", "check_netlist_timing", "check_solution", "cuts",
    "egraph_from_program", "enumerate_top_k_paths", "evaluate", "export_lp", "format_program",
    "generate_synthetic", "parse_lp", "parse_program", "resolve_library", "sample_library",
    "saturate", "schedule", "simulate", "solve_exact", "synthesize", "to_verilog",
]
