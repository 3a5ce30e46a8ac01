import dataclasses
import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from eqsynth.asap import asap_schedule
from eqsynth.egraph import egraph_from_program, saturate
from eqsynth.ir import parse_program
from eqsynth.library import enumerate_impl_rules
from eqsynth.milp import (ROW_KINDS, build_model, check_solution, export_lp, parse_lp,
                          solution_vector, solve_exact)
from eqsynth.pipeline import Options, analyze, schedule
from eqsynth.solution import Solution, needed_classes, schedule_selection
from eqsynth.timing import UnschedulableError, build_design_space, clock_ns, enumerate_top_k_paths

from conftest import FIG1, FIG1_MHZ, comb, entry, make_library, random_instance, space_of

FIG3_LIB = [
    comb("LUT_add", "(add ?A ?B)", {"A": 0.5, "B": 0.5}),
    comb("LUT_neg", "(neg ?A)", {"A": 0.5}),
    entry("DSP_M", "(mul ?A ?B)", [("P1", 1, {"A": 2.5, "B": 2.5}, 0.85, 0.0)]),
    entry("DSP_NEG_ADM", "(neg (mul (add ?A ?D) ?B))",
          [("M1P1", 2, {"A": 0.4, "D": 0.4, "B": 0.4}, 0.85, 1.5)]),
]


def fig3_space(t_clk=10.0):
    lib = make_library(FIG3_LIB, t_net=0.6, t_su=0.1, t_clkq=0.15,
                       rules=[("neg-mul", "(mul (neg ?a) ?b) -> (neg (mul ?a ?b))")])
    g = egraph_from_program(parse_program(FIG1))
    saturate(g, list(lib.algebraic_rules) + enumerate_impl_rules(lib))
    return g, build_design_space(g, lib, t_clk, prune_dominated=False)


def test_model_variables_follow_graph():
    g, sp = fig3_space()
    cs = enumerate_top_k_paths(sp)
    m = build_model(sp, cs)
    # independent count from the serialized graph
    doc = g.to_json()
    impl = sum(1 for c in doc["classes"] for n in c["nodes"] if "impl" in n)
    assert len([v for v in m.binaries if v.startswith("b_n")]) == impl == len(sp.nodes)
    assert len([v for v in m.binaries if v.startswith("b_c")]) == len(sp.classes)
    assert all(r.kind in ROW_KINDS for r in m.rows)
    # one chaining row per path that needs a register, along combinational nodes only
    binding = list(cs.rows(binding_only=True))
    assert m.count("chaining") == len(binding)
    for path, q in cs.rows():
        assert q >= 0 and all(sp.nodes[v].combinational for v in path.nodes[1:-1])


def test_single_node_model():
    lib = make_library([comb("N", "(neg ?p)", {"p": 0.1})])
    sp = space_of("a = input i8\nx = neg i9 a\nreturn x", lib, 5.0)
    cs = enumerate_top_k_paths(sp)
    m = build_model(sp, cs)
    sol = solve_exact(sp, cs)
    x = solution_vector(sol, m)
    assert x["b_n0"] == 1 and x["s_n0"] == 0 and x["f_n0"] == 0
    assert m.objective_value(x) == pytest.approx(m.alpha) == pytest.approx(1 / 4)
    assert check_solution(sol, m).ok


def test_multiple_outputs_use_makespan_variable():
    lib = make_library([comb("N", "(neg ?p)", {"p": 0.1}),
                        entry("X", "(xor ?p ?q)", [("r", 2, {"p": 0.1, "q": 0.1}, 0.5, 1.0)])])
    sp = space_of("a = input i8\nb = input i8\nx = neg i9 a\ny = xor i8 a b\nreturn x y",
                  lib, 5.0)
    m = build_model(sp, enumerate_top_k_paths(sp))
    assert m.objective["F"] == 1.0
    assert m.count("makespan") == 2
    sol = solve_exact(sp)
    assert sol.latency == 2
    assert solution_vector(sol, m)["F"] == 2


def test_missing_child_reported():
    g, sp = fig3_space()
    cs = enumerate_top_k_paths(sp)
    m = build_model(sp, cs)
    sol = solve_exact(sp, cs)
    root = sp.roots[0]
    luts = [i for i in sp.class_nodes[root] if sp.nodes[i].impl[0] == "LUT_neg"]
    broken = Solution({root: luts[0]}, {luts[0]: 0}, {luts[0]: 0}, {root: 0}, 0, "x", "feasible")
    rep = check_solution(broken, m)
    assert "node-complete" in rep.kinds()
    assert check_solution(sol, m).ok


def test_exact_matches_fig1(lib):
    p = parse_program(FIG1)
    res = schedule(analyze(p, lib, Options(clock_ns(FIG1_MHZ))), "exact")
    assert res.solution.latency == 2 and res.solution.impl_count == 1
    assert res.solution.status == "optimal"
    res = schedule(analyze(p, lib, Options(clock_ns(FIG1_MHZ), per_operation=True)), "exact")
    assert res.solution.latency == 3


def test_exact_picks_lower_latency():
    lib = make_library([entry("N", "(neg ?p)", [("l1", 1, {"p": 0.2}, 0.5, 1.0),
                                                ("l3", 3, {"p": 0.1}, 0.2, 0.5)])])
    sp = space_of("a = input i8\nx = neg i9 a\nreturn x", lib, 5.0)
    sol = solve_exact(sp)
    assert [sp.nodes[i].impl[1] for i in sol.selected] == ["l1"]


def test_exact_budget_reports_timeout():
    _, sp = fig3_space()
    with pytest.raises(TimeoutError):
        solve_exact(sp, node_budget=0)
    seeded = solve_exact(sp, node_budget=0, incumbent=asap_schedule(sp, enumerate_top_k_paths(sp)))
    assert seeded.status == "timeout"


def test_lp_round_trip():
    _, sp = fig3_space(2.5)
    cs = enumerate_top_k_paths(sp)
    m = build_model(sp, cs)
    text = export_lp(m)
    assert all(len(line) <= 200 for line in text.splitlines())
    lp = parse_lp(text)
    assert len(lp.rows) == len(m.rows)
    assert sorted(lp.binaries) == sorted(m.binaries)
    sol = solve_exact(sp, cs)
    x = solution_vector(sol, m)
    assert lp.check(x) == []
    assert lp.objective_value(x) == pytest.approx(sol.latency + m.alpha * sol.impl_count)
    for r, q in zip(sorted(m.rows, key=lambda r: r.name), sorted(lp.rows, key=lambda r: r.name)):
        assert r.name == q.name and r.sense == q.sense and r.rhs == pytest.approx(q.rhs)
        assert {k: v for k, v in r.coeffs.items() if v} == pytest.approx(q.coeffs)


def test_lp_wraps_long_rows():
    p = parse_program("\n".join([f"x{i} = input i8" for i in range(40)]) +
                      "\ny = xor i8 x0 x1\nreturn y")
    lib = make_library([entry("X", "(xor ?p ?q)",
                              [(f"c{i}", 1 + i, {"p": 0.1, "q": 0.1}, 0.5, 1.0) for i in range(60)])])
    g = egraph_from_program(p)
    saturate(g, enumerate_impl_rules(lib))
    sp = build_design_space(g, lib, 5.0)
    text = export_lp(build_model(sp, enumerate_top_k_paths(sp)))
    assert max(len(line) for line in text.splitlines()) <= 200
    assert len(parse_lp(text).rows) == len(build_model(sp, enumerate_top_k_paths(sp)).rows)


def test_no_selection_exists():
    # the only root implementation reads its own class
    lib = make_library([comb("N", "(neg ?p)", {"p": 0.1})])
    sp = space_of("a = input i8\nx = neg i9 a\nreturn x", lib, 5.0)
    n = sp.nodes[0]
    sp.nodes[0] = dataclasses.replace(n, args=(n.cls,))
    sp.__post_init__()
    with pytest.raises(UnschedulableError):
        solve_exact(sp)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1_000_000))
def test_exact_not_worse_than_asap_and_feasible(seed):
    inst = random_instance(seed, max_ops=5)
    if inst is None:
        return
    _, _, sp, cs = inst
    a = asap_schedule(sp, cs)
    e = solve_exact(sp, cs, timeout=20, incumbent=a)
    m = build_model(sp, cs)
    assert check_solution(e, m).ok
    assert (e.latency, e.impl_count) <= (a.latency, a.impl_count)


def _brute_force_optimum(sp):
    """Best (latency, count) over every acyclic one-node-per-class selection."""
    classes = sorted(sp.class_nodes)
    best = None
    for combo in itertools.product(*(sp.class_nodes[c] for c in classes)):
        full = dict(zip(classes, combo))
        keep = needed_classes(sp, full)
        chosen = {c: i for c, i in full.items() if c in keep}
        try:
            sol = schedule_selection(sp, chosen, "brute")
        except UnschedulableError:
            continue
        key = (sol.latency, sol.impl_count)
        best = key if best is None else min(best, key)
    return best


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 1_000_000), st.sampled_from([2.5, 4.0, 6.0]))
def test_exact_matches_brute_force(seed, t_clk):
    inst = random_instance(seed, max_ops=4, t_clk=t_clk)
    if inst is None:
        return
    _, _, sp, cs = inst
    if math.prod(len(v) for v in sp.class_nodes.values()) > 20_000:
        return
    want = _brute_force_optimum(sp)
    got = solve_exact(sp, cs)
    assert got.status == "optimal"
    assert (got.latency, got.impl_count) == want
