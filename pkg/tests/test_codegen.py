import random
import re

import pytest
from hypothesis import given, settings, strategies as st

from eqsynth.asap import asap_schedule
from eqsynth.bench import bundled_benchmarks, generate_synthetic
from eqsynth.codegen import (CodegenError, build_netlist, check_netlist_timing, emit_netlist,
                             emit_schedule_report, simulate, to_verilog)
from eqsynth.ir import evaluate, parse_program
from eqsynth.pipeline import Options, analyze, schedule
from eqsynth.timing import clock_ns, enumerate_top_k_paths

from conftest import FIG1_MHZ, space_of
from test_timing import CHAIN, chain_lib


def run(p, lib, mhz, solver="asap", **kw):
    return schedule(analyze(p, lib, Options(clock_ns(mhz), **kw)), solver)


def vectors(p, n, seed=0):
    rng = random.Random(seed)
    return [{v.id: rng.randint(v.dtype.lo, v.dtype.hi) for v in p.inputs} for _ in range(n)]


def test_fig1_single_dsp_instance(lib, fig1):
    res = run(fig1, lib, FIG1_MHZ)
    nl = res.netlist()
    [inst] = nl.instances
    assert inst.func == "-((A+D)*B)"
    assert inst.config == "A0B0M1P1"
    v = res.verilog()
    assert ".MREG(1)" in v and ".PREG(1)" in v and ".USE_PREADD(1)" in v
    assert not re.search(r"\bLUT_", v)
    assert 'func = "-((A+D)*B)", timing = "A0B0M1P1", start = 0' in v
    assert nl.latency == 2


def test_rope_fragment_register_chains(lib):
    p = bundled_benchmarks()["rope_fragment"]
    res = run(p, lib, 100.0, "exact")
    assert res.solution.status == "optimal"
    assert run(p, lib, 100.0).solution.latency == res.solution.latency
    nl = res.netlist()
    assert sorted(i.identifier for i in nl.instances) == [
        "DIV_IP", "DSP48E2_C_SUB_ADM", "DSP48E2_MC"]
    div = next(i for i in nl.instances if i.identifier == "DIV_IP")
    sub = next(i for i in nl.instances if i.identifier == "DSP48E2_C_SUB_ADM")
    assert sub.func == "C-((A+D)*B)"
    assert sub.start == div.finish == div.profile.latency
    # operands available at cycle 0 wait in register chains until the divider is done
    waits = {c.port: c.depth for c in sub.connections}
    assert waits["C"] == 0
    assert waits["A"] == waits["B"] == waits["D"] == sub.start
    v = to_verilog(nl, lib)
    assert f"_d{sub.start}" in v
    assert not check_netlist_timing(nl, lib, clock_ns(100.0))


def test_identity_program_passthrough(lib):
    p = parse_program("a = input i8\nreturn a")
    res = run(p, lib, 100.0)
    nl = res.netlist()
    assert nl.instances == [] and nl.latency == 0
    v = res.verilog()
    assert "assign out_a = c" in v
    assert simulate(nl, [{"a": 5}, {"a": -3}], p) == [{"a": 5}, {"a": -3}]


def test_verilog_is_deterministic(lib, fig1):
    a = run(fig1, lib, 200.0).verilog()
    b = run(fig1, lib, 200.0).verilog()
    assert a == b
    assert a.startswith("module add_neg_mul (")
    assert a.rstrip().endswith("endmodule")


def test_report_lists_instances(lib, fig1):
    res = run(fig1, lib, FIG1_MHZ)
    text = emit_schedule_report(res.solution, res.space, fig1)
    assert "latency = 2 cycles" in text
    assert "DSP48E2_NEG_ADM" in text


def test_timing_check_catches_missing_register():
    sp = space_of(CHAIN, chain_lib(), 4.0)
    sol = asap_schedule(sp, enumerate_top_k_paths(sp))
    nl = build_netlist(sol, sp, parse_program(CHAIN))
    assert not check_netlist_timing(nl, sp.lib, 4.0)
    assert any(c.depth for i in nl.instances for c in i.connections)
    # without the inserted register the 5.5 ns chain exceeds the 4 ns clock
    for inst in nl.instances:
        for c in inst.connections:
            c.depth = 0
    bad = check_netlist_timing(nl, sp.lib, 4.0)
    assert bad and max(v.delay for v in bad) == pytest.approx(5.5)


def test_float_simulation_matches(lib):
    p = bundled_benchmarks()["fp_gelu"]
    nl = run(p, lib, 200.0).netlist()
    vecs = [{v.id: float(i) / 3 for v in p.inputs} for i in range(1, 5)]
    for vec, out in zip(vecs, simulate(nl, vecs, p)):
        want = evaluate(p, vec)
        assert out == {k: pytest.approx(want[k], rel=1e-5) for k in out}


@pytest.mark.parametrize("name", ["add_neg_mul", "fir4", "horner", "bitmix", "neg_products"])
@pytest.mark.parametrize("mhz", [100.0, 400.0])
def test_bundled_integer_simulation(lib, name, mhz):
    p = bundled_benchmarks()[name]
    res = run(p, lib, mhz)
    nl = res.netlist()
    vecs = vectors(p, 25)
    assert simulate(nl, vecs, p) == [{o: evaluate(p, v)[o] for o in p.outputs} for v in vecs]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 15), st.integers(0, 100_000), st.sampled_from([100.0, 250.0, 400.0]))
def test_random_netlists_simulate_and_close_timing(lib, size, seed, mhz):
    p = generate_synthetic(size, "int", seed)
    for solver in ("asap", "exact"):
        res = run(p, lib, mhz, solver)
        nl = res.netlist()
        assert not check_netlist_timing(nl, lib, clock_ns(mhz))
        vecs = vectors(p, 10, seed)
        assert simulate(nl, vecs, p) == [{o: evaluate(p, v)[o] for o in p.outputs}
                                         for v in vecs]


def test_emit_netlist_module_name(lib, fig1):
    res = run(fig1, lib, 100.0)
    assert emit_netlist(res.solution, res.space, fig1, "top").startswith("module top (")
