import math
import random
import re

import pytest
from hypothesis import given, settings, strategies as st

from eqsynth.bench import generate_synthetic
from eqsynth.ir import (ArityError, DataType, DuplicateDefinitionError, IRError, ParseError,
                        TypeMismatchError, UndefinedOperandError, apply_op, evaluate,
                        format_program, natural_bits, parse_program, program_to_dot, wrap)

from conftest import FIG1


def test_minimal_program():
    p = parse_program("x = input i16; y = input i16; z = add x y; return z")
    assert len(p.values) == 3
    assert p.outputs == ["z"]
    assert p["z"].dtype == DataType("int", 16)


def test_fig1_kernel_ops():
    p = parse_program(FIG1)
    assert sorted(v.op for v in p.values) == sorted(["input"] * 3 + ["add", "neg", "mul"])
    assert p[p.outputs[0]].op == "mul"
    assert p["m"].dtype == DataType("int", 32)


@pytest.mark.parametrize("text, err", [
    ("x = input i16\nz = add x\nreturn z", ArityError),
    ("x = input i16\nz = add i17 x y\nreturn z", UndefinedOperandError),
    ("x = input i16\nx = input i16\nreturn x", DuplicateDefinitionError),
    ("x = input i16\ny = input f32\nz = add i17 x y\nreturn z", TypeMismatchError),
    ("x = input i16\nz = exp i16 x\nreturn z", TypeMismatchError),
    ("x = input i16\nz = add i40 x x\nreturn z", TypeMismatchError),
    ("x = input i16\nz = frob i16 x\nreturn z", ParseError),
    ("x = input i16", ParseError),
    ("x = input i16\nreturn x\ny = input i16", ParseError),
    ("c = const i8 300\nreturn c", TypeMismatchError),
    ("x = input q16\nreturn x", ParseError),
])
def test_parse_errors(text, err):
    with pytest.raises(err):
        parse_program(text)


def test_error_carries_position():
    with pytest.raises(UndefinedOperandError) as e:
        parse_program("x = input i16\nz = add i17 x nope\nreturn z")
    assert (e.value.line, e.value.col) == (2, 15)


def test_declared_widths_checked_against_natural():
    i16 = DataType("int", 16)
    assert natural_bits("add", [i16, i16]) == 17
    assert natural_bits("mul", [i16, i16]) == 32
    assert natural_bits("mul", [DataType("int", 40), DataType("int", 40)]) == 64
    assert natural_bits("xor", [i16, DataType("int", 8)]) == 16


def test_dot_counts():
    p = parse_program(FIG1)
    dot = program_to_dot(p)
    nodes = re.findall(r'^\s*"\w+" \[', dot, re.M)
    edges = re.findall(r'^\s*"(\w+)" -> "(\w+)"', dot, re.M)
    assert len(nodes) == 6
    # independent count: one edge per operand reference
    assert len(edges) == sum(len(v.operands) for v in p.values) == 5
    inputs = {v.id for v in p.inputs}
    assert len([e for e in edges if e[0] not in inputs]) == 2


def test_dot_inputs_only():
    p = parse_program("a = input i8\nb = input i8\nreturn a")
    dot = program_to_dot(p)
    assert len(re.findall(r'^\s*"\w+" \[', dot, re.M)) == 2
    assert "->" not in dot


def test_dot_deterministic():
    assert program_to_dot(parse_program(FIG1)) == program_to_dot(parse_program(FIG1))


def test_evaluate_fig1():
    p = parse_program(FIG1)
    assert evaluate(p, {"a": 1, "b": 2, "c": 3})["m"] == -9
    assert evaluate(p, {"a": -32768, "b": -32768, "c": -32768})["m"] == wrap(
        -(-65536) * -32768, DataType("int", 32))


def test_integer_semantics():
    i8 = DataType("int", 8)
    assert apply_op("add", i8, [100, 100]) == -56
    assert apply_op("div", i8, [-7, 2]) == -3
    assert apply_op("div", i8, [5, 0]) == 0
    assert apply_op("shr", i8, [-8, 1]) == -4
    assert apply_op("cmp", DataType("uint", 1), [1, 2]) == 1
    assert apply_op("add", DataType("uint", 8), [200, 100]) == 44


def test_float_semantics_round_to_f32():
    f = DataType("float", 32)
    assert apply_op("add", f, [0.1, 0.2]) == pytest.approx(0.3, rel=1e-6)
    assert apply_op("recip", f, [0.0]) == math.inf
    assert math.isnan(apply_op("sqrt", f, [-1.0]))


@given(st.integers(-(1 << 70), 1 << 70), st.integers(1, 64), st.booleans())
def test_wrap_range(x, bits, signed):
    t = DataType("int" if signed else "uint", bits)
    r = wrap(x, t)
    assert t.lo <= r <= t.hi
    assert (r - x) % (1 << bits) == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.sampled_from(["int", "float"]), st.integers(0, 10_000))
def test_round_trip_and_topology(size, kind, seed):
    p = generate_synthetic(size, kind, seed)
    q = parse_program(format_program(p), p.name)
    assert q.structure() == p.structure()
    for v in p.values:
        assert all(p.index(a) < p.index(v.id) for a in v.operands)


_TOKENS = ["x", "y", "z", "=", "input", "const", "add", "neg", "mul", "i16", "u8", "f32",
           "return", "7", "#", ";", "\n", "cmp", "i99"]


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(_TOKENS), max_size=25))
def test_parser_is_total(tokens):
    text = " ".join(tokens)
    try:
        parse_program(text)
    except IRError:
        pass


def test_random_program_evaluates_reproducibly():
    p = generate_synthetic(30, "int", 4)
    rng = random.Random(0)
    vec = {v.id: rng.randint(v.dtype.lo, v.dtype.hi) for v in p.inputs}
    assert evaluate(p, vec) == evaluate(p, vec)
