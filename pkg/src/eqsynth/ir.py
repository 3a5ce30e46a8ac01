"""Straight-line SSA expression programs.

Textual form, one statement per line::

    a = input i16
    k = const i16 3
    s = add i17 a b
    return s

Widths are declared on every value and checked against the operator's
natural result width; they are never inferred.
"""
from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass, field


class IRError(Exception):
    """Base class for program errors."""


class ParseError(IRError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        loc = f"{line}:{col}: " if line else ""
        super().__init__(f"{loc}{message}")


class ArityError(ParseError):
    pass


class UndefinedOperandError(ParseError):
    pass


class TypeMismatchError(ParseError):
    pass


class DuplicateDefinitionError(ParseError):
    pass


@dataclass(frozen=True, order=True)
class DataType:
    kind: str  # "int" | "uint" | "float"
    bits: int

    def __post_init__(self):
        if self.kind not in ("int", "uint", "float"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if not 1 <= self.bits <= 64:
            raise ValueError(f"bit width {self.bits} outside [1, 64]")
        if self.kind == "float" and self.bits != 32:
            raise ValueError("only f32 floats are supported")

    @property
    def is_float(self) -> bool:
        return self.kind == "float"

    @property
    def signed(self) -> bool:
        return self.kind == "int"

    @property
    def lo(self) -> int:
        return -(1 << (self.bits - 1)) if self.signed else 0

    @property
    def hi(self) -> int:
        return (1 << (self.bits - 1)) - 1 if self.signed else (1 << self.bits) - 1

    def __str__(self) -> str:
        return {"int": "i", "uint": "u", "float": "f"}[self.kind] + str(self.bits)

    @classmethod
    def parse(cls, token: str) -> "DataType":
        m = re.fullmatch(r"([iuf])(\d+)", token)
        if not m:
            raise ValueError(f"bad type {token!r}")
        kind = {"i": "int", "u": "uint", "f": "float"}[m.group(1)]
        return cls(kind, int(m.group(2)))


# operator -> arity
ARITY = {
    "add": 2, "sub": 2, "neg": 1, "mul": 2, "div": 2,
    "shl": 2, "shr": 2, "and": 2, "or": 2, "xor": 2, "cmp": 2,
    "exp": 1, "log": 1, "sqrt": 1, "recip": 1,
}
FLOAT_ONLY = {"exp", "log", "sqrt", "recip"}
INT_ONLY = {"shl", "shr", "and", "or", "xor"}
RING_OPS = {"add", "sub", "neg", "mul"}
LEAF_OPS = {"input", "const"}


def natural_bits(op: str, operands: list[DataType]) -> int:
    """Widest result width an integer operator can usefully declare."""
    w = [t.bits for t in operands]
    if op in ("add", "sub"):
        n = max(w) + 1
    elif op == "mul":
        n = sum(w)
    elif op == "neg":
        # -(min) needs one more bit
        n = w[0] + 1
    elif op in ("shl", "cmp"):
        n = 64
    elif op in ("div", "shr"):
        n = w[0]
    else:
        n = max(w)
    return min(n, 64)


def wrap(value: int, dtype: DataType) -> int:
    """Reduce an integer to the two's-complement range of ``dtype``."""
    value &= (1 << dtype.bits) - 1
    if dtype.signed and value >= 1 << (dtype.bits - 1):
        value -= 1 << dtype.bits
    return value


def to_f32(x: float) -> float:
    try:
        return struct.unpack("f", struct.pack("f", x))[0]
    except OverflowError:
        return math.copysign(math.inf, x)


def apply_op(op: str, dtype: DataType, args: list) -> int | float:
    """Evaluate one operator and round the result to ``dtype``.

    Integer division truncates toward zero; division by zero yields 0.
    Shift amounts are taken modulo 64.
    """
    if dtype.is_float or any(isinstance(a, float) for a in args):
        return _apply_float(op, dtype, [float(a) for a in args])
    if op == "add":
        r = args[0] + args[1]
    elif op == "sub":
        r = args[0] - args[1]
    elif op == "neg":
        r = -args[0]
    elif op == "mul":
        r = args[0] * args[1]
    elif op == "div":
        a, b = args
        r = 0 if b == 0 else abs(a) // abs(b) * (1 if (a < 0) == (b < 0) else -1)
    elif op == "shl":
        r = args[0] << (args[1] % 64)
    elif op == "shr":
        r = args[0] >> (args[1] % 64)
    elif op == "and":
        r = args[0] & args[1]
    elif op == "or":
        r = args[0] | args[1]
    elif op == "xor":
        r = args[0] ^ args[1]
    elif op == "cmp":
        r = int(args[0] < args[1])
    else:
        raise IRError(f"operator {op!r} has no integer semantics")
    return wrap(r, dtype)


def _apply_float(op: str, dtype: DataType, a: list[float]):
    try:
        if op == "add":
            r = a[0] + a[1]
        elif op == "sub":
            r = a[0] - a[1]
        elif op == "neg":
            r = -a[0]
        elif op == "mul":
            r = a[0] * a[1]
        elif op == "div":
            r = a[0] / a[1] if a[1] != 0 else math.copysign(math.inf, a[0]) if a[0] else math.nan
        elif op == "exp":
            r = math.exp(a[0])
        elif op == "log":
            r = math.log(a[0]) if a[0] > 0 else (-math.inf if a[0] == 0 else math.nan)
        elif op == "sqrt":
            r = math.sqrt(a[0]) if a[0] >= 0 else math.nan
        elif op == "recip":
            r = 1.0 / a[0] if a[0] != 0 else math.inf
        elif op == "cmp":
            return wrap(int(a[0] < a[1]), dtype) if not dtype.is_float else float(a[0] < a[1])
        else:
            raise IRError(f"operator {op!r} has no float semantics")
    except OverflowError:
        r = math.inf
    return to_f32(r)


@dataclass(frozen=True)
class Value:
    id: str
    op: str
    operands: tuple[str, ...]
    dtype: DataType
    payload: int | float | None = None


@dataclass
class Program:
    name: str
    values: list[Value]
    outputs: list[str]
    _index: dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._index = {v.id: i for i, v in enumerate(self.values)}

    def __getitem__(self, vid: str) -> Value:
        return self.values[self._index[vid]]

    def index(self, vid: str) -> int:
        return self._index[vid]

    @property
    def inputs(self) -> list[Value]:
        return [v for v in self.values if v.op == "input"]

    @property
    def operations(self) -> list[Value]:
        return [v for v in self.values if v.op not in LEAF_OPS]

    def structure(self) -> tuple:
        """Hashable structural form used for equality checks."""
        return (
            tuple((v.id, v.op, v.operands, v.dtype, v.payload) for v in self.values),
            tuple(self.outputs),
        )


_ID = r"[A-Za-z_][A-Za-z0-9_.]*"
_STMT = re.compile(rf"\s*({_ID})\s*=\s*(\S+)(.*)$")


def _col(raw: str, token: str, start: int = 0) -> int:
    i = raw.find(token, start)
    return i + 1 if i >= 0 else 1


def parse_program(text: str, name: str = "main") -> Program:
    values: list[Value] = []
    defined: dict[str, Value] = {}
    outputs: list[str] | None = None

    statements = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        code = raw.split("#", 1)[0]
        # ';' separates statements sharing a line
        statements.extend((lineno, raw, seg.rstrip()) for seg in code.split(";"))
    for lineno, raw, line in statements:
        if not line.strip():
            continue
        if outputs is not None:
            raise ParseError("statement after return", lineno, 1)
        tokens = line.split()
        if tokens[0] == "return":
            if len(tokens) < 2:
                raise ParseError("return needs at least one value", lineno, 1)
            for t in tokens[1:]:
                if t not in defined:
                    raise UndefinedOperandError(f"undefined value {t!r}", lineno, _col(raw, t, 6))
            outputs = tokens[1:]
            continue
        m = _STMT.match(line)
        if not m:
            raise ParseError("expected '<id> = <op> ...' or 'return'", lineno, 1)
        vid, op, rest = m.group(1), m.group(2), m.group(3).split()
        if vid in defined:
            raise DuplicateDefinitionError(f"{vid!r} already defined", lineno, _col(raw, vid))
        if op not in ARITY and op not in LEAF_OPS:
            raise ParseError(f"unknown operator {op!r}", lineno, _col(raw, op))
        if op in ARITY and rest and (not _is_dtype(rest[0]) or (
                rest[0] in defined and len(rest) == ARITY[op])):
            # type omitted: widest operand, or a single bit for comparisons
            args = rest
            known = [defined[a].dtype for a in args if a in defined]
            dtype = DataType("uint", 1) if op == "cmp" else max(
                known, key=lambda t: t.bits, default=DataType("int", 1))
        else:
            if not rest:
                raise ParseError("missing type", lineno, len(raw) + 1)
            try:
                dtype = DataType.parse(rest[0])
            except ValueError as e:
                raise ParseError(str(e), lineno, _col(raw, rest[0])) from None
            args = rest[1:]
        payload = None

        if op == "input":
            if args:
                raise ArityError("input takes no operands", lineno, _col(raw, args[0]))
        elif op == "const":
            if len(args) != 1:
                raise ArityError("const takes exactly one literal", lineno, 1)
            payload = _literal(args[0], dtype, lineno, _col(raw, args[0]))
            args = []
        else:
            if len(args) != ARITY[op]:
                raise ArityError(
                    f"{op} takes {ARITY[op]} operand(s), got {len(args)}", lineno, _col(raw, op))
            for a in args:
                if a not in defined:
                    raise UndefinedOperandError(
                        f"undefined value {a!r}", lineno, _col(raw, a))
            _check_types(op, dtype, [defined[a].dtype for a in args], lineno, _col(raw, op))

        v = Value(vid, op, tuple(args), dtype, payload)
        values.append(v)
        defined[vid] = v

    if outputs is None:
        raise ParseError("missing return statement", max(1, text.count("\n")), 1)
    return Program(name, values, outputs)


def _is_dtype(tok: str) -> bool:
    return re.fullmatch(r"[iu]\d+|f\d+", tok) is not None


def _literal(tok: str, dtype: DataType, line: int, col: int):
    try:
        if dtype.is_float:
            return to_f32(float(tok))
        val = int(tok, 0)
    except ValueError:
        raise ParseError(f"bad literal {tok!r} for {dtype}", line, col) from None
    if not dtype.lo <= val <= dtype.hi:
        raise TypeMismatchError(f"literal {val} does not fit {dtype}", line, col)
    return val


def _check_types(op: str, dtype: DataType, operands: list[DataType], line: int, col: int):
    floats = [t.is_float for t in operands]
    if any(floats) and not all(floats):
        raise TypeMismatchError(f"{op} mixes float and integer operands", line, col)
    is_float = all(floats)
    if op in FLOAT_ONLY and not is_float:
        raise TypeMismatchError(f"{op} needs f32 operands", line, col)
    if op in INT_ONLY and is_float:
        raise TypeMismatchError(f"{op} needs integer operands", line, col)
    if op == "cmp":
        if dtype.is_float:
            raise TypeMismatchError("cmp produces an integer", line, col)
        return
    if is_float != dtype.is_float:
        raise TypeMismatchError(f"{op} result type {dtype} does not match operands", line, col)
    if not is_float:
        limit = natural_bits(op, operands)
        if dtype.bits > limit:
            raise TypeMismatchError(
                f"{op} result declared {dtype} but at most {limit} bits are meaningful",
                line, col)


def format_program(p: Program) -> str:
    lines = []
    for v in p.values:
        if v.op == "input":
            lines.append(f"{v.id} = input {v.dtype}")
        elif v.op == "const":
            lit = repr(v.payload) if v.dtype.is_float else str(v.payload)
            lines.append(f"{v.id} = const {v.dtype} {lit}")
        else:
            lines.append(f"{v.id} = {v.op} {v.dtype} {' '.join(v.operands)}")
    lines.append("return " + " ".join(p.outputs))
    return "\n".join(lines) + "\n"


def program_to_dot(p: Program) -> str:
    out = [f'digraph "{p.name}" {{', "  rankdir=TB;"]
    for v in p.values:
        shape = "box" if v.op in LEAF_OPS else "ellipse"
        label = f"{v.id}: {v.op} {v.dtype}"
        if v.op == "const":
            label += f" {v.payload}"
        periph = " peripheries=2" if v.id in p.outputs else ""
        out.append(f'  "{v.id}" [label="{label}" shape={shape}{periph}];')
    for v in p.values:
        for i, a in enumerate(v.operands):
            out.append(f'  "{a}" -> "{v.id}" [label="{i}"];')
    out.append("}")
    return "\n".join(out) + "\n"


def evaluate(p: Program, inputs: dict[str, int | float]) -> dict[str, int | float]:
    """Evaluate every value of ``p``; returns a map from value id to result."""
    env: dict[str, int | float] = {}
    for v in p.values:
        if v.op == "input":
            x = inputs[v.id]
            env[v.id] = to_f32(float(x)) if v.dtype.is_float else wrap(int(x), v.dtype)
        elif v.op == "const":
            env[v.id] = v.payload
        else:
            env[v.id] = apply_op(v.op, v.dtype, [env[a] for a in v.operands])
    return env
