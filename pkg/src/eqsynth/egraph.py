"""E-graph with hashconsing, congruence closure and equality saturation.

Operation e-nodes come from the program; implementation e-nodes are inserted
by implementation rules and carry an ``(identifier, config)`` tag.
"""
from __future__ import annotations

import json
import re
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterator

from .ir import LEAF_OPS, RING_OPS, DataType, Program


class EGraphError(Exception):
    pass


class DTypeMismatchError(EGraphError):
    pass


class RuleConfigError(EGraphError):
    pass


@dataclass(frozen=True, order=True)
class ENode:
    op: str
    args: tuple[int, ...]
    dtype: DataType
    payload: object = None
    impl: tuple[str, str] | None = None

    @property
    def is_impl(self) -> bool:
        return self.impl is not None

    def key(self) -> tuple:
        return (self.op, self.args, self.dtype, self.payload)


@dataclass
class EClass:
    id: int
    nodes: list[ENode]
    dtype: DataType


# --- patterns ---------------------------------------------------------------

@dataclass(frozen=True)
class PVar:
    name: str

    def __str__(self):
        return "?" + self.name


@dataclass(frozen=True)
class PNode:
    op: str
    children: tuple["PVar | PNode", ...] = ()

    def __str__(self):
        if not self.children:
            return f"({self.op})"
        return f"({self.op} {' '.join(str(c) for c in self.children)})"


Pattern = PVar | PNode


def parse_pattern(text: str) -> Pattern:
    tokens = re.findall(r"\(|\)|[^\s()]+", text)
    pos = 0

    def parse():
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError(f"unexpected end of pattern {text!r}")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            if pos >= len(tokens) or tokens[pos] in "()":
                raise ValueError(f"missing operator in pattern {text!r}")
            op = tokens[pos]
            pos += 1
            kids = []
            while pos < len(tokens) and tokens[pos] != ")":
                kids.append(parse())
            if pos >= len(tokens):
                raise ValueError(f"unbalanced pattern {text!r}")
            pos += 1
            return PNode(op, tuple(kids))
        if tok == ")":
            raise ValueError(f"unexpected ')' in pattern {text!r}")
        if tok.startswith("?") and len(tok) > 1:
            return PVar(tok[1:])
        raise ValueError(f"bare symbol {tok!r} in pattern {text!r}; write ({tok}) or ?{tok}")

    pat = parse()
    if pos != len(tokens):
        raise ValueError(f"trailing tokens in pattern {text!r}")
    return pat


def pattern_vars(p: Pattern) -> list[str]:
    """Variables in first-occurrence order."""
    seen: list[str] = []

    def walk(q):
        if isinstance(q, PVar):
            if q.name not in seen:
                seen.append(q.name)
        else:
            for c in q.children:
                walk(c)

    walk(p)
    return seen


def pattern_infix(p: Pattern) -> str:
    """Human form used in reports, e.g. ``-((A+D)*B)``."""
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/", "and": "&", "or": "|",
           "xor": "^", "shl": "<<", "shr": ">>", "cmp": "<"}
    if isinstance(p, PVar):
        return p.name
    kids = [pattern_infix(c) for c in p.children]
    kids = [k if isinstance(c, PVar) else f"({k})" for k, c in zip(kids, p.children)]
    if p.op == "neg" and len(kids) == 1:
        return "-" + kids[0]
    if p.op in sym and len(kids) == 2:
        return f"{kids[0]}{sym[p.op]}{kids[1]}"
    return f"{p.op}({', '.join(kids)})"


@dataclass
class RewriteRule:
    name: str
    matcher: Pattern
    applier: Pattern
    kind: str = "algebraic"  # or "implementation"
    condition: Callable[["EGraph", dict[str, int]], bool] | None = None
    dtype_kind: str | None = None  # restrict matched class to "int" or "float"
    impl: tuple[str, str] | None = None
    ports: tuple[str, ...] = ()

    def __post_init__(self):
        mvars = set(pattern_vars(self.matcher))
        missing = [v for v in pattern_vars(self.applier) if v not in mvars]
        if missing:
            raise RuleConfigError(f"rule {self.name}: applier variables {missing} unbound")
        if self.kind not in ("algebraic", "implementation"):
            raise RuleConfigError(f"rule {self.name}: unknown kind {self.kind!r}")
        if isinstance(self.matcher, PVar):
            raise RuleConfigError(f"rule {self.name}: matcher must not be a bare variable")

    @classmethod
    def parse(cls, name: str, text: str, **kw) -> "RewriteRule":
        lhs, sep, rhs = text.partition("->")
        if not sep:
            raise RuleConfigError(f"rule {name}: expected 'matcher -> applier'")
        return cls(name, parse_pattern(lhs.strip().strip('"')),
                   parse_pattern(rhs.strip().strip('"')), **kw)


def default_rules() -> list[RewriteRule]:
    specs = [
        ("add-comm", "(add ?a ?b) -> (add ?b ?a)"),
        ("mul-comm", "(mul ?a ?b) -> (mul ?b ?a)"),
        ("neg-mul-left", "(mul (neg ?a) ?b) -> (neg (mul ?a ?b))"),
        ("neg-mul-right", "(mul ?a (neg ?b)) -> (neg (mul ?a ?b))"),
        ("neg-neg", "(neg (neg ?a)) -> ?a"),
        ("sub-to-add-neg", "(sub ?a ?b) -> (add ?a (neg ?b))"),
    ]
    return [RewriteRule.parse(n, t, dtype_kind="int") for n, t in specs]


@dataclass
class Limits:
    max_iterations: int = 30
    max_classes: int = 10_000
    max_nodes: int = 100_000
    timeout: float = 60.0

    def __post_init__(self):
        if min(self.max_iterations, self.max_classes, self.max_nodes) <= 0 or self.timeout <= 0:
            raise ValueError("saturation limits must be positive")


@dataclass
class SaturationReport:
    iterations: int
    applied: dict[str, int]
    stop_reason: str
    classes: int
    nodes: int
    seconds: float

    @property
    def saturated(self) -> bool:
        return self.stop_reason == "saturated"


# --- e-graph ----------------------------------------------------------------

class EGraph:
    def __init__(self):
        self._parent: list[int] = []
        self.classes: dict[int, EClass] = {}
        self.hashcons: dict[tuple, int] = {}
        self._roots: list[int] = []
        self._dirty = False
        self._by_op: dict[str, set[int]] = defaultdict(set)

    # union-find
    def find(self, cid: int) -> int:
        root = cid
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[cid] != root:
            self._parent[cid], cid = root, self._parent[cid]
        return root

    @property
    def roots(self) -> list[int]:
        return [self.find(r) for r in self._roots]

    @roots.setter
    def roots(self, ids: list[int]):
        self._roots = list(ids)

    def canonicalize(self, n: ENode) -> ENode:
        args = tuple(self.find(a) for a in n.args)
        return n if args == n.args else ENode(n.op, args, n.dtype, n.payload, n.impl)

    def _check_args(self, n: ENode):
        for a in n.args:
            if not 0 <= a < len(self._parent):
                raise EGraphError(f"unknown child class {a}")

    def _new_class(self, n: ENode) -> int:
        cid = len(self._parent)
        self._parent.append(cid)
        self.classes[cid] = EClass(cid, [n], n.dtype)
        self.hashcons[n.key()] = cid
        self._by_op[n.op].add(cid)
        return cid

    def add_enode(self, n: ENode) -> int:
        self._check_args(n)
        n = self.canonicalize(n)
        cid = self.hashcons.get(n.key())
        if cid is not None:
            return self.find(cid)
        return self._new_class(n)

    def add_to_class(self, cid: int, n: ENode) -> bool:
        """Insert ``n`` into an existing class without merging anything.

        Returns False when the node is already present (anywhere).
        """
        self._check_args(n)
        cid = self.find(cid)
        n = self.canonicalize(n)
        if n.dtype != self.classes[cid].dtype:
            raise DTypeMismatchError(f"node type {n.dtype} does not match class {cid}")
        if n.key() in self.hashcons:
            return False
        self.classes[cid].nodes.append(n)
        self.hashcons[n.key()] = cid
        self._by_op[n.op].add(cid)
        return True

    def union(self, a: int, b: int) -> int:
        a, b = self.find(a), self.find(b)
        if a == b:
            return a
        ca, cb = self.classes[a], self.classes[b]
        if ca.dtype != cb.dtype:
            raise DTypeMismatchError(f"cannot merge class {a} ({ca.dtype}) with {b} ({cb.dtype})")
        keep, drop = (a, b) if a < b else (b, a)
        self._parent[drop] = keep
        self.classes[keep].nodes.extend(self.classes.pop(drop).nodes)
        for ops in self._by_op.values():
            if drop in ops:
                ops.discard(drop)
                ops.add(keep)
        self._dirty = True
        return keep

    def rebuild(self) -> int:
        """Restore congruence; returns the number of merges performed."""
        merges = 0
        while True:
            table: dict[tuple, int] = {}
            pending: list[tuple[int, int]] = []
            for cid in sorted(self.classes):
                for n in self.classes[cid].nodes:
                    k = self.canonicalize(n).key()
                    other = table.get(k)
                    if other is None:
                        table[k] = cid
                    elif self.find(other) != self.find(cid):
                        pending.append((other, cid))
            if not pending:
                break
            for a, b in pending:
                if self.find(a) != self.find(b):
                    self.union(a, b)
                    merges += 1
        self.hashcons = {}
        self._by_op = defaultdict(set)
        for cid in sorted(self.classes):
            cls = self.classes[cid]
            uniq: dict[tuple, ENode] = {}
            for n in cls.nodes:
                n = self.canonicalize(n)
                uniq.setdefault(n.key(), n)
            cls.nodes = sorted(uniq.values(), key=_node_sort_key)
            for k, n in uniq.items():
                self.hashcons[k] = cid
                self._by_op[n.op].add(cid)
        self._dirty = False
        return merges

    # queries
    def __len__(self) -> int:
        return len(self.classes)

    @property
    def node_count(self) -> int:
        return sum(len(c.nodes) for c in self.classes.values())

    def nodes_of(self, cid: int) -> list[ENode]:
        return self.classes[self.find(cid)].nodes

    def dtype_of(self, cid: int) -> DataType:
        return self.classes[self.find(cid)].dtype

    def is_leaf_class(self, cid: int) -> bool:
        return any(n.op in LEAF_OPS for n in self.nodes_of(cid))

    def impl_nodes(self) -> Iterator[tuple[int, ENode]]:
        for cid in sorted(self.classes):
            for n in self.classes[cid].nodes:
                if n.is_impl:
                    yield cid, n

    def lookup(self, op: str, args: tuple[int, ...], dtype: DataType) -> int | None:
        cid = self.hashcons.get(ENode(op, tuple(self.find(a) for a in args), dtype).key())
        return None if cid is None else self.find(cid)

    # e-matching
    def _match(self, pat: Pattern, cid: int, subst: dict[str, int], wit: tuple):
        cid = self.find(cid)
        if isinstance(pat, PVar):
            bound = subst.get(pat.name)
            if bound is None:
                yield {**subst, pat.name: cid}, wit
            elif self.find(bound) == cid:
                yield subst, wit
            return
        for n in self.classes[cid].nodes:
            if n.op != pat.op or len(n.args) != len(pat.children):
                continue
            todo = [(subst, wit + ((cid, n),))]
            for child_pat, arg in zip(pat.children, n.args):
                todo = [r for s, w in todo for r in self._match(child_pat, arg, s, w)]
                if not todo:
                    break
            yield from todo

    def match_witness(self, pat: Pattern) -> list[tuple[int, dict[str, int], tuple]]:
        """Matches plus the (class, e-node) pairs each operator position matched."""
        if self._dirty:
            raise EGraphError("e-graph must be rebuilt before matching")
        if isinstance(pat, PVar):
            starts = sorted(self.classes)
        else:
            starts = sorted(self._by_op.get(pat.op, ()))
        out = []
        seen = set()
        for cid in starts:
            for subst, wit in self._match(pat, cid, {}, ()):
                key = (cid, tuple(sorted(subst.items())))
                if key in seen:
                    continue
                seen.add(key)
                out.append((cid, subst, wit))
        out.sort(key=lambda m: (m[0], sorted(m[1].items())))
        return out

    def ematch(self, pat: Pattern) -> list[tuple[int, dict[str, int]]]:
        return [(c, s) for c, s, _ in self.match_witness(pat)]

    def instantiate(self, pat: Pattern, subst: dict[str, int], dtype: DataType) -> int:
        """Add a pattern instance; new operator nodes take ``dtype``."""
        if isinstance(pat, PVar):
            return self.find(subst[pat.name])
        args = tuple(self.instantiate(c, subst, dtype) for c in pat.children)
        return self.add_enode(ENode(pat.op, args, dtype))

    # serialization
    def to_json(self) -> dict:
        order = sorted(self.classes)
        ren = {cid: i for i, cid in enumerate(order)}
        classes = []
        for cid in order:
            cls = self.classes[cid]
            nodes = []
            for n in cls.nodes:
                d = {"op": n.op, "args": [ren[self.find(a)] for a in n.args]}
                if n.payload is not None:
                    d["payload"] = n.payload
                if n.impl:
                    d["impl"] = list(n.impl)
                nodes.append(d)
            nodes.sort(key=lambda d: (d["op"], d["args"], str(d.get("payload"))))
            classes.append({"id": ren[cid], "dtype": str(cls.dtype), "nodes": nodes})
        return {"classes": classes, "roots": [ren[r] for r in self.roots]}

    def serialize(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def to_dot(self) -> str:
        out = ["digraph egraph {", "  compound=true;", "  node [shape=box];"]
        data = self.to_json()
        for cls in data["classes"]:
            c = cls["id"]
            out.append(f'  subgraph cluster_{c} {{ label="c{c}: {cls["dtype"]}"; style=dashed;')
            for i, n in enumerate(cls["nodes"]):
                label = n["op"] + (f' {n["payload"]}' if "payload" in n else "")
                style = " style=filled fillcolor=lightgrey" if "impl" in n else ""
                out.append(f'    n{c}_{i} [label="{label}"{style}];')
            out.append("  }")
        for cls in data["classes"]:
            c = cls["id"]
            for i, n in enumerate(cls["nodes"]):
                for j, a in enumerate(n["args"]):
                    out.append(f'  n{c}_{i} -> n{a}_0 [lhead=cluster_{a} label="{j}"];')
        out.append("}")
        return "\n".join(out) + "\n"


def _node_sort_key(n: ENode):
    return (n.op, n.args, str(n.dtype), str(n.payload))


def egraph_from_program(p: Program) -> EGraph:
    g = EGraph()
    ids: dict[str, int] = {}
    for v in p.values:
        if v.op == "input":
            n = ENode("input", (), v.dtype, v.id)
        elif v.op == "const":
            n = ENode("const", (), v.dtype, v.payload)
        else:
            n = ENode(v.op, tuple(ids[a] for a in v.operands), v.dtype)
        ids[v.id] = g.add_enode(n)
    g.roots = [ids[o] for o in p.outputs]
    g.rebuild()
    return g


def value_classes(g: EGraph, p: Program) -> dict[str, int]:
    """Map each program value to its (current) e-class."""
    ids: dict[str, int] = {}
    for v in p.values:
        if v.op == "input":
            n = ENode("input", (), v.dtype, v.id)
        elif v.op == "const":
            n = ENode("const", (), v.dtype, v.payload)
        else:
            n = ENode(v.op, tuple(ids[a] for a in v.operands), v.dtype)
        cid = g.hashcons.get(g.canonicalize(n).key())
        if cid is None:
            raise EGraphError(f"value {v.id} is no longer represented")
        ids[v.id] = g.find(cid)
    return ids


# --- soundness of integer rewrites ------------------------------------------

def _interval(op: str, args: list[tuple[int, int]]) -> tuple[int, int] | None:
    if op == "add":
        return args[0][0] + args[1][0], args[0][1] + args[1][1]
    if op == "sub":
        return args[0][0] - args[1][1], args[0][1] - args[1][0]
    if op == "neg":
        return -args[0][1], -args[0][0]
    if op == "mul":
        c = [x * y for x in args[0] for y in args[1]]
        return min(c), max(c)
    return None


def node_is_exact(g: EGraph, n: ENode) -> bool:
    """True when the node's declared type holds every possible result."""
    if n.dtype.is_float:
        return True
    rng = _interval(n.op, [(g.dtype_of(a).lo, g.dtype_of(a).hi) for a in n.args])
    return rng is not None and n.dtype.lo <= rng[0] and rng[1] <= n.dtype.hi


def match_is_sound(g: EGraph, root: int, witness: tuple) -> bool:
    """Reject matches whose inner operators may wrap in a way the root can see.

    Wrapping an inner add/sub/neg/mul is harmless when its width is at least
    the root's (arithmetic modulo 2^n); anything else must be exact.
    """
    root_t = g.dtype_of(root)
    if root_t.is_float:
        return True
    for cid, n in witness[1:]:
        t = g.dtype_of(cid)
        if t.is_float:
            continue
        if n.op in RING_OPS and t.bits >= root_t.bits:
            continue
        if not node_is_exact(g, n):
            return False
    return True


def saturate(g: EGraph, rules: list[RewriteRule], limits: Limits | None = None) -> SaturationReport:
    limits = limits or Limits()
    t0 = time.monotonic()
    applied = {r.name: 0 for r in rules}
    g.rebuild()
    iterations = 0
    reason = "saturated"
    while True:
        if iterations >= limits.max_iterations:
            reason = "iteration-limit"
            break
        iterations += 1
        batch = []
        for rule in rules:
            for cid, subst, wit in g.match_witness(rule.matcher):
                batch.append((rule, cid, subst, wit))
        changed = False
        for k, (rule, cid, subst, wit) in enumerate(batch):
            if rule.dtype_kind and (g.dtype_of(cid).is_float != (rule.dtype_kind == "float")):
                continue
            if not match_is_sound(g, cid, wit):
                continue
            if rule.condition is not None and not rule.condition(g, subst):
                continue
            if rule.kind == "implementation":
                node = ENode(rule.applier.op, tuple(subst[p] for p in rule.ports),
                             g.dtype_of(cid), impl=rule.impl)
                if g.add_to_class(cid, node):
                    applied[rule.name] += 1
                    changed = True
                continue
            if isinstance(rule.applier, PVar):
                target = subst[rule.applier.name]
                if g.dtype_of(target) != g.dtype_of(cid):
                    continue
            else:
                target = g.instantiate(rule.applier, subst, g.dtype_of(cid))
            if g.find(target) != g.find(cid):
                g.union(target, cid)
                applied[rule.name] += 1
                changed = True
            # counting is linear, so check the budget periodically
            if k % 256 == 255 and g.node_count > limits.max_nodes:
                break
        g.rebuild()
        if not changed:
            break
        if len(g) > limits.max_classes:
            reason = "class-limit"
            break
        if g.node_count > limits.max_nodes:
            reason = "node-limit"
            break
        if time.monotonic() - t0 > limits.timeout:
            reason = "timeout"
            break
    return SaturationReport(iterations, applied, reason, len(g), g.node_count,
                            time.monotonic() - t0)
