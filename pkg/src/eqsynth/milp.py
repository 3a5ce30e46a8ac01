"""Joint selection and scheduling as a mixed-integer linear program.

The model is built explicitly (variables, tagged rows, bounds) so it can be
checked against any candidate solution and exported in CPLEX LP format for
an external solver. ``solve_exact`` is an internal branch-and-bound oracle
over one-node-per-class selections, used for small instances.
"""
from __future__ import annotations

import math
import re
import time
from dataclasses import dataclass, field

from .solution import Solution, needed_classes, schedule_selection
from .timing import (ChainingConstraintSet, DesignSpace, UnschedulableError, cuts,
                     selection_delays, selection_order, source_term)

ROW_KINDS = ("root", "makespan", "class-complete", "node-complete", "dependency",
             "latency", "class-finish", "chaining")


@dataclass
class Row:
    name: str
    kind: str
    coeffs: dict[str, float]
    sense: str          # ">=", "<=", "="
    rhs: float

    def activity(self, x: dict[str, float]) -> float:
        return sum(c * x.get(v, 0.0) for v, c in self.coeffs.items())

    def slack(self, x: dict[str, float]) -> float:
        """Nonnegative when satisfied."""
        a = self.activity(x)
        if self.sense == ">=":
            return a - self.rhs
        if self.sense == "<=":
            return self.rhs - a
        return -abs(a - self.rhs)


@dataclass
class JointModel:
    space: DesignSpace
    objective: dict[str, float]
    rows: list[Row]
    binaries: list[str]
    generals: list[str]
    upper: dict[str, float]
    alpha: float
    big_m: float
    name: str = "joint"

    def count(self, kind: str) -> int:
        return sum(1 for r in self.rows if r.kind == kind)

    def objective_value(self, x: dict[str, float]) -> float:
        return sum(c * x.get(v, 0.0) for v, c in self.objective.items())


def b_n(i): return f"b_n{i}"
def s_n(i): return f"s_n{i}"
def f_n(i): return f"f_n{i}"
def b_c(c): return f"b_c{c}"
def f_c(c): return f"f_c{c}"


def build_model(space: DesignSpace, constraints: ChainingConstraintSet,
                alpha: float | None = None, big_m: float | None = None,
                name: str = "joint") -> JointModel:
    nodes = space.nodes
    n_impl = len(nodes)
    alpha = 1.0 / (2 * (n_impl + 1)) if alpha is None else alpha
    if big_m is None:
        big_m = sum(n.latency for n in nodes) + sum(q for _, q in constraints.rows()) + 1
    classes = space.classes
    roots = sorted(set(space.roots))
    rows: list[Row] = []

    for r in roots:
        rows.append(Row(f"root_c{r}", "root", {b_c(r): 1}, "=", 1))
    multi = len(roots) > 1
    if multi:
        for r in roots:
            rows.append(Row(f"makespan_c{r}", "makespan", {"F": 1, f_c(r): -1}, ">=", 0))
    for c in classes:
        if c in space.leaves:
            continue
        co = {b_n(i): 1 for i in space.class_nodes[c]}
        co[b_c(c)] = -1
        rows.append(Row(f"complete_c{c}", "class-complete", co, ">=", 0))
    for n in nodes:
        for a in sorted(set(n.args)):
            rows.append(Row(f"child_n{n.id}_c{a}", "node-complete", {b_n(n.id): 1, b_c(a): -1}, "<=", 0))
    for n in nodes:
        for a in sorted(set(n.args)):
            rows.append(Row(f"dep_n{n.id}_c{a}", "dependency", {s_n(n.id): 1, f_c(a): -1}, ">=", 0))
    for n in nodes:
        rows.append(Row(f"lat_n{n.id}", "latency", {f_n(n.id): 1, s_n(n.id): -1}, "=", n.latency))
    for n in nodes:
        rows.append(Row(f"fin_c{n.cls}_n{n.id}", "class-finish",
                        {f_c(n.cls): 1, f_n(n.id): -1, b_n(n.id): -big_m}, ">=", -big_m))
    # paths needing no register are implied by the dependency rows
    bn = [b_n(n.id) for n in nodes]
    for idx, (path, q) in enumerate(constraints.rows(binding_only=True)):
        co: dict[str, float] = {s_n(path.dst): 1}
        co[f_n(path.src)] = co.get(f_n(path.src), 0) - 1
        members = sorted(set(path.nodes))
        for i in members:
            co[bn[i]] = co.get(bn[i], 0) - big_m
        rows.append(Row(f"chain{idx}_n{path.src}_n{path.dst}", "chaining", co, ">=",
                        q - big_m * len(members)))

    objective: dict[str, float] = {"F": 1.0} if multi else {f_c(roots[0]): 1.0}
    for n in nodes:
        objective[b_n(n.id)] = alpha
    binaries = [b_n(n.id) for n in nodes] + [b_c(c) for c in classes]
    generals = [v for n in nodes for v in (s_n(n.id), f_n(n.id))] + [f_c(c) for c in classes]
    if multi:
        generals.append("F")
    upper = {f_c(c): 0.0 for c in space.leaves}
    return JointModel(space, objective, rows, binaries, generals, upper, alpha, float(big_m), name)


# --- LP format ----------------------------------------------------------------

def _num(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def _expr(coeffs: dict[str, float]) -> list[str]:
    terms = []
    for v, c in coeffs.items():
        if c == 0:
            continue
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = v if mag == 1 else f"{_num(mag)} {v}"
        terms.append(f"{sign} {body}")
    if not terms:
        return ["0 " + next(iter(coeffs), "x")]
    if terms[0].startswith("+ "):
        terms[0] = terms[0][2:]
    return terms


def _wrap(head: str, terms: list[str], tail: str = "") -> list[str]:
    lines, cur = [], head
    for t in terms:
        if len(cur) + len(t) + 1 > 200:
            lines.append(cur)
            cur = "   "
        cur += " " + t
    if tail:
        if len(cur) + len(tail) + 1 > 200:
            lines.append(cur)
            cur = "   "
        cur += " " + tail
    lines.append(cur)
    return lines


def export_lp(m: JointModel) -> str:
    out = [f"\\ {m.name}: joint implementation selection and scheduling",
           f"\\ alpha = {_num(m.alpha)}, M = {_num(m.big_m)}", "Minimize"]
    out += _wrap(" obj:", _expr(m.objective))
    out.append("Subject To")
    order = {k: i for i, k in enumerate(ROW_KINDS)}
    for r in sorted(m.rows, key=lambda r: order[r.kind]):
        out += _wrap(f" {r.name}:", _expr(r.coeffs), f"{r.sense} {_num(r.rhs)}")
    out.append("Bounds")
    for v in m.generals:
        if v in m.upper:
            out.append(f" {v} = {_num(m.upper[v])}")
        else:
            out.append(f" {v} >= 0")
    out.append("Generals")
    out += _wrap("", m.generals)
    out.append("Binaries")
    out += _wrap("", m.binaries)
    out.append("End")
    return "\n".join(out) + "\n"


@dataclass
class ParsedLP:
    objective: dict[str, float]
    rows: list[Row]
    bounds: dict[str, tuple[float, float]]
    generals: list[str]
    binaries: list[str]

    def check(self, x: dict[str, float], tol: float = 1e-6) -> list[str]:
        bad = [r.name for r in self.rows if r.slack(x) < -tol]
        for v in self.binaries:
            if x.get(v, 0) not in (0, 1):
                bad.append(f"binary:{v}")
        for v in self.generals:
            val = x.get(v, 0)
            lo, hi = self.bounds.get(v, (0.0, math.inf))
            if val != round(val) or val < lo - tol or val > hi + tol:
                bad.append(f"bound:{v}")
        return bad

    def objective_value(self, x: dict[str, float]) -> float:
        return sum(c * x.get(v, 0.0) for v, c in self.objective.items())


_TERM = re.compile(r"([+-])?\s*([0-9.eE+-]*\d)?\s*([A-Za-z_][A-Za-z0-9_]*)")


def _parse_expr(text: str) -> dict[str, float]:
    co: dict[str, float] = {}
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse LP expression near {text[pos:pos + 20]!r}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        coef = float(m.group(2)) if m.group(2) else 1.0
        co[m.group(3)] = co.get(m.group(3), 0.0) + sign * coef
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    return co


def parse_lp(text: str) -> ParsedLP:
    """Read back the subset of CPLEX LP written by ``export_lp``."""
    section = None
    objective: dict[str, float] = {}
    rows: list[Row] = []
    bounds: dict[str, tuple[float, float]] = {}
    generals: list[str] = []
    binaries: list[str] = []
    buf = ""
    heads = {"minimize": "obj", "subject to": "st", "bounds": "bounds",
             "generals": "gen", "binaries": "bin", "end": "end"}

    def flush():
        nonlocal buf
        stmt, buf = buf.strip(), ""
        if not stmt:
            return
        if section == "obj":
            objective.update(_parse_expr(stmt.split(":", 1)[1]))
        elif section == "st":
            name, body = stmt.split(":", 1)
            m = re.match(r"(.*?)(>=|<=|=)\s*(\S+)$", body.strip())
            if not m:
                raise ValueError(f"bad constraint {stmt!r}")
            rows.append(Row(name.strip(), "", _parse_expr(m.group(1)), m.group(2), float(m.group(3))))

    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].rstrip()
        if not line.strip():
            continue
        key = line.strip().lower()
        if key in heads:
            flush()
            section = heads[key]
            continue
        if section in ("obj", "st"):
            if line.startswith("   ") and buf:
                buf += " " + line.strip()
            else:
                flush()
                buf = line
        elif section == "bounds":
            m = re.match(r"\s*(\S+)\s*(>=|=)\s*(\S+)", line)
            if not m:
                raise ValueError(f"bad bound {line!r}")
            val = float(m.group(3))
            bounds[m.group(1)] = (val, val) if m.group(2) == "=" else (val, math.inf)
        elif section == "gen":
            generals.extend(line.split())
        elif section == "bin":
            binaries.extend(line.split())
    flush()
    return ParsedLP(objective, rows, bounds, generals, binaries)


# --- checking -----------------------------------------------------------------

@dataclass
class Violation:
    row: str
    kind: str
    slack: float


@dataclass
class ViolationReport:
    violations: list[Violation] = field(default_factory=list)
    objective: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def solution_vector(sol: Solution, m: JointModel) -> dict[str, float]:
    """Full variable assignment for a solution.

    Unselected nodes start as early as their operand classes allow, and
    unselected classes finish at cycle 0.
    """
    space = m.space
    x: dict[str, float] = {}
    selected = set(sol.chosen.values())
    sel_classes = set(sol.chosen)
    for i in selected:
        for a in space.nodes[i].args:
            if a in space.leaves:
                sel_classes.add(a)
    for r in space.roots:
        if r in space.leaves:
            sel_classes.add(r)
    for c in space.classes:
        x[b_c(c)] = 1.0 if c in sel_classes else 0.0
        x[f_c(c)] = float(sol.class_finish.get(c, 0)) if c in sel_classes and c not in space.leaves else 0.0
    for n in space.nodes:
        if n.id in selected:
            x[b_n(n.id)] = 1.0
            x[s_n(n.id)] = float(sol.start[n.id])
            x[f_n(n.id)] = float(sol.finish[n.id])
        else:
            s = max((x[f_c(a)] for a in n.args), default=0.0)
            x[b_n(n.id)] = 0.0
            x[s_n(n.id)] = s
            x[f_n(n.id)] = s + n.latency
    if "F" in m.objective:
        x["F"] = float(max(x[f_c(r)] for r in space.roots))
    return x


def check_solution(sol: Solution, m: JointModel, tol: float = 1e-9) -> ViolationReport:
    x = solution_vector(sol, m)
    rep = ViolationReport(objective=m.objective_value(x))
    for r in m.rows:
        s = r.slack(x)
        if s < -tol:
            rep.violations.append(Violation(r.name, r.kind, s))
    for v, hi in m.upper.items():
        if x.get(v, 0) > hi + tol:
            rep.violations.append(Violation(v, "bound", hi - x[v]))
    try:
        selection_order(m.space, sol.chosen)
    except UnschedulableError:
        rep.violations.append(Violation("induced-term", "acyclic", -1.0))
    return rep


# --- exact oracle -------------------------------------------------------------

NODE_BUDGET = 1 << 20


@dataclass
class _Bounds:
    cls: dict[int, int]                       # class -> earliest finish
    node: dict[int, int]                      # node -> earliest finish
    port: dict[tuple[int, str], int]          # (node, port) -> earliest operand arrival
    edge_cuts: dict[tuple[int, int, str], int]


def _static_bounds(space: DesignSpace) -> _Bounds:
    """Smallest possible finish per class and per node (least fixpoint).

    Each operand edge on its own is a chaining path, so a node starts no
    earlier than the best producer of each operand plus the registers that
    single edge needs.
    """
    t_net, t_clk, consts = space.constants.t_net, space.t_clk, space.constants
    edge_cuts = {}
    for n in space.nodes:
        for a, p in zip(n.args, n.ports):
            for m in space.class_nodes.get(a, ()):
                mn = space.nodes[m]
                d = source_term(mn) + mn.profile.t_outgoing + t_net + n.t_in(p)
                edge_cuts[(m, n.id, p)] = cuts(d, t_clk, consts)
    lb = {c: 0 for c in space.leaves}
    node_lb: dict[int, int] = {}
    changed = True
    while changed:
        changed = False
        for c, ids in space.class_nodes.items():
            for i in ids:
                n = space.nodes[i]
                if not all(a in lb for a in n.args):
                    continue
                st = 0
                for a, p in zip(n.args, n.ports):
                    if a in space.leaves:
                        continue
                    st = max(st, min(node_lb[m] + edge_cuts[(m, i, p)]
                                     for m in space.class_nodes[a] if m in node_lb))
                v = st + n.latency
                if i not in node_lb or v < node_lb[i]:
                    node_lb[i] = v
                    changed = True
                if c not in lb or v < lb[c]:
                    lb[c] = v
                    changed = True
    port = {}
    for n in space.nodes:
        for a, p in zip(n.args, n.ports):
            if a in space.leaves:
                port[(n.id, p)] = 0
            elif any(m in node_lb for m in space.class_nodes.get(a, ())):
                port[(n.id, p)] = min(node_lb[m] + edge_cuts[(m, n.id, p)]
                                      for m in space.class_nodes[a] if m in node_lb)
    return _Bounds(lb, node_lb, port, edge_cuts)


def _forced_classes(space: DesignSpace, cands: dict[int, list[int]]) -> dict[int, frozenset]:
    """Classes that any selection implementing a given class must also implement.

    Grows from singletons: a class forces what every one of its candidate
    nodes forces through its operands. Each iterate is sound, so stopping at
    the fixpoint gives the tightest such set.
    """
    must = {c: frozenset([c]) for c in space.class_nodes}
    changed = True
    while changed:
        changed = False
        for c, ids in cands.items():
            common = None
            for i in ids:
                need = set()
                for a in space.nodes[i].args:
                    need |= must.get(a, frozenset())
                common = need if common is None else common & need
            new = must[c] | (common or frozenset())
            if new != must[c]:
                must[c] = frozenset(new)
                changed = True
    return must


def solve_exact(space: DesignSpace, constraints: ChainingConstraintSet | None = None,
                timeout: float = 60.0, node_budget: int = NODE_BUDGET,
                incumbent: Solution | None = None) -> Solution:
    """Branch and bound over acyclic one-node-per-class selections.

    Classes are decided top-down from the roots. Every complete selection is
    scheduled exactly by ``schedule_selection``; the search keeps the
    lexicographically smallest (latency, implementation count). A partial
    selection is pruned when a lower bound on its latency, or on its count at
    equal latency, cannot beat the incumbent. Latency bounds use per-edge
    register counts, and at branching points the exact schedule of the chosen
    part; count bounds use the classes each pending class forces.
    """
    t0 = time.monotonic()
    bounds = _static_bounds(space)
    lb, node_lb = bounds.cls, bounds.node
    roots = sorted(set(space.roots))
    if any(r not in lb for r in roots):
        raise UnschedulableError("a root class cannot be built from the inputs")
    # nodes whose operands can never be built are absent from node_lb
    cands = {c: sorted((i for i in ids if i in node_lb),
                       key=lambda i: (node_lb[i], space.nodes[i].latency, space.nodes[i].op, i))
             for c, ids in space.class_nodes.items()}
    must = _forced_classes(space, cands)
    best: list = [None, None]   # ((latency, count), Solution)
    if incumbent is not None:
        best = [(incumbent.latency, incumbent.impl_count), incumbent]
    visited = 0
    status = "optimal"

    def bound(chosen: dict[int, int]) -> int:
        memo: dict[int, int] = {}

        def est(c):
            if c in memo:
                return memo[c]
            if c not in chosen:
                memo[c] = lb[c]
                return memo[c]
            i = chosen[c]
            n = space.nodes[i]
            st = 0
            for a, p in zip(n.args, n.ports):
                if a in chosen:
                    st = max(st, est(a) + bounds.edge_cuts[(chosen[a], i, p)])
                else:
                    st = max(st, bounds.port[(i, p)])
            memo[c] = st + n.latency
            return memo[c]
        return max(est(r) for r in roots)

    def chained_bound(chosen: dict[int, int]) -> int:
        # exact schedule of the chosen part; paths only grow as more is chosen
        order = selection_order(space, chosen)
        delays = selection_delays(space, chosen, order)
        finish, cf = {}, {}
        for c in order:
            n = space.nodes[chosen[c]]
            st = max((cf[a] if a in cf else lb[a] for a in n.args), default=0)
            for src, d in delays.get(n.id, ()):
                st = max(st, finish[src] + cuts(d, space.t_clk, space.constants))
            finish[n.id] = cf[c] = st + n.latency
        return max(cf[r] if r in cf else lb[r] for r in roots)

    def reaches(chosen, frm: int, target: int) -> bool:
        stack, seen = [frm], set()
        while stack:
            c = stack.pop()
            if c == target:
                return True
            if c in seen or c not in chosen:
                continue
            seen.add(c)
            stack.extend(space.nodes[chosen[c]].args)
        return False

    class Stop(Exception):
        pass

    def rec(chosen: dict[int, int], pending: list[int]):
        nonlocal visited, status
        visited += 1
        if visited > node_budget or time.monotonic() - t0 > timeout:
            status = "timeout"
            raise Stop
        pending = [c for c in pending if c not in chosen and c not in space.leaves]
        if best[0] is not None:
            lat = bound(chosen)
            if lat > best[0][0]:
                return
            cnt = len(set(chosen).union(*(must[c] for c in pending)))
            if (lat, cnt) >= best[0]:
                return
            if pending and len(cands[pending[0]]) > 1 and (chained_bound(chosen), cnt) >= best[0]:
                return
        if not pending:
            sol = schedule_selection(space, chosen, "exact")
            key = (sol.latency, sol.impl_count)
            if best[0] is None or key < best[0]:
                best[0], best[1] = key, sol
            return
        c = pending[0]
        rest = pending[1:]
        for i in cands[c]:
            n = space.nodes[i]
            if any(reaches(chosen, a, c) for a in n.args):
                continue
            chosen[c] = i
            new = [a for a in n.args if a not in chosen and a not in space.leaves and a not in rest]
            rec(chosen, rest + new)
            del chosen[c]

    try:
        rec({}, list(roots))
    except Stop:
        pass
    if best[1] is None:
        if status == "timeout":
            raise TimeoutError("exact search exhausted its budget without a solution")
        raise UnschedulableError("no acyclic selection exists")
    sol = best[1]
    chosen = {c: i for c, i in sol.chosen.items() if c in needed_classes(space, sol.chosen)}
    out = schedule_selection(space, chosen, "exact", status)
    out.stats.update(visited=visited, seconds=time.monotonic() - t0)
    return out
