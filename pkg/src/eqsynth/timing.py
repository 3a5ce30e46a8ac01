"""Delay model over implementation e-nodes, top-k path enumeration and cuts."""
from __future__ import annotations

import csv
import gc
import io
import itertools
import math
from graphlib import CycleError, TopologicalSorter
from collections import defaultdict
from dataclasses import dataclass, field
from contextlib import contextmanager
from functools import cached_property

from .egraph import EGraph, ENode
from .ir import DataType
from .library import Constants, ImplLibrary, TimingProfile

EPS = 1e-9
DEFAULT_TOP_K = 3
DEFAULT_DEPTH_LIMIT = 20


class TimingError(Exception):
    pass


class InfeasibleClockError(TimingError):
    pass


class UnschedulableError(TimingError):
    pass


@contextmanager
def paused_gc():
    """Suspend the cyclic collector while building many small acyclic objects."""
    was = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was:
            gc.enable()


def clock_ns(mhz: float) -> float:
    return 1000.0 / mhz


# --- register arithmetic ------------------------------------------------------

def eq7_holds(t_path: float, t_clk: float, overhead: float, q: int) -> bool:
    """``q`` registers are enough to cut a path of ``t_path`` ns."""
    return t_path + q * overhead <= (q + 1) * t_clk + EPS


def cuts(t_path: float, t_clk: float, constants: Constants) -> int:
    """Minimum number of registers so that a path meets the clock."""
    overhead = constants.register_overhead
    if t_clk <= overhead:
        raise InfeasibleClockError(
            f"clock period {t_clk:.4g} ns does not exceed register overhead {overhead:.4g} ns")
    if t_path <= t_clk + EPS:
        return 0
    q = max(0, math.ceil((t_path - t_clk) / (t_clk - overhead)))
    # guard against rounding at the boundary
    while q > 0 and eq7_holds(t_path, t_clk, overhead, q - 1):
        q -= 1
    while not eq7_holds(t_path, t_clk, overhead, q):
        q += 1
    return q


# --- design space -------------------------------------------------------------

@dataclass(frozen=True)
class ImplNode:
    id: int
    cls: int
    op: str
    impl: tuple[str, str]
    args: tuple[int, ...]
    ports: tuple[str, ...]
    profile: TimingProfile
    dtype: DataType
    resources: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def latency(self) -> int:
        return self.profile.latency

    @property
    def combinational(self) -> bool:
        return self.profile.latency == 0

    def t_in(self, port: str) -> float:
        try:
            return self.profile.t_incoming[port]
        except KeyError:
            raise TimingError(f"{self.op} has no input port {port!r}") from None


@dataclass(frozen=True)
class ImplEdge:
    src: int
    dst: int
    port: str


@dataclass
class DesignSpace:
    """Implementation e-nodes usable at one clock period, plus class structure."""
    graph: EGraph
    lib: ImplLibrary
    t_clk: float
    nodes: list[ImplNode]
    class_nodes: dict[int, list[int]]
    leaves: set[int]
    roots: list[int]
    dropped: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.users: dict[int, list[tuple[int, str]]] = defaultdict(list)
        for n in self.nodes:
            for a, p in zip(n.args, n.ports):
                self.users[a].append((n.id, p))
        for v in self.users.values():
            v.sort()

    @property
    def constants(self) -> Constants:
        return self.lib.constants

    @property
    def classes(self) -> list[int]:
        return sorted(set(self.class_nodes) | self.leaves)

    def node(self, i: int) -> ImplNode:
        return self.nodes[i]

    def in_edges(self, j: int) -> list[ImplEdge]:
        n = self.nodes[j]
        return [ImplEdge(i, j, p) for a, p in zip(n.args, n.ports)
                for i in self.class_nodes.get(a, ())]

    def out_edges(self, i: int) -> list[ImplEdge]:
        return [ImplEdge(i, j, p) for j, p in self.users.get(self.nodes[i].cls, ())]


def _dominates(a: ImplNode, b: ImplNode) -> bool:
    """``a`` is never worse than ``b`` under some matching of their operands."""
    pa, pb = a.profile, b.profile
    if len(a.args) != len(b.args) or sorted(a.args) != sorted(b.args):
        return False
    if pa.latency != pb.latency or pa.t_outgoing > pb.t_outgoing or pa.t_cycle > pb.t_cycle:
        return False
    keys = set(a.resources) | set(b.resources)
    if any(a.resources.get(x, 0) > b.resources.get(x, 0) for x in keys):
        return False
    return any(all(a.args[i] == b.args[j] and pa.t_incoming[a.ports[i]] <= pb.t_incoming[b.ports[j]]
                   for j, i in enumerate(perm))
               for perm in itertools.permutations(range(len(a.args))))


def _node_key(n: ImplNode):
    return (n.op, n.args, n.impl)


def build_design_space(g: EGraph, lib: ImplLibrary, t_clk: float,
                       prune_dominated: bool = True) -> DesignSpace:
    """Collect the implementation e-nodes that can take part in a schedule.

    Nodes that cannot run at ``t_clk`` on their own are dropped, as are
    nodes dominated by a sibling reading the same classes with equal latency.
    Classes are kept only if they can be implemented from leaves and are
    reachable from a root.
    """
    if t_clk <= lib.constants.register_overhead:
        raise InfeasibleClockError(
            f"clock period {t_clk:.4g} ns does not exceed register overhead "
            f"{lib.constants.register_overhead:.4g} ns")
    g.rebuild()
    dropped = {"slow": 0, "dominated": 0, "unreachable": 0}
    leaves = {c for c in g.classes if g.is_leaf_class(c)}
    cand: dict[int, list[tuple[ENode, object]]] = defaultdict(list)
    for cid, n in g.impl_nodes():
        conf = lib.configuration(n.impl)
        if not conf.profile.fits(t_clk):
            dropped["slow"] += 1
            continue
        cand[cid].append((n, conf))

    # least fixpoint: classes buildable bottom-up from leaves
    ok = set(leaves)
    changed = True
    while changed:
        changed = False
        for cid, ns in cand.items():
            if cid not in ok and any(all(a in ok for a in n.args) for n, _ in ns):
                ok.add(cid)
                changed = True
    roots = g.roots
    for r in roots:
        if r not in ok:
            raise UnschedulableError(f"root class {r} has no usable implementation at "
                                     f"{t_clk:.4g} ns")
    # reachability from roots through usable nodes
    reach, stack = set(), list(roots)
    while stack:
        c = stack.pop()
        if c in reach:
            continue
        reach.add(c)
        if c in leaves:
            continue
        for n, _ in cand.get(c, ()):
            if all(a in ok for a in n.args):
                stack.extend(n.args)

    tmp: list[ImplNode] = []
    for cid in sorted(reach - leaves):
        group = [ImplNode(-1, cid, n.op, n.impl, n.args, lib.entry(n.impl[0]).ports,
                          conf.profile, n.dtype, dict(conf.resources))
                 for n, conf in cand[cid] if all(a in ok for a in n.args)]
        group.sort(key=_node_key)
        keep = []
        for x in group:
            if prune_dominated and any(
                    _dominates(y, x) and (not _dominates(x, y) or _node_key(y) < _node_key(x))
                    for y in group if y is not x):
                dropped["dominated"] += 1
                continue
            keep.append(x)
        tmp.extend(keep)
    dropped["unreachable"] = sum(len(v) for c, v in cand.items() if c not in reach)

    nodes = [ImplNode(i, n.cls, n.op, n.impl, n.args, n.ports, n.profile, n.dtype,
                      n.resources) for i, n in enumerate(tmp)]
    class_nodes: dict[int, list[int]] = defaultdict(list)
    for n in nodes:
        class_nodes[n.cls].append(n.id)
    return DesignSpace(g, lib, t_clk, nodes, dict(class_nodes), reach & leaves, roots, dropped)


# --- delays -------------------------------------------------------------------

def edge_delay(e: ImplEdge, space: DesignSpace) -> float:
    src, dst = space.nodes[e.src], space.nodes[e.dst]
    return src.profile.t_outgoing + space.constants.t_net + dst.t_in(e.port)


@dataclass(frozen=True)
class TimedPath:
    edges: tuple[ImplEdge, ...]
    delay: float
    src_combinational: bool

    @property
    def src(self) -> int:
        return self.edges[0].src

    @property
    def dst(self) -> int:
        return self.edges[-1].dst

    @cached_property
    def nodes(self) -> tuple[int, ...]:
        return (self.edges[0].src,) + tuple(e.dst for e in self.edges)

    @cached_property
    def inner(self) -> frozenset[int]:
        """Source and intermediate nodes."""
        return frozenset(self.nodes[:-1])


def source_term(n: ImplNode) -> float:
    """Delay contributed at the head of a path: worst input port if combinational."""
    return n.profile.t_incoming_max if n.combinational else 0.0


def path_delay(edges, space: DesignSpace) -> float:
    edges = tuple(edges)
    if not edges:
        raise TimingError("a path has at least one edge")
    for a, b in zip(edges, edges[1:]):
        if a.dst != b.src:
            raise TimingError("path edges do not chain")
    return source_term(space.nodes[edges[0].src]) + sum(edge_delay(e, space) for e in edges)


def make_path(edges, space: DesignSpace) -> TimedPath:
    edges = tuple(edges)
    return TimedPath(edges, path_delay(edges, space), space.nodes[edges[0].src].combinational)


def chain_delay(src: int, dst: int, space: DesignSpace,
                depth_limit: int = DEFAULT_DEPTH_LIMIT) -> float | None:
    """Longest path delay from ``src`` to ``dst``, by exhaustive search."""
    best = None
    start = space.nodes[src]
    stack = [(src, source_term(start), 0, frozenset([start.cls]))]
    while stack:
        v, d, depth, seen = stack.pop()
        if depth >= depth_limit:
            continue
        for e in space.out_edges(v):
            w = space.nodes[e.dst]
            if w.cls in seen:
                continue
            nd = d + edge_delay(e, space)
            if e.dst == dst and (best is None or nd > best):
                best = nd
            if w.combinational:
                stack.append((e.dst, nd, depth + 1, seen | {w.cls}))
    return best


@dataclass
class ChainingConstraintSet:
    k: int
    depth_limit: int
    pairs: dict[tuple[int, int], list[tuple[TimedPath, int]]]
    truncated: set[tuple[int, int]] = field(default_factory=set)

    def __post_init__(self):
        # rows needing no register are implied by the dependency rows
        self.by_dst: dict[int, list[tuple[TimedPath, int]]] = defaultdict(list)
        for (s, d), lst in sorted(self.pairs.items()):
            self.by_dst[d].extend(x for x in lst if x[1] > 0)

    def __len__(self) -> int:
        return sum(len(v) for v in self.pairs.values())

    def rows(self, binding_only: bool = False):
        for key in sorted(self.pairs):
            for row in self.pairs[key]:
                if row[1] > 0 or not binding_only:
                    yield row

    def to_csv(self, space: DesignSpace) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["src", "dst", "delay_ns", "cuts", "edges"])
        for path, q in self.rows():
            w.writerow([space.nodes[path.src].op + f"@{path.src}",
                        space.nodes[path.dst].op + f"@{path.dst}",
                        f"{path.delay:.4f}", q,
                        ";".join(f"{e.src}->{e.dst}.{e.port}" for e in path.edges)])
        return buf.getvalue()


def enumerate_top_k_paths(space: DesignSpace, k: int = DEFAULT_TOP_K,
                          depth_limit: int = DEFAULT_DEPTH_LIMIT) -> ChainingConstraintSet:
    """Keep the ``k`` longest combinational paths for every ordered node pair.

    Paths start at any node, continue only through combinational nodes and
    never revisit an e-class. A partial path is abandoned once ``k`` longer
    ones have already reached the same node from the same source.
    """
    with paused_gc():
        return _enumerate_top_k_paths(space, k, depth_limit)


def _enumerate_top_k_paths(space: DesignSpace, k: int, depth_limit: int) -> ChainingConstraintSet:
    if k < 1:
        raise ValueError("k must be at least 1")
    pairs: dict[tuple[int, int], list[tuple[TimedPath, int]]] = {}
    truncated = set()
    t_net = space.constants.t_net
    out_cache: dict[int, list[tuple[float, ImplEdge]]] = {}

    def outs(v):
        r = out_cache.get(v)
        if r is None:
            r = [(edge_delay(e, space), e) for e in space.out_edges(v)]
            r.sort(key=lambda x: (-x[0], x[1].dst, x[1].port))
            out_cache[v] = r
        return r

    # Every node of a class sees the same paths; only the constant head
    # delay (source term plus outgoing delay) differs. Search once per class.
    cut_memo: dict[float, int] = {}
    for cls in sorted(space.class_nodes):
        members = [space.nodes[i] for i in space.class_nodes[cls]]
        first = [(t_net + space.nodes[j].t_in(p), j, p) for j, p in space.users.get(cls, ())]
        first.sort(key=lambda x: (-x[0], x[1], x[2]))
        best: dict[int, list[float]] = {}
        found: dict[int, list[tuple[float, tuple]]] = defaultdict(list)

        def visit(dst, nd, path, seen, ext):
            lst = best.get(dst)
            if lst is None:
                best[dst] = [nd]
            elif len(lst) < k:
                lst.append(nd)
                lst.sort(reverse=True)
            elif nd > lst[-1]:
                lst[-1] = nd
                lst.sort(reverse=True)
            else:
                return
            found[dst].append((nd, path))
            w = space.nodes[dst]
            if w.combinational:
                if len(path) >= depth_limit:
                    truncated.update((m.id, dst) for m in members)
                else:
                    ext.append((dst, nd, path, seen | {w.cls}))

        root_seen = frozenset([cls])
        stack = []
        ext = []
        for ed, j, p in first:
            if space.nodes[j].cls == cls:
                continue
            visit(j, ed, (ImplEdge(-1, j, p),), root_seen, ext)
        stack.extend(reversed(ext))
        while stack:
            v, d, edges, seen = stack.pop()
            ext = []
            for ed, e in outs(v):
                if space.nodes[e.dst].cls in seen:
                    continue
                visit(e.dst, d + ed, edges + (e,), seen, ext)
            stack.extend(reversed(ext))
        for dst, lst in found.items():
            lst.sort(key=lambda x: -x[0])
            top = lst[:k]
            for m in members:
                head = source_term(m) + m.profile.t_outgoing
                rows = []
                for d, path in top:
                    edges = (ImplEdge(m.id, path[0].dst, path[0].port),) + path[1:]
                    delay = head + d
                    q = cut_memo.get(delay)
                    if q is None:
                        q = cut_memo[delay] = cuts(delay, space.t_clk, space.constants)
                    rows.append((TimedPath(edges, delay, m.combinational), q))
                pairs[(m.id, dst)] = rows
    with_cuts = dict(sorted(pairs.items()))
    return ChainingConstraintSet(k, depth_limit, with_cuts, truncated)


# --- fixed-selection timing ------------------------------------------------

def selection_order(space: DesignSpace, chosen: dict[int, int]) -> list[int]:
    """Classes of a one-node-per-class selection in dependency order.

    Raises UnschedulableError if the selection induces a cycle.
    """
    ts = TopologicalSorter()
    for c in sorted(chosen):
        ts.add(c, *sorted(a for a in space.nodes[chosen[c]].args if a in chosen))
    try:
        return list(ts.static_order())
    except CycleError as e:
        raise UnschedulableError(f"selection is cyclic through classes {e.args[1]}") from None


def selection_delays(space: DesignSpace, chosen: dict[int, int],
                     order: list[int] | None = None) -> dict[int, list[tuple[int, float]]]:
    """Longest combinational path delay between every pair of chosen nodes.

    Returns ``dst node -> [(src node, delay)]``. The induced term is a DAG,
    so the longest path per pair is found by propagation in dependency order.
    """
    order = order if order is not None else selection_order(space, chosen)
    pos = {c: i for i, c in enumerate(order)}
    users: dict[int, list[tuple[int, str]]] = defaultdict(list)
    for c in order:
        n = space.nodes[chosen[c]]
        for a, p in zip(n.args, n.ports):
            if a in chosen:
                users[a].append((c, p))
    t_net = space.constants.t_net
    result: dict[int, list[tuple[int, float]]] = defaultdict(list)
    for c in order:
        s = space.nodes[chosen[c]]
        arr = {c: source_term(s)}
        frontier = [c]
        # classes reachable from c, visited in dependency order
        todo = set()
        while frontier:
            x = frontier.pop()
            for u, _ in users.get(x, ()):
                if u not in todo:
                    todo.add(u)
                    if space.nodes[chosen[u]].combinational:
                        frontier.append(u)
        for u in sorted(todo, key=pos.__getitem__):
            un = space.nodes[chosen[u]]
            best = None
            for a, p in zip(un.args, un.ports):
                if a not in arr:
                    continue
                an = space.nodes[chosen[a]]
                if a != c and not an.combinational:
                    continue
                d = arr[a] + an.profile.t_outgoing + t_net + un.t_in(p)
                if best is None or d > best:
                    best = d
            if best is None:
                continue
            result[un.id].append((s.id, best))
            if un.combinational:
                arr[u] = best
    return result
