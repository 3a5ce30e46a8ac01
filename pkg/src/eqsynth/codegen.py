"""Pipelined structural Verilog from a scheduled selection."""
from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from graphlib import TopologicalSorter

from .egraph import PNode, PVar, pattern_infix
from .ir import DataType, Program, apply_op, wrap
from .library import ImplLibrary, TimingProfile
from .solution import Solution
from .timing import DesignSpace, eq7_holds, selection_order


class CodegenError(Exception):
    pass


@dataclass
class Connection:
    port: str
    cls: int
    depth: int


@dataclass
class Instance:
    name: str
    node_id: int
    cls: int
    identifier: str
    config: str
    func: str
    matcher: PNode
    template: str
    params: dict
    connections: list[Connection]
    start: int
    finish: int
    profile: TimingProfile
    dtype: DataType

    @property
    def combinational(self) -> bool:
        return self.profile.latency == 0


@dataclass
class Netlist:
    module: str
    inputs: list[tuple[str, int, DataType]]          # port, class, type
    consts: list[tuple[int, DataType, object]]
    outputs: list[tuple[str, int, int, DataType]]    # port, class, depth, type
    nets: dict[int, DataType]
    instances: list[Instance]
    latency: int
    chains: dict[int, int] = field(default_factory=dict)

    def producer(self) -> dict[int, Instance]:
        return {i.cls: i for i in self.instances}


def _ident(text: str) -> str:
    s = re.sub(r"[^A-Za-z0-9_]", "_", text)
    return s if s and not s[0].isdigit() else "v_" + s


def _decl(t: DataType) -> str:
    if t.is_float:
        return "[31:0]"
    sign = "signed " if t.signed else ""
    return f"{sign}[{t.bits - 1}:0]"


def _literal(t: DataType, v) -> str:
    if t.is_float:
        return "32'h%08x" % struct.unpack("<I", struct.pack("<f", float(v)))[0]
    u = int(v) & ((1 << t.bits) - 1)
    lit = f"{t.bits}'h{u:x}"
    return f"$signed({lit})" if t.signed else lit


def net(cls: int, depth: int = 0) -> str:
    return f"c{cls}" if depth == 0 else f"c{cls}_d{depth}"


def build_netlist(sol: Solution, space: DesignSpace, p: Program,
                  module: str | None = None) -> Netlist:
    """Place one instance per selected node and size the register chains.

    A connection from class ``a`` into a node starting at cycle ``s`` passes
    through ``s - finish(a)`` registers. Inputs are available at cycle 0 and
    constants are never delayed.
    """
    g, lib = space.graph, space.lib
    chosen = sol.chosen
    order = selection_order(space, chosen)
    cf = dict(sol.class_finish)
    nets: dict[int, DataType] = {}
    inputs, consts, const_cls = [], [], set()
    leaf_seen = set()
    for c in sorted(space.leaves):
        for n in g.nodes_of(c):
            if n.op == "input" and c not in leaf_seen:
                inputs.append((_ident(str(n.payload)), c, n.dtype))
                leaf_seen.add(c)
        if c not in leaf_seen:
            for n in g.nodes_of(c):
                if n.op == "const":
                    consts.append((c, n.dtype, n.payload))
                    const_cls.add(c)
                    leaf_seen.add(c)
                    break
        nets[c] = g.dtype_of(c)
        cf[c] = 0
    # keep declared input order of the program
    pos = {_ident(v.id): i for i, v in enumerate(p.inputs)}
    inputs.sort(key=lambda x: pos.get(x[0], len(pos)))
    declared = {x[0] for x in inputs}
    missing_inputs = [v for v in p.inputs if _ident(v.id) not in declared]
    for v in missing_inputs:
        # input folded away by rewriting; still exposed as a port
        inputs.append((_ident(v.id), -1, v.dtype))

    instances = []
    for c in order:
        node = space.nodes[chosen[c]]
        entry = lib.entry(node.impl[0])
        conf = entry.config(node.impl[1])
        s = sol.start[node.id]
        conns = []
        for a, port in zip(node.args, node.ports):
            d = 0 if a in const_cls else s - cf[a]
            if d < 0:
                raise CodegenError(f"node {node.op} starts before operand class {a} is ready")
            conns.append(Connection(port, a, d))
        nets[c] = node.dtype
        instances.append(Instance(
            f"u{node.id}_{_ident(node.impl[0])}", node.id, c, node.impl[0], node.impl[1],
            pattern_infix(entry.matcher), entry.matcher, conf.template, dict(conf.params),
            conns, s, sol.finish[node.id], conf.profile, node.dtype))

    outputs = []
    latency = sol.latency
    out_cls = dict(zip(p.outputs, space.roots))
    for vid in p.outputs:
        c = out_cls[vid]
        d = 0 if c in const_cls else latency - cf[c]
        outputs.append((f"out_{_ident(vid)}", c, d, g.dtype_of(c)))

    chains: dict[int, int] = {}
    for inst in instances:
        for cn in inst.connections:
            if cn.depth:
                chains[cn.cls] = max(chains.get(cn.cls, 0), cn.depth)
    for _, c, d, _ in outputs:
        if d:
            chains[c] = max(chains.get(c, 0), d)
    return Netlist(_ident(module or p.name), inputs, consts, outputs, nets, instances,
                   latency, dict(sorted(chains.items())))


def to_verilog(nl: Netlist, lib: ImplLibrary) -> str:
    ports = ["  input  wire clk", "  input  wire rst"]
    for name, _, t in nl.inputs:
        ports.append(f"  input  wire {_decl(t)} {name}")
    for name, _, _, t in nl.outputs:
        ports.append(f"  output wire {_decl(t)} {name}")
    out = [f"module {nl.module} (", ",\n".join(ports), ");",
           f"  // total latency = {nl.latency} cycles", ""]
    for name, c, t in nl.inputs:
        if c >= 0:
            out.append(f"  wire {_decl(t)} {net(c)} = {name};")
    for c, t, v in nl.consts:
        out.append(f"  wire {_decl(t)} {net(c)} = {_literal(t, v)};")
    for inst in nl.instances:
        out.append(f"  wire {_decl(inst.dtype)} {net(inst.cls)};")
    if nl.chains:
        out.append("")
        for c, depth in nl.chains.items():
            taps = ", ".join(net(c, d) for d in range(1, depth + 1))
            out.append(f"  reg {_decl(nl.nets[c])} {taps};")
        out.append("  always @(posedge clk) begin")
        out.append("    if (rst) begin")
        for c, depth in nl.chains.items():
            for d in range(1, depth + 1):
                out.append(f"      {net(c, d)} <= 0;")
        out.append("    end else begin")
        for c, depth in nl.chains.items():
            for d in range(1, depth + 1):
                out.append(f"      {net(c, d)} <= {net(c, d - 1)};")
        out.append("    end")
        out.append("  end")
    for inst in nl.instances:
        tmpl = lib.templates.get(inst.template)
        if tmpl is None:
            raise CodegenError(f"template {inst.template!r} missing from library")
        fields = {str(k): v for k, v in inst.params.items()}
        fields.update(
            inst=inst.name, out=net(inst.cls), clk="clk", rst="rst",
            width=inst.dtype.bits, latency=inst.profile.latency,
            port_list=", ".join(f".{cn.port}({net(cn.cls, cn.depth)})" for cn in inst.connections),
            param_list=", ".join(f".{k}({v})" for k, v in sorted(inst.params.items())),
        )
        for cn in inst.connections:
            fields[cn.port] = net(cn.cls, cn.depth)
        try:
            text = tmpl.format(**fields)
        except (KeyError, IndexError) as e:
            raise CodegenError(f"template {inst.template!r}: unknown field {e}") from None
        out.append("")
        out.append(f'  // func = "{inst.func}", timing = "{inst.config}", start = {inst.start}')
        out.append("  " + text)
    out.append("")
    for name, c, d, _ in nl.outputs:
        out.append(f"  assign {name} = {net(c, d)};")
    out.append("endmodule")
    return "\n".join(out) + "\n"


def emit_netlist(sol: Solution, space: DesignSpace, p: Program, module: str | None = None) -> str:
    return to_verilog(build_netlist(sol, space, p, module), space.lib)


def emit_schedule_report(sol: Solution, space: DesignSpace, p: Program) -> str:
    nl = build_netlist(sol, space, p)
    lines = [f"program: {p.name}",
             f"clock: {space.t_clk:.4f} ns ({1000.0 / space.t_clk:.2f} MHz)",
             f"solver: {sol.solver} ({sol.status})",
             f"latency = {sol.latency} cycles",
             f"implementations = {sol.impl_count}", "", "instances:"]
    for inst in nl.instances:
        lines.append(f"  {inst.name}: func = \"{inst.func}\", timing = \"{inst.config}\", "
                     f"start = {inst.start}, finish = {inst.finish}")
    lines.append("")
    lines.append("inserted registers:")
    prod = nl.producer()
    regs = 0
    for inst in nl.instances:
        for cn in inst.connections:
            if cn.depth:
                src = prod[cn.cls].name if cn.cls in prod else net(cn.cls)
                lines.append(f"  {src} -> {inst.name}.{cn.port}: {cn.depth}")
                regs += cn.depth
    for name, c, d, _ in nl.outputs:
        if d:
            src = prod[c].name if c in prod else net(c)
            lines.append(f"  {src} -> {name}: {d}")
    if not regs and not any(d for _, _, d, _ in nl.outputs):
        lines.append("  none")
    return "\n".join(lines) + "\n"


# --- structural timing ----------------------------------------------------

@dataclass
class TimingViolation:
    description: str
    delay: float
    registers: int


def _topo(nl: Netlist) -> list[Instance]:
    by_cls = nl.producer()
    ts = TopologicalSorter()
    for inst in nl.instances:
        ts.add(inst.cls, *[cn.cls for cn in inst.connections if cn.cls in by_cls])
    return [by_cls[c] for c in ts.static_order() if c in by_cls]


def check_netlist_timing(nl: Netlist, lib: ImplLibrary, t_clk: float) -> list[TimingViolation]:
    """Re-time the emitted structure independently of the scheduler.

    Every combinational path between instances, counting the registers its
    connections pass through, must satisfy the register-cut inequality; a
    path through no register must fit in one clock period. Each instance
    must also meet the period on its own.
    """
    consts = lib.constants
    overhead = consts.register_overhead
    bad: list[TimingViolation] = []
    order = _topo(nl)
    by_cls = nl.producer()
    for inst in order:
        pr = inst.profile
        if pr.t_cycle > t_clk or pr.t_outgoing > t_clk or pr.t_incoming_max > t_clk:
            bad.append(TimingViolation(f"{inst.name} internal stage", max(
                pr.t_cycle, pr.t_outgoing, pr.t_incoming_max), 0))
    pos = {inst.cls: i for i, inst in enumerate(order)}
    for src in order:
        arr: dict[int, dict[int, float]] = {src.cls: {0: source_term_inst(src)}}
        for v in order[pos[src.cls] + 1:]:
            here: dict[int, float] = {}
            for cn in v.connections:
                u = by_cls.get(cn.cls)
                if u is None or cn.cls not in arr:
                    continue
                if u is not src and not u.combinational:
                    continue
                for q, t in arr[cn.cls].items():
                    nt = t + u.profile.t_outgoing + consts.t_net + v.profile.t_incoming[cn.port]
                    nq = q + cn.depth
                    if not eq7_holds(nt, t_clk, overhead, nq):
                        bad.append(TimingViolation(f"{src.name} -> {v.name}.{cn.port}", nt, nq))
                    if nt > here.get(nq, -1.0):
                        here[nq] = nt
            if here and v.combinational:
                arr[v.cls] = here
    return bad


def source_term_inst(inst: Instance) -> float:
    return inst.profile.t_incoming_max if inst.combinational else 0.0


# --- cycle-level interpreter ------------------------------------------------

def _eval_pattern(pat, env: dict[str, int | float], out: DataType, top: bool = True):
    if isinstance(pat, PVar):
        return env[pat.name]
    args = [_eval_pattern(c, env, out, False) for c in pat.children]
    if top or out.is_float or pat.op not in ("add", "sub", "neg", "mul"):
        return apply_op(pat.op, out, args)
    # inner ring operators are exact; the final result wraps to the output type
    if pat.op == "add":
        return args[0] + args[1]
    if pat.op == "sub":
        return args[0] - args[1]
    if pat.op == "neg":
        return -args[0]
    return args[0] * args[1]


def simulate(nl: Netlist, vectors: list[dict[str, int | float]], p: Program) -> list[dict[str, int | float]]:
    """Stream one input vector per cycle and collect each result at the latency.

    Instances with latency ``L`` produce at cycle ``t`` the function of the
    values present at their ports at cycle ``t - L``. Register chains delay
    by their depth and start cleared.
    """
    order = _topo(nl)
    in_of = {c: _ident(name) for name, c, _ in nl.inputs}
    vid_of = {_ident(v.id): v.id for v in p.inputs}
    const_of = {c: v for c, _, v in nl.consts}
    n = len(vectors)
    horizon = n + nl.latency
    hist: dict[int, list] = {c: [0] * horizon for c in nl.nets}
    for t in range(horizon):
        for c, port in in_of.items():
            if c < 0:
                continue
            hist[c][t] = vectors[t][vid_of[port]] if t < n else 0
        for c, v in const_of.items():
            hist[c][t] = v
        for inst in order:
            tau = t - inst.profile.latency
            if tau < 0:
                hist[inst.cls][t] = 0
                continue
            env = {}
            for cn in inst.connections:
                k = tau - cn.depth
                env[cn.port] = hist[cn.cls][k] if k >= 0 or cn.cls in const_of else 0
            val = _eval_pattern(inst.matcher, env, inst.dtype)
            if not inst.dtype.is_float:
                val = wrap(int(val), inst.dtype)
            hist[inst.cls][t] = val
    results = []
    for k in range(n):
        row = {}
        for (name, c, d, _), vid in zip(nl.outputs, p.outputs):
            t = k + nl.latency - d
            row[vid] = hist[c][t] if c in const_of or t >= 0 else 0
        results.append(row)
    return results
