"""Implementation library: timing profiles, matchers and implementation rules."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .egraph import (EGraph, PNode, PVar, Pattern, RewriteRule, parse_pattern,
                     pattern_vars)

KINDS = ("basic-logic", "hardware-primitive", "parameterized-ip")
DTYPE_KINDS = ("int", "signed", "unsigned", "float")


class LibraryError(Exception):
    pass


@dataclass(frozen=True)
class Constants:
    t_net: float
    t_su: float
    t_clkq: float

    @property
    def register_overhead(self) -> float:
        """Delay added by one inserted pipeline register."""
        return self.t_su + self.t_clkq + self.t_net


@dataclass(frozen=True)
class TimingProfile:
    latency: int
    t_incoming: dict[str, float]
    t_outgoing: float
    t_cycle: float

    @property
    def combinational(self) -> bool:
        return self.latency == 0

    @property
    def t_incoming_max(self) -> float:
        return max(self.t_incoming.values(), default=0.0)

    def validate(self, where: str):
        if self.latency < 0:
            raise LibraryError(f"{where}: negative latency")
        delays = [self.t_outgoing, self.t_cycle, *self.t_incoming.values()]
        if any(d < 0 or not math.isfinite(d) for d in delays):
            raise LibraryError(f"{where}: delays must be finite and non-negative")
        if self.latency == 0 and (self.t_outgoing != 0 or self.t_cycle != 0):
            raise LibraryError(f"{where}: combinational configuration needs t_outgoing = t_cycle = 0")

    def fits(self, t_clk: float) -> bool:
        """Whether a single instance can run at clock period ``t_clk``."""
        return self.t_cycle <= t_clk and self.t_incoming_max <= t_clk and self.t_outgoing <= t_clk


@dataclass(frozen=True)
class Condition:
    port: str
    max_bits: int | None = None
    kind: str | None = None


@dataclass(frozen=True)
class Configuration:
    config_id: str
    profile: TimingProfile
    resources: dict[str, int] = field(default_factory=dict)
    template: str = ""
    params: dict[str, object] = field(default_factory=dict)


@dataclass
class ImplEntry:
    identifier: str
    kind: str
    matcher: Pattern
    ports: tuple[str, ...]
    conditions: list[Condition]
    configurations: list[Configuration]

    def config(self, config_id: str) -> Configuration:
        for c in self.configurations:
            if c.config_id == config_id:
                return c
        raise KeyError(f"{self.identifier} has no configuration {config_id!r}")

    @property
    def single_operation(self) -> bool:
        return isinstance(self.matcher, PNode) and all(
            isinstance(c, PVar) for c in self.matcher.children)


@dataclass
class ImplLibrary:
    constants: Constants
    entries: list[ImplEntry]
    algebraic_rules: list[RewriteRule] = field(default_factory=list)
    templates: dict[str, str] = field(default_factory=dict)
    name: str = "library"

    def __post_init__(self):
        self._by_id = {e.identifier: e for e in self.entries}

    def entry(self, identifier: str) -> ImplEntry:
        return self._by_id[identifier]

    def profile(self, impl: tuple[str, str]) -> TimingProfile:
        return self.entry(impl[0]).config(impl[1]).profile

    def configuration(self, impl: tuple[str, str]) -> Configuration:
        return self.entry(impl[0]).config(impl[1])

    def restrict(self, keep) -> "ImplLibrary":
        """Copy holding only entries for which ``keep(entry)`` is true."""
        return ImplLibrary(self.constants, [e for e in self.entries if keep(e)],
                           list(self.algebraic_rules), dict(self.templates), self.name)

    def per_operation(self) -> "ImplLibrary":
        return self.restrict(lambda e: e.single_operation)


def check_condition(cond: Condition, binding: dict[str, int], g: EGraph) -> bool:
    t = g.dtype_of(binding[cond.port])
    if cond.max_bits is not None and t.bits > cond.max_bits:
        return False
    if cond.kind == "float":
        return t.is_float
    if cond.kind == "int":
        return not t.is_float
    if cond.kind == "signed":
        return t.kind == "int"
    if cond.kind == "unsigned":
        return t.kind == "uint"
    return True


def enumerate_impl_rules(lib: ImplLibrary) -> list[RewriteRule]:
    rules = []
    for e in lib.entries:
        conds = tuple(e.conditions)

        def condition(g, binding, conds=conds):
            return all(check_condition(c, binding, g) for c in conds)

        for c in e.configurations:
            op = f"{e.identifier}#{c.config_id}"
            rules.append(RewriteRule(
                op, e.matcher, PNode(op, tuple(PVar(p) for p in e.ports)),
                kind="implementation", condition=condition,
                impl=(e.identifier, c.config_id), ports=e.ports))
    return rules


# --- file format --------------------------------------------------------------

def _num(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise LibraryError(f"{where}: expected a number, got {x!r}")
    return float(x)


def load_library(text: str) -> ImplLibrary:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise LibraryError(f"invalid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise LibraryError("library must be a JSON object")
    if doc.get("version") != 1:
        raise LibraryError(f"unsupported library version {doc.get('version')!r}")
    try:
        c = doc["constants"]
        consts = Constants(*(_num(c[k], f"constants.{k}") for k in ("t_net", "t_su", "t_clkq")))
    except (KeyError, TypeError):
        raise LibraryError("constants must define t_net, t_su and t_clkq") from None
    if min(consts.t_net, consts.t_su, consts.t_clkq) < 0:
        raise LibraryError("constants must be non-negative")

    rules = []
    for i, r in enumerate(doc.get("algebraic_rules", [])):
        try:
            name = r.get("name", f"rule{i}")
            text_ = r["rule"] if "rule" in r else f'{r["matcher"]} -> {r["applier"]}'
            kind = r.get("dtype_kind", "int")
            rules.append(RewriteRule.parse(name, text_, dtype_kind=None if kind == "any" else kind))
        except (KeyError, ValueError, TypeError) as e:
            raise LibraryError(f"algebraic_rules[{i}]: {e}") from None

    templates = doc.get("templates", {})
    if not isinstance(templates, dict) or not all(isinstance(v, str) for v in templates.values()):
        raise LibraryError("templates must map names to strings")

    entries = []
    seen = set()
    for i, raw in enumerate(doc.get("implementations", [])):
        where = f"implementations[{i}]"
        try:
            ident = raw["identifier"]
            kind = raw["kind"]
            matcher = parse_pattern(raw["matcher"])
        except KeyError as e:
            raise LibraryError(f"{where}: missing field {e}") from None
        except ValueError as e:
            raise LibraryError(f"{where}: {e}") from None
        if kind not in KINDS:
            raise LibraryError(f"{where}: unknown kind {kind!r}")
        if not isinstance(matcher, PNode):
            raise LibraryError(f"{where}: matcher must be an operator pattern")
        mvars = pattern_vars(matcher)
        ports = tuple(raw.get("ports", mvars))
        if sorted(ports) != sorted(mvars):
            raise LibraryError(f"{where}: ports {list(ports)} do not match matcher variables {mvars}")
        conds = []
        for c in raw.get("conditions", []):
            if c.get("port") not in ports:
                raise LibraryError(f"{where}: condition on unknown port {c.get('port')!r}")
            if c.get("kind") is not None and c["kind"] not in DTYPE_KINDS:
                raise LibraryError(f"{where}: unknown condition kind {c['kind']!r}")
            conds.append(Condition(c["port"], c.get("max_bits"), c.get("kind")))
        configs = []
        if not raw.get("configurations"):
            raise LibraryError(f"{where}: no configurations")
        for c in raw["configurations"]:
            cid = str(c.get("config", ""))
            cw = f"{ident}#{cid}"
            if not cid:
                raise LibraryError(f"{where}: configuration without id")
            if (ident, cid) in seen:
                raise LibraryError(f"duplicate implementation {cw}")
            seen.add((ident, cid))
            tin = c.get("t_incoming", {})
            if sorted(tin) != sorted(ports):
                raise LibraryError(f"{cw}: t_incoming must list exactly the ports {list(ports)}")
            lat = c.get("latency")
            if not isinstance(lat, int) or isinstance(lat, bool):
                raise LibraryError(f"{cw}: latency must be an integer")
            prof = TimingProfile(
                lat, {p: _num(tin[p], f"{cw}.t_incoming.{p}") for p in ports},
                _num(c.get("t_outgoing", 0.0), f"{cw}.t_outgoing"),
                _num(c.get("t_cycle", 0.0), f"{cw}.t_cycle"))
            prof.validate(cw)
            configs.append(Configuration(cid, prof, dict(c.get("resources", {})),
                                         c.get("template", ""), dict(c.get("params", {}))))
        entries.append(ImplEntry(ident, kind, matcher, ports, conds, configs))
    return ImplLibrary(consts, entries, rules, dict(templates), doc.get("name", "library"))


def library_to_json(lib: ImplLibrary) -> dict:
    pat = str
    return {
        "version": 1,
        "name": lib.name,
        "constants": {"t_net": lib.constants.t_net, "t_su": lib.constants.t_su,
                      "t_clkq": lib.constants.t_clkq},
        "algebraic_rules": [
            {"name": r.name, "rule": f"{pat(r.matcher)} -> {pat(r.applier)}",
             "dtype_kind": r.dtype_kind or "any"} for r in lib.algebraic_rules],
        "templates": dict(lib.templates),
        "implementations": [
            {
                "identifier": e.identifier,
                "kind": e.kind,
                "matcher": pat(e.matcher),
                "ports": list(e.ports),
                "conditions": [
                    {k: v for k, v in (("port", c.port), ("max_bits", c.max_bits), ("kind", c.kind))
                     if v is not None} for c in e.conditions],
                "configurations": [
                    {"config": c.config_id, "latency": c.profile.latency,
                     "t_incoming": dict(c.profile.t_incoming),
                     "t_outgoing": c.profile.t_outgoing, "t_cycle": c.profile.t_cycle,
                     "resources": dict(c.resources), "template": c.template,
                     "params": dict(c.params)} for c in e.configurations],
            }
            for e in lib.entries
        ],
    }


def sample_library_path() -> Path:
    return Path(str(resources.files("eqsynth") / "data" / "kintex_usp.json"))


def sample_library() -> ImplLibrary:
    return load_library(sample_library_path().read_text())


def resolve_library(spec: str | None) -> ImplLibrary:
    """Load a library by path, or the bundled one for ``None``/``kintex``."""
    if spec in (None, "kintex", "kintex.json", "kintex_usp"):
        if spec is None or not Path(spec).exists():
            return sample_library()
    return load_library(Path(spec).read_text())
