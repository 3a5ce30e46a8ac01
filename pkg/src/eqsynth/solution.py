"""Solutions of the joint selection and scheduling problem."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .timing import DesignSpace, cuts, selection_delays, selection_order

STATUSES = ("optimal", "feasible", "infeasible", "timeout")


@dataclass
class Solution:
    chosen: dict[int, int]                 # class -> implementation node id
    start: dict[int, int]                  # node id -> start cycle
    finish: dict[int, int]                 # node id -> finish cycle
    class_finish: dict[int, int]
    latency: int
    solver: str
    status: str
    stats: dict = field(default_factory=dict)

    @property
    def selected(self) -> list[int]:
        return sorted(self.chosen.values())

    @property
    def impl_count(self) -> int:
        return len(self.chosen)

    def to_json(self, space: DesignSpace) -> dict:
        rows = []
        for i in self.selected:
            n = space.nodes[i]
            rows.append({"enode": n.id, "class": n.cls, "impl": n.impl[0], "config": n.impl[1],
                         "start": self.start[i], "finish": self.finish[i]})
        return {
            "selected": rows,
            "class_finish": {str(c): f for c, f in sorted(self.class_finish.items())},
            "latency": self.latency,
            "impl_count": self.impl_count,
            "solver": self.solver,
            "status": self.status,
        }

    def dumps(self, space: DesignSpace) -> str:
        return json.dumps(self.to_json(space), indent=2, sort_keys=True) + "\n"


def needed_classes(space: DesignSpace, chosen: dict[int, int]) -> set[int]:
    """Classes reachable from the roots through the chosen nodes."""
    seen, stack = set(), list(space.roots)
    while stack:
        c = stack.pop()
        if c in seen:
            continue
        seen.add(c)
        if c in chosen:
            stack.extend(space.nodes[chosen[c]].args)
    return seen


def schedule_selection(space: DesignSpace, chosen: dict[int, int], solver: str,
                       status: str = "feasible") -> Solution:
    """Earliest schedule for a fixed one-node-per-class selection.

    Every start is the longest of its operand finishes and of every chaining
    requirement between chosen nodes, measured on the actual selected term.
    All constraints are lower bounds, so this schedule is optimal for the
    selection.
    """
    order = selection_order(space, chosen)
    delays = selection_delays(space, chosen, order)
    consts, t_clk = space.constants, space.t_clk
    start, finish, cf = {}, {}, {c: 0 for c in space.leaves}
    for c in order:
        n = space.nodes[chosen[c]]
        s = max((cf.get(a, 0) for a in n.args), default=0)
        for src, d in delays.get(n.id, ()):
            s = max(s, finish[src] + cuts(d, t_clk, consts))
        start[n.id] = s
        finish[n.id] = s + n.latency
        cf[c] = finish[n.id]
    latency = max((cf.get(r, 0) for r in space.roots), default=0)
    return Solution(dict(chosen), start, finish, cf, latency, solver, status)
