"""Greedy joint selection and scheduling in topological class order."""
from __future__ import annotations

import heapq

from .solution import Solution, needed_classes, schedule_selection
from .timing import ChainingConstraintSet, DesignSpace, ImplNode, UnschedulableError


def tie_key(n: ImplNode, exposure: float = 0.0) -> tuple:
    return (round(exposure, 9), n.latency, n.impl[0], n.impl[1], n.id)


def tie_break(candidates: list[ImplNode], exposure: dict[int, float] | None = None) -> ImplNode:
    """Among equal-finish candidates prefer the earliest output arrival within
    the finishing cycle, then low latency, then name, config, id."""
    if not candidates:
        raise ValueError("no candidates")
    exposure = exposure or {}
    return min(candidates, key=lambda n: tie_key(n, exposure.get(n.id, 0.0)))


def _arrival(n: ImplNode, finish: int, space: DesignSpace, f_cls: dict, arr: dict) -> float:
    """Worst delay from the last register to ``n``'s output in its finishing cycle."""
    if not n.combinational:
        return n.profile.t_outgoing
    t = n.profile.t_incoming_max
    for a, p in zip(n.args, n.ports):
        if a in arr and f_cls[a] == finish:
            t = max(t, arr[a] + space.constants.t_net + n.t_in(p))
    return t + n.profile.t_outgoing


def class_order(space: DesignSpace):
    """Yield ``(class, ready nodes)`` in a topological order over classes.

    A class becomes ready once one of its nodes has all operand classes
    finished. Classes whose nodes are all ready go first; a partially ready
    class is only taken when nothing else is available.
    """
    done = set(space.leaves)
    missing = {}
    for n in space.nodes:
        missing[n.id] = len({a for a in n.args if a not in done})
    waiting = {}
    for c, ids in space.class_nodes.items():
        waiting[c] = sum(1 for i in ids if missing[i] > 0)
    full, partial = [], []

    def push(c):
        if waiting[c] == 0:
            heapq.heappush(full, c)
        else:
            heapq.heappush(partial, c)

    for c, ids in space.class_nodes.items():
        if any(missing[i] == 0 for i in ids):
            push(c)

    users_by_class = {}
    for n in space.nodes:
        for a in set(n.args):
            users_by_class.setdefault(a, []).append(n.id)

    while full or partial:
        # drop stale entries: a class may sit in both heaps
        while full and full[0] in done:
            heapq.heappop(full)
        if full:
            c = heapq.heappop(full)
        else:
            while partial and partial[0] in done:
                heapq.heappop(partial)
            if not partial:
                break
            c = heapq.heappop(partial)
        ready = [i for i in space.class_nodes[c] if missing[i] == 0]
        done.add(c)
        yield c, ready
        for j in users_by_class.get(c, ()):
            missing[j] -= 1
            if missing[j] == 0:
                d = space.nodes[j].cls
                waiting[d] -= 1
                if d not in done:
                    push(d)
    unscheduled = sorted(set(space.class_nodes) - done)
    if unscheduled:
        raise UnschedulableError(f"classes {unscheduled} never become ready")


def asap_schedule(space: DesignSpace, constraints: ChainingConstraintSet) -> Solution:
    """Visit classes in order and keep the node with the earliest finish.

    Chaining requirements are taken from the top-k set, and only from paths
    whose source and intermediate nodes are already selected. The final
    schedule is then recomputed on the selected term, so every combinational
    path that really exists in the result is accounted for.
    """
    b = set()
    f_node, f_cls = {}, {c: 0 for c in space.leaves}
    chosen = {}
    arr: dict[int, float] = {}
    for c, ready in class_order(space):
        cands = []
        for i in ready:
            n = space.nodes[i]
            s = max((f_cls[a] for a in n.args), default=0)
            for path, q in constraints.by_dst.get(i, ()):
                if path.inner <= b:
                    s = max(s, f_node[path.src] + q)
            cands.append((s + n.latency, n))
        best_f = min(f for f, _ in cands)
        tied = [n for f, n in cands if f == best_f]
        exposure = {n.id: _arrival(n, best_f, space, f_cls, arr) for n in tied}
        pick = tie_break(tied, exposure)
        arr[c] = exposure[pick.id]
        b.add(pick.id)
        f_node[pick.id] = best_f
        f_cls[c] = best_f
        chosen[c] = pick.id
    keep = needed_classes(space, chosen)
    chosen = {c: i for c, i in chosen.items() if c in keep}
    sol = schedule_selection(space, chosen, "asap", "feasible")
    sol.stats["greedy_latency"] = max((f_cls.get(r, 0) for r in space.roots), default=0)
    return sol
