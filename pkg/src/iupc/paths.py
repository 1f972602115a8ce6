"""Bounded enumeration of execution paths through a process schema.

Paths come from a token game: and-splits fork tokens, and-joins wait for all
branches, xor-splits pick one guarded branch. Gateways fire as soon as they
are enabled, in node-id order, so only activity firings interleave and every
distinct path differs in its activity order or its xor decisions.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import PathExplosion
from .process import Guard, ProcessSchema

DEFAULT_LOOP_BOUND = 2
DEFAULT_MAX_PATHS = 10**6


@dataclass(frozen=True)
class ExecutionPath:
    nodes: tuple[str, ...]
    labels: tuple[str | None, ...]
    guards: tuple[Guard, ...] = ()

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(label for label in self.labels if label is not None)

    @property
    def activity_nodes(self) -> tuple[str, ...]:
        return tuple(n for n, label in zip(self.nodes, self.labels) if label is not None)

    def sort_key(self) -> tuple:
        return (len(self.nodes), self.nodes)


@dataclass
class _State:
    marking: Counter
    fired: Counter
    seq: list
    guards: list

    def copy(self) -> _State:
        return _State(Counter(self.marking), Counter(self.fired), list(self.seq), list(self.guards))


def enumerate_paths(
    schema: ProcessSchema,
    loop_bound: int = DEFAULT_LOOP_BOUND,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> list[ExecutionPath]:
    """All start-to-end paths, each node firing at most ``loop_bound`` times.

    Runs that deadlock or finish with tokens left over are dropped. The
    result is sorted by length, then node ids.
    """
    if loop_bound < 1:
        raise ValueError("loop_bound must be at least 1")
    edges = schema.control_edges
    kind = {n.id: n.kind for n in schema.nodes}
    label = {n.id: n.label for n in schema.nodes}
    silent = sorted(n.id for n in schema.nodes if n.kind not in ("activity", "start"))
    acts = sorted(n.id for n in schema.activities)
    end = schema.end.id
    found: set[ExecutionPath] = set()

    def fire(st: _State, node: str, consume: list[int], produce: list[int]) -> bool:
        if st.fired[node] >= loop_bound:
            return False
        st.fired[node] += 1
        for i in consume:
            st.marking[i] -= 1
            if not st.marking[i]:
                del st.marking[i]
        for i in produce:
            st.marking[i] += 1
        st.seq.append(node)
        return True

    def enabled_silent(st: _State) -> str | None:
        for n in silent:
            ins = schema.in_edges[n]
            if kind[n] == "and-join":
                if all(st.marking[i] for i in ins):
                    return n
            elif any(st.marking[i] for i in ins):
                return n
        return None

    def settle(st: _State) -> list[_State]:
        """Fire gateways until only activities (or nothing) remain enabled."""
        out = []
        todo = [st]
        while todo:
            cur = todo.pop()
            n = enabled_silent(cur)
            if n is None:
                out.append(cur)
                continue
            ins = schema.in_edges[n]
            outs = list(schema.out_edges[n])
            k = kind[n]
            if k == "xor-split":
                for i in reversed(outs):
                    nxt = cur.copy()
                    if fire(nxt, n, [ins[0]], [i]):
                        nxt.guards.append(edges[i].guard)
                        todo.append(nxt)
            elif k == "and-join":
                if fire(cur, n, list(ins), outs):
                    todo.append(cur)
            elif k == "xor-join":
                first = next(i for i in ins if cur.marking[i])
                if fire(cur, n, [first], outs):
                    todo.append(cur)
            elif n == end:
                if fire(cur, n, [ins[0]], []):
                    out.append(cur)
            else:  # and-split
                if fire(cur, n, [ins[0]], outs):
                    todo.append(cur)
        return out

    def record(st: _State) -> None:
        path = ExecutionPath(tuple(st.seq), tuple(label[n] for n in st.seq), tuple(st.guards))
        if path not in found:
            found.add(path)
            if len(found) > max_paths:
                raise PathExplosion(f"schema {schema.id}: more than {max_paths} paths at loop bound {loop_bound}")

    def explore(st: _State) -> None:
        for cur in settle(st):
            if cur.seq and cur.seq[-1] == end:
                if not cur.marking:
                    record(cur)
                continue
            for a in acts:
                i = schema.in_edges[a][0]
                if cur.marking[i]:
                    nxt = cur.copy()
                    if fire(nxt, a, [i], list(schema.out_edges[a])):
                        explore(nxt)

    start = schema.start.id
    init = _State(Counter(), Counter(), [], [])
    fire(init, start, [], list(schema.out_edges[start]))
    explore(init)
    return sorted(found, key=ExecutionPath.sort_key)
