"""Structural pattern matching over schemas, execution paths and trace prefixes.

Paths and traces are both reduced to a sequence of :class:`Item` (one per
activity occurrence). ``order`` ranks items for eventually-precedes;
``rank`` counts activity items only, so directly-precedes means consecutive
ranks. Distinct variables always bind distinct items.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass

from .constraints import Binding, Relation, StructuralPattern
from .errors import PathExplosion
from .paths import ExecutionPath
from .process import ProcessSchema, Trace

MAX_ANCHOR_BINDINGS = 100_000


@dataclass(frozen=True)
class Item:
    key: str  # schema node id (paths) or occurrence id (traces)
    label: str
    order: int
    rank: int
    node: str | None = None
    span: tuple[int, int] | None = None  # event indices of start/complete


Parallel = Callable[[Item, Item], bool]


@dataclass(frozen=True)
class MatchBinding:
    assignment: tuple[tuple[str, str], ...]
    completeness: str  # anchor-only | full

    @classmethod
    def of(cls, mapping: Mapping[str, str], completeness: str) -> MatchBinding:
        return cls(tuple(sorted(mapping.items())), completeness)

    @property
    def mapping(self) -> dict[str, str]:
        return dict(self.assignment)

    def __getitem__(self, var: str) -> str:
        return self.mapping[var]


def relation_holds(rel: Relation, left: Item, right: Item, parallel: Parallel | None) -> bool:
    if rel.kind == "eventually-precedes":
        return left.order < right.order
    if rel.kind == "directly-precedes":
        return right.rank == left.rank + 1
    return parallel is not None and parallel(left, right)


def _relations_ok(relations: Sequence[Relation], bound: Mapping[str, Item], parallel: Parallel | None) -> bool:
    for rel in relations:
        if rel.left in bound and rel.right in bound:
            if not relation_holds(rel, bound[rel.left], bound[rel.right], parallel):
                return False
    return True


def extend(
    beta: Mapping[str, Item],
    variables: Sequence[Binding],
    items: Sequence[Item],
    relations: Sequence[Relation],
    parallel: Parallel | None,
) -> Iterator[dict[str, Item]]:
    """Injective extensions of ``beta`` over ``variables`` satisfying ``relations``.

    Relations are checked once both of their variables are bound (those
    among ``beta`` up front); relations mentioning a variable that never
    gets bound are ignored.
    """
    by_label: dict[str, list[Item]] = {}
    for it in items:
        by_label.setdefault(it.label, []).append(it)

    def go(i: int, bound: dict[str, Item], used: set[str]) -> Iterator[dict[str, Item]]:
        if i == len(variables):
            yield dict(bound)
            return
        b = variables[i]
        for it in by_label.get(b.label, ()):
            if it.key in used:
                continue
            bound[b.var] = it
            if _relations_ok(relations, bound, parallel):
                used.add(it.key)
                yield from go(i + 1, bound, used)
                used.discard(it.key)
            del bound[b.var]

    if not _relations_ok(relations, beta, parallel):
        return
    yield from go(0, dict(beta), {it.key for it in beta.values()})


def requirement_relations(p: StructuralPattern) -> tuple[Relation, ...]:
    """Relations that must hold; those touching optional variables only filter."""
    opt = {b.var for b in p.optional}
    return tuple(r for r in p.relations if r.left not in opt and r.right not in opt)


def structure_holds(p: StructuralPattern, items: Sequence[Item], beta: Mapping[str, Item], parallel: Parallel | None) -> bool:
    """Absences unmatched and mandatory consequents bindable for anchor binding ``beta``."""
    absent = set(p.absences)
    if any(it.label in absent for it in items):
        return False
    for _ in extend(beta, p.mandatory, items, requirement_relations(p), parallel):
        return True
    return False


def anchor_bindings(p: StructuralPattern, items: Sequence[Item], parallel: Parallel | None = None) -> Iterator[dict[str, Item]]:
    yield from extend({}, p.anchors, items, (), parallel)


# -- schema level ------------------------------------------------------------


def match_schema(p: StructuralPattern, s: ProcessSchema, cap: int = MAX_ANCHOR_BINDINGS) -> list[MatchBinding]:
    """Anchor-only bindings of ``p`` to activity nodes of ``s``.

    Anchors sharing a label may bind the same node; on a path through a loop
    that node can occur at two positions.
    """
    choices = [s.nodes_with_label(b.label) for b in p.anchors]
    total = 1
    for c in choices:
        total *= len(c)
    if total > cap:
        raise PathExplosion(f"{total} anchor bindings in schema {s.id} exceed the cap of {cap}")
    names = [b.var for b in p.anchors]
    return [MatchBinding.of(dict(zip(names, combo)), "anchor-only") for combo in itertools.product(*choices)]


def path_items(path: ExecutionPath) -> list[Item]:
    items = []
    rank = 0
    for pos, (node, label) in enumerate(zip(path.nodes, path.labels)):
        if label is None:
            continue
        items.append(Item(f"{pos}", label, pos, rank, node))
        rank += 1
    return items


def schema_parallel(schema: ProcessSchema | None) -> Parallel | None:
    if schema is None:
        return None

    def parallel(a: Item, b: Item) -> bool:
        if a.node is not None and b.node is not None:
            return schema.concurrent(a.node, b.node)
        left = schema.nodes_with_label(a.label)
        right = schema.nodes_with_label(b.label)
        return any(schema.concurrent(x, y) for x in left for y in right)

    return parallel


def holds_on_path(
    p: StructuralPattern,
    path: ExecutionPath,
    anchor: MatchBinding,
    schema: ProcessSchema | None = None,
) -> bool:
    """True iff every occurrence of the anchor nodes on ``path`` is satisfied.

    parallel-with is judged on ``schema``; without a schema it never holds.
    """
    items = path_items(path)
    parallel = schema_parallel(schema)
    per_var = []
    for var, node in anchor.assignment:
        per_var.append([(var, it) for it in items if it.node == node])
    for combo in itertools.product(*per_var):
        beta = dict(combo)
        if len({it.key for it in beta.values()}) < len(beta):
            continue
        if not structure_holds(p, items, beta, parallel):
            return False
    return True


# -- trace level -------------------------------------------------------------


def trace_items(trace: Trace, upto: int | None = None) -> list[Item]:
    """Completed occurrences in completion order."""
    events = trace.events if upto is None else trace.events[:upto]
    started: dict[str, int] = {}
    items = []
    for idx, e in enumerate(events):
        if e.kind == "start":
            started[e.occurrence_id] = idx
        else:
            n = len(items)
            items.append(Item(e.occurrence_id, e.activity_label, n, n, None, (started[e.occurrence_id], idx)))
    return items


def overlap_parallel(a: Item, b: Item) -> bool:
    if a.span is None or b.span is None:
        return False
    return a.span[0] < b.span[1] and b.span[0] < a.span[1]


def match_trace_prefix(
    p: StructuralPattern,
    t: Trace,
    upto: int | None = None,
    schema: ProcessSchema | None = None,
) -> list[MatchBinding]:
    """Bindings over occurrences completed within ``t.events[:upto]``.

    Each anchor binding yields its full extensions (all variables bound, all
    relations holding) or, failing that, a single anchor-only binding.
    parallel-with uses ``schema`` when given, otherwise overlapping
    execution intervals.
    """
    if upto is not None and not 0 <= upto <= len(t.events):
        raise ValueError("upto out of range")
    items = trace_items(t, upto)
    parallel = schema_parallel(schema) or overlap_parallel
    out: list[MatchBinding] = []
    for beta in anchor_bindings(p, items):
        full = [
            MatchBinding.of({v: it.key for v, it in ext.items()}, "full")
            for ext in extend(beta, p.consequents, items, p.relations, parallel)
            if _relations_ok(p.relations, ext, parallel)
        ]
        if full:
            out.extend(full)
        else:
            out.append(MatchBinding.of({v: it.key for v, it in beta.items()}, "anchor-only"))
    return sorted(set(out), key=lambda m: (m.completeness, m.assignment))
