"""Process schemas, activity repository, resource model and execution traces.

All documents are UTF-8 JSON. Schemas, repositories and resource models are
single objects; traces are JSON lines, one event per line.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict, deque
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from functools import cached_property
from typing import Any, Union

from .errors import ModelError, NotIntervalDecidable, OrderError, ParseError
from .expr import DataExpr, IntervalSet, interval_of, refs, single_field

log = logging.getLogger(__name__)

NODE_KINDS = ("activity", "start", "end", "xor-split", "xor-join", "and-split", "and-join")
DATA_TYPES = ("integer", "string", "boolean")
SPLITS = ("xor-split", "and-split")
JOINS = ("xor-join", "and-join")


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    label: str | None = None
    resources: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in NODE_KINDS:
            raise ModelError(f"node {self.id!r}: unknown kind {self.kind!r}")
        if (self.kind == "activity") != bool(self.label):
            raise ModelError(f"node {self.id!r}: label must be set exactly for activity nodes")
        if self.resources and self.kind != "activity":
            raise ModelError(f"node {self.id!r}: only activities use resources")


@dataclass(frozen=True)
class DataElement:
    name: str
    type: str
    domain: tuple | None = None  # (lo, hi) for integer, enumeration for string

    def __post_init__(self) -> None:
        if self.type not in DATA_TYPES:
            raise ModelError(f"data element {self.name!r}: unknown type {self.type!r}")
        if self.domain is None:
            return
        if self.type == "integer":
            if len(self.domain) != 2 or self.domain[0] > self.domain[1]:
                raise ModelError(f"data element {self.name!r}: empty integer domain")
        elif self.type == "string":
            if not self.domain:
                raise ModelError(f"data element {self.name!r}: empty enumeration")
        else:
            raise ModelError(f"data element {self.name!r}: boolean elements take no domain")

    def interval(self) -> IntervalSet:
        if self.type == "integer" and self.domain is not None:
            return IntervalSet.of(self.domain[0], self.domain[1])
        return IntervalSet.everything()


@dataclass(frozen=True)
class Guard:
    expression: DataExpr
    text: str = field(default="", compare=False)

    @classmethod
    def parse(cls, text: str) -> Guard:
        from .dsl import format_data_expr, parse_data_expr

        expr = parse_data_expr(text, source="guard")
        return cls(expr, format_data_expr(expr))

    def __str__(self) -> str:
        if self.text:
            return self.text
        from .dsl import format_data_expr

        return format_data_expr(self.expression)


@dataclass(frozen=True)
class ControlEdge:
    source: str
    target: str
    guard: Guard | None = None


@dataclass(frozen=True)
class DataEdge:
    activity: str
    data_element: str
    mode: str  # read | write


@dataclass(frozen=True)
class ProcessSchema:
    id: str
    nodes: tuple[Node, ...]
    control_edges: tuple[ControlEdge, ...]
    data_elements: tuple[DataElement, ...] = ()
    data_edges: tuple[DataEdge, ...] = ()

    def __post_init__(self) -> None:
        _validate_schema(self)

    @cached_property
    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def element_map(self) -> dict[str, DataElement]:
        return {d.name: d for d in self.data_elements}

    @cached_property
    def out_edges(self) -> dict[str, tuple[int, ...]]:
        out: dict[str, list[int]] = defaultdict(list)
        for i, e in enumerate(self.control_edges):
            out[e.source].append(i)
        return {n.id: tuple(out.get(n.id, ())) for n in self.nodes}

    @cached_property
    def in_edges(self) -> dict[str, tuple[int, ...]]:
        inc: dict[str, list[int]] = defaultdict(list)
        for i, e in enumerate(self.control_edges):
            inc[e.target].append(i)
        return {n.id: tuple(inc.get(n.id, ())) for n in self.nodes}

    @property
    def start(self) -> Node:
        return next(n for n in self.nodes if n.kind == "start")

    @property
    def end(self) -> Node:
        return next(n for n in self.nodes if n.kind == "end")

    @property
    def activities(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.kind == "activity")

    @cached_property
    def labels(self) -> frozenset[str]:
        return frozenset(n.label for n in self.activities if n.label)

    def nodes_with_label(self, label: str) -> tuple[str, ...]:
        return tuple(sorted(n.id for n in self.activities if n.label == label))

    def successors(self, node_id: str) -> list[str]:
        return [self.control_edges[i].target for i in self.out_edges[node_id]]

    @cached_property
    def reach(self) -> dict[str, frozenset[str]]:
        """Nodes reachable from each node by one or more edges."""
        out = {}
        for n in self.nodes:
            seen: set[str] = set()
            todo = deque(self.successors(n.id))
            while todo:
                x = todo.popleft()
                if x in seen:
                    continue
                seen.add(x)
                todo.extend(self.successors(x))
            out[n.id] = frozenset(seen)
        return out

    @cached_property
    def concurrent_pairs(self) -> frozenset[frozenset[str]]:
        """Pairs of nodes on different branches of a common and-split.

        Nodes inside a cycle reach each other and are never reported.
        """
        pairs: set[frozenset[str]] = set()
        for g in self.nodes:
            if g.kind != "and-split":
                continue
            branches = [self.reach[t] | {t} for t in self.successors(g.id)]
            # whatever every branch reaches lies after the join
            after = frozenset.intersection(*branches)
            branches = [b - after for b in branches]
            for i, left in enumerate(branches):
                for right in branches[i + 1 :]:
                    for x in left:
                        for y in right:
                            if x != y and y not in self.reach[x] and x not in self.reach[y]:
                                pairs.add(frozenset((x, y)))
        return frozenset(pairs)

    def concurrent(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.concurrent_pairs


def _validate_schema(s: ProcessSchema) -> None:
    ids = [n.id for n in s.nodes]
    dup = sorted({i for i in ids if ids.count(i) > 1})
    if dup:
        raise ModelError(f"schema {s.id}: duplicate node ids {dup}")
    kinds = [n.kind for n in s.nodes]
    for kind in ("start", "end"):
        if kinds.count(kind) != 1:
            raise ModelError(f"schema {s.id}: needs exactly one {kind} node, found {kinds.count(kind)}")
    known = set(ids)
    seen_pairs = set()
    for e in s.control_edges:
        for end in (e.source, e.target):
            if end not in known:
                raise ModelError(f"schema {s.id}: edge {e.source}->{e.target} references unknown node {end!r}")
        if (e.source, e.target) in seen_pairs:
            raise ModelError(f"schema {s.id}: duplicate edge {e.source}->{e.target}")
        seen_pairs.add((e.source, e.target))

    indeg: dict[str, int] = defaultdict(int)
    outdeg: dict[str, int] = defaultdict(int)
    for e in s.control_edges:
        outdeg[e.source] += 1
        indeg[e.target] += 1
    for n in s.nodes:
        i, o = indeg[n.id], outdeg[n.id]
        if n.kind == "start":
            ok = i == 0 and o == 1
        elif n.kind == "end":
            ok = i == 1 and o == 0
        elif n.kind == "activity":
            ok = i == 1 and o == 1
        elif n.kind in SPLITS:
            ok = i == 1 and o >= 2
        else:
            ok = i >= 2 and o == 1
        if not ok:
            raise ModelError(f"schema {s.id}: node {n.id!r} ({n.kind}) has {i} incoming and {o} outgoing edges")

    elements = {}
    for d in s.data_elements:
        if d.name in elements:
            raise ModelError(f"schema {s.id}: duplicate data element {d.name!r}")
        elements[d.name] = d
    node_kind = {n.id: n.kind for n in s.nodes}
    for e in s.control_edges:
        split = node_kind[e.source] == "xor-split"
        if split and e.guard is None:
            raise ModelError(f"schema {s.id}: xor-split edge {e.source}->{e.target} lacks a guard")
        if not split and e.guard is not None:
            raise ModelError(f"schema {s.id}: edge {e.source}->{e.target} carries a guard but does not leave an xor-split")
        if e.guard is not None:
            for r in refs(e.guard.expression):
                if r.var is not None or r.field not in elements:
                    raise ModelError(f"schema {s.id}: guard on {e.source}->{e.target} references undeclared data element {str(r)!r}")
    for de in s.data_edges:
        if node_kind.get(de.activity) != "activity":
            raise ModelError(f"schema {s.id}: data edge references non-activity {de.activity!r}")
        if de.data_element not in elements:
            raise ModelError(f"schema {s.id}: data edge references undeclared data element {de.data_element!r}")
        if de.mode not in ("read", "write"):
            raise ModelError(f"schema {s.id}: data edge mode must be read or write, got {de.mode!r}")

    succ: dict[str, list[str]] = defaultdict(list)
    pred: dict[str, list[str]] = defaultdict(list)
    for e in s.control_edges:
        succ[e.source].append(e.target)
        pred[e.target].append(e.source)
    start = next(n.id for n in s.nodes if n.kind == "start")
    end = next(n.id for n in s.nodes if n.kind == "end")
    forward = _closure(start, succ)
    backward = _closure(end, pred)
    stranded = sorted(known - (forward & backward))
    if stranded:
        raise ModelError(f"schema {s.id}: nodes not on any start-to-end path: {stranded}")


def _closure(root: str, adj: Mapping[str, list[str]]) -> set[str]:
    seen = {root}
    todo = [root]
    while todo:
        for nxt in adj.get(todo.pop(), ()):
            if nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return seen


def guard_overlaps(schema: ProcessSchema) -> list[tuple[str, str, str]]:
    """Xor-split edge pairs whose integer guards can both hold.

    Returns ``(split, target_a, target_b)`` triples. Guards that are not
    single-field integer comparisons cannot be decided and are skipped.
    """
    flagged = []
    for n in schema.nodes:
        if n.kind != "xor-split":
            continue
        edges = [schema.control_edges[i] for i in schema.out_edges[n.id]]
        for i, a in enumerate(edges):
            for b in edges[i + 1 :]:
                assert a.guard is not None and b.guard is not None
                fa = single_field(a.guard.expression)
                if fa is None or fa != single_field(b.guard.expression):
                    continue
                try:
                    dom = schema.element_map[fa].interval()
                    ia = interval_of(a.guard.expression, fa).intersect(dom)
                    ib = interval_of(b.guard.expression, fa).intersect(dom)
                except NotIntervalDecidable:
                    continue
                if ia.intersect(ib):
                    flagged.append((n.id, a.target, b.target))
    return flagged


def insert_activity(schema: ProcessSchema, label: str, node_id: str | None = None) -> ProcessSchema:
    """Copy of ``schema`` with a new activity right after the start node."""
    if node_id is None:
        taken = set(schema.node_map)
        k = len(schema.nodes)
        while f"n{k}" in taken:
            k += 1
        node_id = f"n{k}"
    start = schema.start.id
    edges = []
    for e in schema.control_edges:
        if e.source == start:
            edges.append(ControlEdge(start, node_id))
            edges.append(ControlEdge(node_id, e.target))
        else:
            edges.append(e)
    return ProcessSchema(
        schema.id,
        schema.nodes + (Node(node_id, "activity", label),),
        tuple(edges),
        schema.data_elements,
        schema.data_edges,
    )


# -- JSON codecs -------------------------------------------------------------


def _load_json(text: str, what: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed {what} JSON: {exc.msg}", exc.lineno, exc.colno) from None


def _require(obj: Mapping, key: str, what: str, kind: type | tuple[type, ...] = str) -> Any:
    if key not in obj:
        raise ParseError(f"{what}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, kind):
        raise ParseError(f"{what}: field {key!r} has the wrong type")
    return value


def _object(value: Any, what: str) -> Mapping:
    if not isinstance(value, dict):
        raise ParseError(f"{what} must be a JSON object")
    return value


def schema_from_json(obj: Any) -> ProcessSchema:
    obj = _object(obj, "schema")
    sid = _require(obj, "id", "schema")
    nodes = []
    for raw in _require(obj, "nodes", f"schema {sid}", list):
        raw = _object(raw, f"schema {sid} node")
        nid = _require(raw, "id", f"schema {sid} node")
        nodes.append(
            Node(
                nid,
                _require(raw, "kind", f"node {nid}"),
                raw.get("label"),
                tuple(raw.get("resources", ())),
            )
        )
    edges = []
    for raw in _require(obj, "control_edges", f"schema {sid}", list):
        raw = _object(raw, f"schema {sid} edge")
        src = _require(raw, "from", f"schema {sid} edge")
        dst = _require(raw, "to", f"schema {sid} edge")
        guard = raw.get("guard")
        if guard is not None:
            if not isinstance(guard, str):
                raise ParseError(f"schema {sid}: guard on {src}->{dst} must be a string")
            try:
                guard = Guard.parse(guard)
            except ParseError as exc:
                raise ParseError(f"schema {sid}: guard on {src}->{dst}: {exc.message}") from None
        edges.append(ControlEdge(src, dst, guard))
    elements = []
    for raw in obj.get("data_elements", ()):
        raw = _object(raw, f"schema {sid} data element")
        name = _require(raw, "name", f"schema {sid} data element")
        dom = raw.get("domain")
        domain: tuple | None = None
        if isinstance(dom, dict) and "min" in dom and "max" in dom:
            domain = (int(dom["min"]), int(dom["max"]))
        elif isinstance(dom, dict) and "values" in dom:
            domain = tuple(str(v) for v in dom["values"])
        elif dom is not None:
            raise ParseError(f"data element {name}: domain must be {{min,max}} or {{values}}")
        elements.append(DataElement(name, _require(raw, "type", f"data element {name}"), domain))
    data_edges = []
    for raw in obj.get("data_edges", ()):
        raw = _object(raw, f"schema {sid} data edge")
        data_edges.append(
            DataEdge(
                _require(raw, "activity", "data edge"),
                _require(raw, "data_element", "data edge"),
                _require(raw, "mode", "data edge"),
            )
        )
    return ProcessSchema(sid, tuple(nodes), tuple(edges), tuple(elements), tuple(data_edges))


def parse_process_schema(text: str) -> ProcessSchema:
    schema = schema_from_json(_load_json(text, "schema"))
    for split, a, b in guard_overlaps(schema):
        log.warning("schema %s: guards of %s toward %s and %s overlap", schema.id, split, a, b)
    return schema


def schema_to_json(s: ProcessSchema) -> dict:
    nodes = []
    for n in s.nodes:
        d: dict[str, Any] = {"id": n.id, "kind": n.kind}
        if n.label:
            d["label"] = n.label
        if n.resources:
            d["resources"] = list(n.resources)
        nodes.append(d)
    edges = []
    for e in s.control_edges:
        d = {"from": e.source, "to": e.target}
        if e.guard is not None:
            d["guard"] = str(e.guard)
        edges.append(d)
    elements = []
    for el in s.data_elements:
        d = {"name": el.name, "type": el.type}
        if el.domain is not None:
            d["domain"] = (
                {"min": el.domain[0], "max": el.domain[1]} if el.type == "integer" else {"values": list(el.domain)}
            )
        elements.append(d)
    return {
        "id": s.id,
        "nodes": nodes,
        "control_edges": edges,
        "data_elements": elements,
        "data_edges": [{"activity": d.activity, "data_element": d.data_element, "mode": d.mode} for d in s.data_edges],
    }


def serialize_process_schema(s: ProcessSchema) -> str:
    return json.dumps(schema_to_json(s), indent=2, ensure_ascii=False) + "\n"


@dataclass(frozen=True)
class ActivityRepository:
    labels: frozenset[str] = frozenset()


def parse_activity_repository(text: str) -> ActivityRepository:
    obj = _object(_load_json(text, "repository"), "repository")
    labels = _require(obj, "labels", "repository", list)
    if not all(isinstance(x, str) and x for x in labels):
        raise ParseError("repository: labels must be non-empty strings")
    return ActivityRepository(frozenset(labels))


def serialize_activity_repository(repo: ActivityRepository) -> str:
    return json.dumps({"labels": sorted(repo.labels)}, indent=2, ensure_ascii=False) + "\n"


@dataclass(frozen=True)
class ResourceModel:
    roles: frozenset[str] = frozenset()
    actors: frozenset[str] = frozenset()
    role_assignments: Mapping[str, frozenset[str]] = field(default_factory=dict)
    resources: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        for actor, roles in sorted(self.role_assignments.items()):
            if actor not in self.actors:
                raise ModelError(f"role assignment names undeclared actor {actor!r}")
            missing = sorted(set(roles) - self.roles)
            if missing:
                raise ModelError(f"actor {actor!r} assigned undeclared role(s) {missing}")

    def roles_of(self, actor: str | None) -> frozenset[str] | None:
        """Roles held by ``actor``; None when the actor is unknown."""
        if actor is None or actor not in self.actors:
            return None
        return frozenset(self.role_assignments.get(actor, ()))


def parse_resource_model(text: str) -> ResourceModel:
    obj = _object(_load_json(text, "resource model"), "resource model")

    def names(key: str) -> frozenset[str]:
        value = obj.get(key, [])
        if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
            raise ParseError(f"resource model: {key} must be a list of strings")
        return frozenset(value)

    assignments_raw = obj.get("role_assignments", {})
    if not isinstance(assignments_raw, dict):
        raise ParseError("resource model: role_assignments must be an object")
    assignments = {}
    for actor, roles in assignments_raw.items():
        if isinstance(roles, str):
            roles = [roles]
        if not isinstance(roles, list):
            raise ParseError(f"resource model: roles of {actor!r} must be a list")
        assignments[actor] = frozenset(roles)
    return ResourceModel(names("roles"), names("actors"), assignments, names("resources"))


def serialize_resource_model(m: ResourceModel) -> str:
    obj = {
        "roles": sorted(m.roles),
        "actors": sorted(m.actors),
        "role_assignments": {a: sorted(r) for a, r in sorted(m.role_assignments.items())},
        "resources": sorted(m.resources),
    }
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


# -- traces ------------------------------------------------------------------


@dataclass(frozen=True)
class Event:
    kind: str  # start | complete
    activity_label: str
    occurrence_id: str
    timestamp: datetime
    actor: str | None = None
    data: Mapping[str, Any] = field(default_factory=dict)

    def shifted(self, delta: timedelta) -> Event:
        return Event(self.kind, self.activity_label, self.occurrence_id, self.timestamp + delta, self.actor, self.data)


@dataclass(frozen=True)
class Trace:
    instance_id: str
    process_type: str
    events: tuple[Event, ...]

    def __post_init__(self) -> None:
        check_trace_order(self.events, self.instance_id)

    def shifted(self, delta: timedelta) -> Trace:
        return Trace(self.instance_id, self.process_type, tuple(e.shifted(delta) for e in self.events))


def check_trace_order(events: Iterable[Event], instance_id: str = "?") -> None:
    last: datetime | None = None
    state: dict[str, tuple[str, str]] = {}
    for e in events:
        if e.kind not in ("start", "complete"):
            raise ParseError(f"instance {instance_id}: unknown event kind {e.kind!r}")
        if last is not None and e.timestamp < last:
            raise OrderError(f"instance {instance_id}: events not sorted by timestamp at {e.occurrence_id}")
        last = e.timestamp
        prev = state.get(e.occurrence_id)
        if e.kind == "start":
            if prev is not None:
                raise OrderError(f"instance {instance_id}: occurrence {e.occurrence_id} started twice")
            state[e.occurrence_id] = ("started", e.activity_label)
        else:
            if prev is None:
                raise OrderError(f"instance {instance_id}: occurrence {e.occurrence_id} completed before it started")
            if prev[0] == "completed":
                raise OrderError(f"instance {instance_id}: occurrence {e.occurrence_id} completed twice")
            if prev[1] != e.activity_label:
                raise OrderError(f"instance {instance_id}: occurrence {e.occurrence_id} changes label")
            state[e.occurrence_id] = ("completed", e.activity_label)


def parse_timestamp(text: str) -> datetime:
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        ts = datetime.fromisoformat(raw)
    except ValueError:
        raise ParseError(f"bad ISO-8601 timestamp {text!r}") from None
    if ts.tzinfo is None:
        raise ParseError(f"timestamp {text!r} lacks a UTC offset")
    ts = ts.astimezone(timezone.utc)
    return ts.replace(microsecond=ts.microsecond // 1000 * 1000)


def format_timestamp(ts: datetime) -> str:
    ts = ts.astimezone(timezone.utc)
    return ts.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts.microsecond // 1000:03d}Z"


def parse_trace(text: str) -> list[Trace]:
    grouped: dict[str, list[tuple[int, Event]]] = {}
    ptype: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed event JSON: {exc.msg}", lineno, exc.colno) from None
        if not isinstance(obj, dict):
            raise ParseError("event must be a JSON object", lineno, 1)
        try:
            iid = _require(obj, "instance_id", "event")
            proc = _require(obj, "process_type", "event")
            kind = _require(obj, "kind", "event")
            if kind not in ("start", "complete"):
                raise ParseError(f"event kind must be start or complete, got {kind!r}")
            data = obj.get("data") or {}
            if not isinstance(data, dict):
                raise ParseError("event data must be an object")
            actor = obj.get("actor")
            if actor is not None and not isinstance(actor, str):
                raise ParseError("event actor must be a string")
            event = Event(
                kind,
                _require(obj, "activity_label", "event"),
                str(_require(obj, "occurrence_id", "event", (str, int))),
                parse_timestamp(_require(obj, "timestamp", "event")),
                actor,
                data,
            )
        except ParseError as exc:
            raise ParseError(exc.message, lineno, 1) from None
        if ptype.setdefault(iid, proc) != proc:
            raise ParseError(f"instance {iid} changes process type", lineno, 1)
        grouped.setdefault(iid, []).append((lineno, event))
    traces = []
    for iid, items in grouped.items():
        items.sort(key=lambda pair: (pair[1].timestamp, pair[0]))
        traces.append(Trace(iid, ptype[iid], tuple(e for _, e in items)))
    return traces


def event_to_json(e: Event, instance_id: str, process_type: str) -> dict:
    return {
        "instance_id": instance_id,
        "process_type": process_type,
        "kind": e.kind,
        "activity_label": e.activity_label,
        "occurrence_id": e.occurrence_id,
        "timestamp": format_timestamp(e.timestamp),
        "actor": e.actor,
        "data": dict(e.data),
    }


def serialize_traces(traces: Iterable[Trace]) -> str:
    lines = []
    for t in traces:
        for e in t.events:
            lines.append(json.dumps(event_to_json(e, t.instance_id, t.process_type), sort_keys=True, ensure_ascii=False))
    return "\n".join(lines) + ("\n" if lines else "")


SchemaSet = Union[Mapping[str, ProcessSchema], Iterable[ProcessSchema]]


def schema_index(schemas: SchemaSet) -> dict[str, ProcessSchema]:
    if isinstance(schemas, Mapping):
        return dict(schemas)
    out = {}
    for s in schemas:
        if s.id in out:
            raise ModelError(f"two schemas share the id {s.id!r}")
        out[s.id] = s
    return out
