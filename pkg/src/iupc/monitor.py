"""Event-driven enforcement and checking of constraints on running instances.

Anchors form when their occurrence completes. Atoms over anchors and
optional consequents are judged as soon as their occurrences exist;
obligations on mandatory consequents stay open until the instance closes.
Unknown data, actors or resources never produce a violation.
"""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime
from typing import TYPE_CHECKING, Any

from .constraints import ProcessConstraint
from .errors import OrderError, OutOfOrderEvent
from .expr import (
    DataExpr,
    DifferentActor,
    Ref,
    RoleIs,
    SameActor,
    TimeAtom,
    UsesResource,
    conjuncts,
    evaluate,
    expr_vars,
)
from .matcher import Item, Parallel, extend, overlap_parallel, requirement_relations, schema_parallel
from .process import Event, ProcessSchema, ResourceModel, SchemaSet, Trace, format_timestamp, schema_index

if TYPE_CHECKING:
    from .base import ConstraintBase

REASONS = ("pattern", "data", "time", "resource", "sync")


@dataclass(frozen=True)
class Action:
    kind: str  # trigger | attribute | raise-exception | acquire | queue | release | grant
    constraint: str
    instance: str
    occurrence: str
    timestamp: datetime
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "action": self.kind,
            "constraint": self.constraint,
            "instance": self.instance,
            "occurrence": self.occurrence,
            "timestamp": format_timestamp(self.timestamp),
            "detail": self.detail,
        }


@dataclass(frozen=True)
class Violation:
    constraint: str
    instance: str
    binding: tuple[tuple[str, str], ...]
    reason: str
    timestamp: datetime
    detail: str = ""

    def __post_init__(self) -> None:
        if self.reason not in REASONS:
            raise ValueError(f"unknown violation reason {self.reason!r}")

    def to_json(self) -> dict:
        return {
            "constraint": self.constraint,
            "instance": self.instance,
            "binding": dict(self.binding),
            "reason": self.reason,
            "timestamp": format_timestamp(self.timestamp),
            "detail": self.detail,
        }


@dataclass
class _Occurrence:
    id: str
    label: str
    actor: str | None
    data: dict[str, Any]
    started: datetime
    start_index: int
    completed: datetime | None = None


@dataclass
class _Obligation:
    constraint: str
    anchors: dict[str, str]  # var -> occurrence id
    formed: datetime


@dataclass
class _Instance:
    id: str
    process_type: str
    occurrences: dict[str, _Occurrence] = field(default_factory=dict)
    items: list[Item] = field(default_factory=list)
    data: dict[str, Any] = field(default_factory=dict)
    obligations: dict[tuple, _Obligation] = field(default_factory=dict)
    events: int = 0
    last: datetime | None = None
    closed: bool = False


@dataclass(frozen=True)
class _Plan:
    """Condition of one constraint split by when it can be decided."""

    gate: tuple[DataExpr, ...]
    optional_filter: tuple[DataExpr, ...]
    mandatory_filter: tuple[DataExpr, ...]
    immediate: tuple  # time/resource atoms over anchors + optional vars
    deferred_time: tuple
    deferred_resource: tuple
    obligating: bool  # something stays undecided until the instance closes

    @classmethod
    def of(cls, c: ProcessConstraint) -> _Plan:
        p = c.pattern
        anchors = {b.var for b in p.anchors}
        optional = {b.var for b in p.optional}
        gate, opt_f, man_f = [], [], []
        for conj in conjuncts(c.condition.data):
            vs = expr_vars(conj)
            if vs <= anchors:
                gate.append(conj)
            elif vs & optional:
                opt_f.append(conj)
            else:
                man_f.append(conj)
        immediate, dtime, dres = [], [], []
        for atom in c.condition.time:
            (immediate if atom.vars <= anchors | optional else dtime).append(atom)
        for atom in c.condition.resource:
            (immediate if atom.vars <= anchors | optional else dres).append(atom)
        obligating = bool(p.mandatory or p.absences or requirement_relations(p) or man_f or dtime or dres)
        return cls(tuple(gate), tuple(opt_f), tuple(man_f), tuple(immediate), tuple(dtime), tuple(dres), obligating)


@dataclass
class MonitorSession:
    constraints: dict[str, ProcessConstraint]
    schemas: dict[str, ProcessSchema]
    resource_model: ResourceModel
    active: set[str] = field(default_factory=set)
    attributes: dict[str, dict[str, Any]] = field(default_factory=dict)
    instances: dict[str, _Instance] = field(default_factory=dict)
    mutex: dict[str, tuple[str, str]] = field(default_factory=dict)  # resource -> (instance, occurrence)
    queues: dict[str, deque] = field(default_factory=dict)
    violations: list[Violation] = field(default_factory=list)
    actions: list[Action] = field(default_factory=list)
    last: datetime | None = None
    plans: dict[str, _Plan] = field(default_factory=dict)
    _reported: set[tuple] = field(default_factory=set)

    def applicable(self, inst: _Instance) -> list[ProcessConstraint]:
        return [
            self.constraints[cid]
            for cid in sorted(self.active)
            if self.constraints[cid].context.covers(inst.process_type, inst.id)
        ]

    def parallel(self, inst: _Instance) -> Parallel:
        return schema_parallel(self.schemas.get(inst.process_type)) or overlap_parallel


def open_session(
    base: ConstraintBase,
    schemas: SchemaSet = (),
    resource_model: ResourceModel | None = None,
    *,
    monitor_all: bool = False,
) -> MonitorSession:
    """Session over the enabled constraints with a run-time application.

    ``monitor_all`` also loads design-time-only constraints, which turns
    structural checks into run-time obligations.
    """
    from .base import filter_enabled

    enabled = filter_enabled(base)
    chosen = {
        cid: c
        for cid, c in enabled.constraints.items()
        if monitor_all or "run-time" in c.properties.application
    }
    sess = MonitorSession(chosen, schema_index(schemas), resource_model or ResourceModel())
    for cid, c in sorted(chosen.items()):
        sess.plans[cid] = _Plan.of(c)
        if c.properties.origin != "through-execution":
            sess.active.add(cid)
        beh = c.behavior
        if beh.kind == "attribute":
            label = c.pattern.variables[beh.target]
            sess.attributes.setdefault(label, {})[beh.key] = beh.value
    return sess


# -- evaluation --------------------------------------------------------------


def _lookup(inst: _Instance, bound: Mapping[str, _Occurrence]):
    def get(ref: Ref) -> object:
        if ref.var is not None:
            occ = bound.get(ref.var)
            if occ is None:
                return None
            if ref.field in occ.data:
                return occ.data[ref.field]
        return inst.data.get(ref.field)

    return get


def _all_true(exprs: Iterable[DataExpr], inst: _Instance, bound: Mapping[str, _Occurrence]) -> bool | None:
    """Kleene conjunction; None when undecided."""
    get = _lookup(inst, bound)
    result: bool | None = True
    for e in exprs:
        v = evaluate(e, get)
        if v is False:
            return False
        if v is None:
            result = None
    return result


def _atom(sess: MonitorSession, inst: _Instance, atom, bound: Mapping[str, _Occurrence]) -> bool | None:
    if isinstance(atom, TimeAtom):
        left, right = bound.get(atom.left), bound.get(atom.right)
        if left is None or right is None or left.completed is None:
            return None
        gap = (right.started - left.completed).total_seconds() * 1000
        return gap >= atom.duration.ms if atom.kind == "min" else gap <= atom.duration.ms
    model = sess.resource_model
    if isinstance(atom, RoleIs):
        occ = bound.get(atom.var)
        roles = model.roles_of(occ.actor) if occ else None
        return None if roles is None else atom.role in roles
    if isinstance(atom, (SameActor, DifferentActor)):
        a, b = bound.get(atom.left), bound.get(atom.right)
        if a is None or b is None or a.actor not in model.actors or b.actor not in model.actors:
            return None
        same = a.actor == b.actor
        return same if isinstance(atom, SameActor) else not same
    if isinstance(atom, UsesResource):
        occ = bound.get(atom.var)
        schema = sess.schemas.get(inst.process_type)
        if occ is None or schema is None:
            return None
        return any(atom.resource in schema.node_map[n].resources for n in schema.nodes_with_label(occ.label))
    raise TypeError(f"unknown atom {atom!r}")


def _scope(atom) -> str:
    return "time" if isinstance(atom, TimeAtom) else "resource"


def _occ_binding(inst: _Instance, bound: Mapping[str, Item]) -> dict[str, _Occurrence]:
    return {v: inst.occurrences[it.key] for v, it in bound.items()}


def _key(bound: Mapping[str, Item]) -> tuple[tuple[str, str], ...]:
    return tuple(sorted((v, it.key) for v, it in bound.items()))


def _report(sess: MonitorSession, out: list[Violation], v: Violation) -> None:
    key = (v.constraint, v.instance, v.binding, v.reason)
    if key in sess._reported:
        return
    sess._reported.add(key)
    out.append(v)
    sess.violations.append(v)


def _check_immediate(
    sess: MonitorSession,
    inst: _Instance,
    c: ProcessConstraint,
    beta: Mapping[str, Item],
    fresh: str,
    ts: datetime,
    out: list[Violation],
) -> None:
    """Universal check of atoms over anchors and optional consequents.

    Only assignments that involve the freshly completed occurrence are
    inspected, so each combination is judged once.
    """
    plan = sess.plans[c.id]
    if not plan.immediate:
        return
    p = c.pattern
    for full in extend(beta, p.optional, inst.items, p.relations, sess.parallel(inst)):
        if fresh not in {it.key for it in full.values()}:
            continue
        occs = _occ_binding(inst, full)
        if _all_true(plan.optional_filter, inst, occs) is not True:
            continue
        for atom in plan.immediate:
            if _atom(sess, inst, atom, occs) is False:
                _report(sess, out, Violation(c.id, inst.id, _key(full), _scope(atom), ts, str(atom)))


# -- synchronization ---------------------------------------------------------


def _acquire(sess: MonitorSession, c: ProcessConstraint, inst: _Instance, occ: str, ts: datetime, actions: list[Action]) -> None:
    r = c.behavior.resource
    assert r is not None
    if r not in sess.mutex:
        sess.mutex[r] = (inst.id, occ)
        actions.append(Action("acquire", c.id, inst.id, occ, ts, r))
    elif sess.mutex[r] != (inst.id, occ):
        sess.queues.setdefault(r, deque()).append((inst.id, occ))
        actions.append(Action("queue", c.id, inst.id, occ, ts, r))


def _release(
    sess: MonitorSession,
    c: ProcessConstraint,
    inst: _Instance,
    occ: str,
    ts: datetime,
    actions: list[Action],
    out: list[Violation],
    var: str,
) -> None:
    r = c.behavior.resource
    assert r is not None
    me = (inst.id, occ)
    queue = sess.queues.get(r, deque())
    if sess.mutex.get(r) == me:
        del sess.mutex[r]
        actions.append(Action("release", c.id, inst.id, occ, ts, r))
        if queue:
            nxt = queue.popleft()
            sess.mutex[r] = nxt
            actions.append(Action("grant", c.id, nxt[0], nxt[1], ts, r))
    elif me in queue:
        queue.remove(me)
        _report(sess, out, Violation(c.id, inst.id, ((var, occ),), "sync", ts, f"completed without holding {r}"))


# -- stepping ----------------------------------------------------------------


def _instance(sess: MonitorSession, instance_id: str, process_type: str) -> _Instance:
    inst = sess.instances.get(instance_id)
    if inst is None:
        inst = _Instance(instance_id, process_type)
        sess.instances[instance_id] = inst
        for cid, c in sorted(sess.constraints.items()):
            inst_scope = c.context.instances
            if c.properties.origin == "through-execution" and inst_scope and instance_id in inst_scope:
                sess.active.add(cid)
    elif inst.closed:
        raise OutOfOrderEvent(f"instance {instance_id} is already closed")
    elif inst.process_type != process_type:
        raise OrderError(f"instance {instance_id} changes process type")
    return inst


def _behavior_action(
    sess: MonitorSession,
    c: ProcessConstraint,
    inst: _Instance,
    occ: _Occurrence,
    var: str,
    phase: str,
    ts: datetime,
    actions: list[Action],
    out: list[Violation],
) -> None:
    beh = c.behavior
    if beh.kind == "synchronize":
        if phase == "start":
            _acquire(sess, c, inst, occ.id, ts, actions)
        return
    if beh.kind == "attribute":
        actions.append(Action("attribute", c.id, inst.id, occ.id, ts, f"{beh.key}:={beh.value}"))
        return
    if beh.kind == "raise-exception":
        bound = {var: occ}
        for b in c.pattern.bindings:
            if b.var not in bound:
                done = [o for o in inst.occurrences.values() if o.label == b.label and o.completed is not None]
                if done:
                    bound[b.var] = done[-1]
        verdicts = [_all_true(conjuncts(c.condition.data), inst, bound)]
        verdicts += [_atom(sess, inst, a, bound) for a in (*c.condition.time, *c.condition.resource)]
        if all(v is True for v in verdicts):
            actions.append(Action("raise-exception", c.id, inst.id, occ.id, ts, beh.message or ""))
        return
    actions.append(Action("trigger", c.id, inst.id, occ.id, ts, phase))


def step_event(
    sess: MonitorSession,
    event: Event,
    instance_id: str,
    process_type: str,
) -> tuple[list[Action], list[Violation]]:
    """Apply one event; returns the actions and violations it caused."""
    if sess.last is not None and event.timestamp < sess.last:
        raise OutOfOrderEvent(
            f"event at {format_timestamp(event.timestamp)} precedes {format_timestamp(sess.last)}"
        )
    inst = _instance(sess, instance_id, process_type)
    actions: list[Action] = []
    out: list[Violation] = []
    ts = event.timestamp
    idx = inst.events
    occ = inst.occurrences.get(event.occurrence_id)
    if event.kind == "start":
        if occ is not None:
            raise OrderError(f"occurrence {event.occurrence_id} started twice")
        occ = _Occurrence(event.occurrence_id, event.activity_label, event.actor, dict(event.data), ts, idx)
        inst.occurrences[occ.id] = occ
    else:
        if occ is None or occ.completed is not None or occ.label != event.activity_label:
            raise OrderError(f"occurrence {event.occurrence_id} completes without a matching start")
        occ.completed = ts
        occ.data.update(event.data)
        if event.actor is not None and occ.actor is None:
            occ.actor = event.actor
    inst.data.update(event.data)
    inst.events += 1
    inst.last = ts
    sess.last = ts

    if event.kind == "start":
        _on_start(sess, inst, occ, ts, actions, out)
    else:
        n = len(inst.items)
        inst.items.append(Item(occ.id, occ.label, n, n, None, (occ.start_index, idx)))
        _on_complete(sess, inst, occ, ts, actions, out)
    sess.actions.extend(actions)
    return actions, out


def _vars_for(c: ProcessConstraint, label: str) -> list[str]:
    return [b.var for b in c.pattern.bindings if b.label == label]


def _on_start(sess, inst, occ, ts, actions, out) -> None:
    for c in sess.applicable(inst):
        beh = c.behavior
        for var in _vars_for(c, occ.label):
            if beh.kind == "attribute" and beh.target == var and beh.key in ("ROLE", "ACTOR"):
                if beh.key == "ROLE":
                    roles = sess.resource_model.roles_of(occ.actor)
                    bad = roles is not None and beh.value not in roles
                else:
                    bad = occ.actor is not None and occ.actor != beh.value
                if bad:
                    detail = f"actor {occ.actor} lacks {beh.key} {beh.value}"
                    _report(sess, out, Violation(c.id, inst.id, ((var, occ.id),), "resource", ts, detail))
            positions = {t.position for t in c.linkage.triggers if t.target == var}
            if beh.kind == "synchronize" and beh.target == var and not c.linkage.triggers:
                positions.add("before")
            if "before" in positions:
                _behavior_action(sess, c, inst, occ, var, "start", ts, actions, out)


def _on_complete(sess, inst, occ, ts, actions, out) -> None:
    for c in sess.applicable(inst):
        p = c.pattern
        plan = sess.plans[c.id]
        for var in _vars_for(c, occ.label):
            if any(t.position == "after" and t.target == var for t in c.linkage.triggers):
                _behavior_action(sess, c, inst, occ, var, "complete", ts, actions, out)
            if c.behavior.kind == "synchronize" and c.behavior.target == var:
                _release(sess, c, inst, occ.id, ts, actions, out, var)
        if occ.label in p.anchor_labels:
            for beta in extend({}, p.anchors, inst.items, (), None):
                if occ.id not in {it.key for it in beta.values()}:
                    continue
                if _all_true(plan.gate, inst, _occ_binding(inst, beta)) is False:
                    continue
                key = (c.id, _key(beta))
                if plan.obligating:
                    inst.obligations[key] = _Obligation(c.id, {v: it.key for v, it in beta.items()}, ts)
                _check_immediate(sess, inst, c, beta, occ.id, ts, out)
        if any(b.label == occ.label for b in p.optional):
            for ob in [o for o in inst.obligations.values() if o.constraint == c.id]:
                beta = {v: _item(inst, k) for v, k in ob.anchors.items()}
                if occ.id in ob.anchors.values():
                    continue
                _check_immediate(sess, inst, c, beta, occ.id, ts, out)
            if not plan.obligating:
                # no obligations exist; revisit gated anchor bindings directly
                for beta in extend({}, p.anchors, inst.items, (), None):
                    if occ.id in {it.key for it in beta.values()}:
                        continue
                    if _all_true(plan.gate, inst, _occ_binding(inst, beta)) is False:
                        continue
                    _check_immediate(sess, inst, c, beta, occ.id, ts, out)


def _item(inst: _Instance, key: str) -> Item:
    return next(it for it in inst.items if it.key == key)


# -- closing -----------------------------------------------------------------


def _decide(sess: MonitorSession, inst: _Instance, c: ProcessConstraint, ob: _Obligation) -> tuple[str, str] | None:
    """None if the obligation is met, else (reason, detail) of the furthest failing stage."""
    p = c.pattern
    plan = sess.plans[c.id]
    absent = [it.label for it in inst.items if it.label in p.absences]
    if absent:
        return "pattern", f"absent activity {absent[0]!r} occurred"
    beta = {v: _item(inst, k) for v, k in ob.anchors.items()}
    best: tuple[int, str] = (0, "no matching consequent")
    for full in extend(beta, p.mandatory, inst.items, requirement_relations(p), sess.parallel(inst)):
        occs = _occ_binding(inst, full)
        if _all_true(plan.mandatory_filter, inst, occs) is False:
            best = max(best, (1, "data condition fails for every candidate"))
            continue
        failed = next((a for a in plan.deferred_time if _atom(sess, inst, a, occs) is False), None)
        if failed is not None:
            best = max(best, (2, str(failed)))
            continue
        failed = next((a for a in plan.deferred_resource if _atom(sess, inst, a, occs) is False), None)
        if failed is not None:
            best = max(best, (3, str(failed)))
            continue
        return None
    return ("pattern", "data", "time", "resource")[best[0]], best[1]


def close_instance(sess: MonitorSession, instance_id: str, timestamp: datetime | None = None) -> list[Violation]:
    """Decide open obligations of ``instance_id`` and retire its scoped constraints."""
    inst = sess.instances.get(instance_id)
    if inst is None:
        raise OrderError(f"instance {instance_id} never started")
    if inst.closed:
        return []
    ts = timestamp or inst.last
    assert ts is not None
    out: list[Violation] = []
    for key in sorted(inst.obligations):
        ob = inst.obligations[key]
        c = sess.constraints[ob.constraint]
        verdict = _decide(sess, inst, c, ob)
        if verdict is not None:
            reason, detail = verdict
            _report(sess, out, Violation(c.id, inst.id, tuple(sorted(ob.anchors.items())), reason, ts, detail))
    inst.obligations.clear()
    inst.closed = True
    for cid in sorted(sess.active):
        scoped = sess.constraints[cid].context.instances
        if sess.constraints[cid].properties.origin != "through-execution" or instance_id not in scoped:
            continue
        still_open = any(i in sess.instances and not sess.instances[i].closed for i in scoped)
        if not still_open:
            sess.active.discard(cid)
    return out


@dataclass(frozen=True)
class PendingObligation:
    constraint: str
    instance: str
    anchors: tuple[tuple[str, str], ...]
    since: datetime

    def to_json(self) -> dict:
        return {
            "constraint": self.constraint,
            "instance": self.instance,
            "anchors": dict(self.anchors),
            "since": format_timestamp(self.since),
        }


def pending_obligations(sess: MonitorSession) -> list[PendingObligation]:
    rows = []
    for inst in sess.instances.values():
        for ob in inst.obligations.values():
            rows.append(PendingObligation(ob.constraint, inst.id, tuple(sorted(ob.anchors.items())), ob.formed))
    return sorted(rows, key=lambda r: (r.constraint, r.instance, tuple(k for _, k in r.anchors)))


def merge_events(traces: Sequence[Trace]) -> list[tuple[Event, str, str]]:
    """Global stream ordered by timestamp; ties keep trace order, then event order."""
    tagged = [
        (e.timestamp, ti, ei, e, t.instance_id, t.process_type)
        for ti, t in enumerate(traces)
        for ei, e in enumerate(t.events)
    ]
    tagged.sort(key=lambda x: (x[0], x[1], x[2]))
    return [(e, iid, ptype) for _, _, _, e, iid, ptype in tagged]


def replay(sess: MonitorSession, traces: Sequence[Trace]) -> tuple[list[Action], list[Violation]]:
    """Run complete traces through ``sess`` and close every instance at the end."""
    actions: list[Action] = []
    violations: list[Violation] = []
    for e, iid, ptype in merge_events(traces):
        acts, viols = step_event(sess, e, iid, ptype)
        actions.extend(acts)
        violations.extend(viols)
    for t in traces:
        if t.instance_id in sess.instances:
            violations.extend(close_instance(sess, t.instance_id))
    return actions, violations
