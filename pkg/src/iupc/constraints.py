"""Unified constraint representation: linkage, condition, behavior."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Union

from .errors import BindError, ModelError
from .expr import DataExpr, Duration, ResourceAtom, TimeAtom, expr_vars

if TYPE_CHECKING:
    from .properties import DerivedProperties

RELATION_KINDS = ("eventually-precedes", "directly-precedes", "parallel-with")
BEHAVIOR_KINDS = ("none", "attribute", "synchronize", "raise-exception")
RESOURCE_KEYS = ("ROLE", "ACTOR", "NODE")
TIME_KEYS = ("DURATION", "MIN_DURATION", "MAX_DURATION")


@dataclass(frozen=True)
class Binding:
    """``exists var is 'label'``.

    Anchors form the triggering part. Consequents are mandatory unless
    ``optional``, in which case they only restrict occurrences that happen
    to match.
    """

    var: str
    label: str
    anchor: bool
    optional: bool = False


@dataclass(frozen=True)
class Relation:
    kind: str
    left: str
    right: str

    def __post_init__(self) -> None:
        if self.kind not in RELATION_KINDS:
            raise ModelError(f"unknown relation {self.kind!r}")
        if self.left == self.right:
            raise ModelError(f"relation {self.kind} relates {self.left!r} to itself")


@dataclass(frozen=True)
class StructuralPattern:
    bindings: tuple[Binding, ...]
    relations: tuple[Relation, ...] = ()
    absences: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for b in self.bindings:
            if b.var in seen:
                raise BindError(f"variable {b.var!r} bound twice")
            if b.anchor and b.optional:
                raise ModelError(f"anchor {b.var!r} cannot be optional")
            seen.add(b.var)
        if not any(b.anchor for b in self.bindings):
            raise ModelError("structural pattern needs at least one anchor binding")
        for r in self.relations:
            for v in (r.left, r.right):
                if v not in seen:
                    raise BindError(f"relation {r.kind} uses unbound variable {v!r}")

    @property
    def anchors(self) -> tuple[Binding, ...]:
        return tuple(b for b in self.bindings if b.anchor)

    @property
    def consequents(self) -> tuple[Binding, ...]:
        return tuple(b for b in self.bindings if not b.anchor)

    @property
    def mandatory(self) -> tuple[Binding, ...]:
        return tuple(b for b in self.bindings if not b.anchor and not b.optional)

    @property
    def optional(self) -> tuple[Binding, ...]:
        return tuple(b for b in self.bindings if b.optional)

    @property
    def variables(self) -> dict[str, str]:
        return {b.var: b.label for b in self.bindings}

    @property
    def anchor_labels(self) -> frozenset[str]:
        return frozenset(b.label for b in self.anchors)

    @property
    def labels(self) -> frozenset[str]:
        """Every activity label the pattern references, absences included."""
        return frozenset(b.label for b in self.bindings) | frozenset(self.absences)

    def formula(self) -> str:
        parts = [f"∃{b.var} Is({b.var}, {b.label})" for b in self.bindings]
        sym = {"eventually-precedes": "A*", "directly-precedes": "→", "parallel-with": "||"}
        parts += [f"{r.left}{sym[r.kind]}{r.right}" for r in self.relations]
        parts += [f"¬∃ Is(·, {label})" for label in self.absences]
        return " ∧ ".join(parts)


@dataclass(frozen=True)
class TriggerPosition:
    position: str  # "before" | "after"
    target: str

    def __post_init__(self) -> None:
        if self.position not in ("before", "after"):
            raise ModelError(f"trigger position must be before/after, got {self.position!r}")


@dataclass(frozen=True)
class Context:
    """Processes and instances a constraint covers; ``None`` means ALL."""

    processes: frozenset[str] | None = None
    instances: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if self.processes is not None and not self.processes:
            raise ModelError("named process set must not be empty")
        if self.instances is not None and not self.instances:
            raise ModelError("named instance set must not be empty")

    def covers_process(self, process: str) -> bool:
        return self.processes is None or process in self.processes

    def covers(self, process: str, instance: str | None = None) -> bool:
        if not self.covers_process(process):
            return False
        return instance is None or self.instances is None or instance in self.instances

    def overlaps(self, other: Context) -> bool:
        def meet(a: frozenset[str] | None, b: frozenset[str] | None) -> bool:
            return a is None or b is None or bool(a & b)

        return meet(self.processes, other.processes) and meet(self.instances, other.instances)

    def compact(self) -> str:
        procs = "ALL" if self.processes is None else ", ".join(sorted(self.processes))
        inst = "ALL" if self.instances is None else "{" + ", ".join(sorted(self.instances)) + "}"
        return f"({procs}, {inst})"


@dataclass(frozen=True)
class Linkage:
    context: Context
    pattern: StructuralPattern
    triggers: tuple[TriggerPosition, ...] = ()

    def __post_init__(self) -> None:
        bound = self.pattern.variables
        for tp in self.triggers:
            if tp.target not in bound:
                raise BindError(f"trigger {tp.position} {tp.target!r} references an unbound variable")

    def compact(self, name: str = "c") -> str:
        if self.triggers:
            tp = ", ".join(f"{t.position}({t.target})" for t in self.triggers)
        else:
            tp = "∅"
        return f"({self.context.compact()}, SP_{name}, {tp})"


@dataclass(frozen=True)
class Condition:
    data: DataExpr | None = None
    time: tuple[TimeAtom, ...] = ()
    resource: tuple[ResourceAtom, ...] = ()

    @property
    def empty(self) -> bool:
        return self.data is None and not self.time and not self.resource

    @property
    def vars(self) -> frozenset[str]:
        out: set[str] = set()
        if self.data is not None:
            out |= expr_vars(self.data)
        for atom in self.time:
            out |= atom.vars
        for ratom in self.resource:
            out |= ratom.vars
        return frozenset(out)


AttributeValue = Union[str, tuple[Duration, Duration]]


@dataclass(frozen=True)
class Behavior:
    kind: str = "none"
    target: str | None = None
    key: str | None = None
    value: AttributeValue | None = None
    resource: str | None = None
    message: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in BEHAVIOR_KINDS:
            raise ModelError(f"unknown behavior kind {self.kind!r}")
        if self.kind != "none" and not self.target:
            raise ModelError(f"behavior {self.kind} needs a target variable")
        if self.kind == "attribute":
            if self.key in RESOURCE_KEYS:
                if not isinstance(self.value, str):
                    raise ModelError(f"{self.key} attribution needs a string value")
            elif self.key in TIME_KEYS:
                if self.key == "DURATION":
                    ok = isinstance(self.value, tuple) and len(self.value) == 2
                else:
                    ok = isinstance(self.value, tuple) and len(self.value) == 1
                if not ok:
                    raise ModelError(f"{self.key} attribution has the wrong number of durations")
            else:
                raise ModelError(f"unknown attribute key {self.key!r}")
        if self.kind == "synchronize" and not self.resource:
            raise ModelError("synchronize needs a resource name")

    @property
    def empty(self) -> bool:
        return self.kind == "none"


@dataclass(frozen=True)
class ProcessConstraint:
    id: str
    linkage: Linkage
    condition: Condition = field(default_factory=Condition)
    behavior: Behavior = field(default_factory=Behavior)
    source_text: str = ""

    def __post_init__(self) -> None:
        bound = self.linkage.pattern.variables
        for var in sorted(self.condition.vars):
            if var not in bound:
                raise BindError(f"{self.id}: condition references unbound variable {var!r}")
        if self.behavior.target is not None and self.behavior.target not in bound:
            raise BindError(f"{self.id}: behavior targets unbound variable {self.behavior.target!r}")
        if self.linkage.triggers and self.behavior.empty:
            raise ModelError(f"{self.id}: trigger positions require a behavior")
        if self.behavior.kind == "raise-exception" and self.condition.empty:
            raise ModelError(f"{self.id}: raise-exception requires a condition")

    @property
    def pattern(self) -> StructuralPattern:
        return self.linkage.pattern

    @property
    def context(self) -> Context:
        return self.linkage.context

    @cached_property
    def properties(self) -> DerivedProperties:
        from .properties import derive_properties

        return derive_properties(self)

    @property
    def constraint_type(self) -> str:
        from .properties import classify_type

        return classify_type(self)

    def compact(self) -> str:
        return self.linkage.compact(self.id)

    def structure_key(self) -> tuple:
        """Everything but id and free text; equal keys mean duplicate rules."""
        return (self.linkage, self.condition, self.behavior)


META_CONSTRAINT_FILTERS = ("usage", "type", "scope", "application")
META_CONSTRAINT_REQUIREMENTS = ("trigger", "condition", "behavior", "scope", "application")


@dataclass(frozen=True)
class MetaConstraint:
    """A rule over the constraint base itself.

    ``subject == "activity"``: for every schema activity using ``where_value``
    (a passive resource), constraint ``require_value`` must be attached.
    ``subject == "constraint"``: every constraint matching the optional
    ``where_key``/``where_value`` filter must satisfy ``require_key``.
    """

    id: str
    subject: str
    where_key: str | None = None
    where_value: str | None = None
    require_key: str = "constraint"
    require_value: str | None = None
    source_text: str = ""

    def __post_init__(self) -> None:
        if self.subject == "activity":
            if self.where_key != "using" or not self.where_value:
                raise ModelError(f"{self.id}: activity meta constraints select by 'using RESOURCE'")
            if self.require_key != "constraint" or not self.require_value:
                raise ModelError(f"{self.id}: activity meta constraints require 'constraint ID'")
        elif self.subject == "constraint":
            if self.where_key is not None and self.where_key not in META_CONSTRAINT_FILTERS:
                raise ModelError(f"{self.id}: unknown filter {self.where_key!r}")
            if self.require_key not in META_CONSTRAINT_REQUIREMENTS:
                raise ModelError(f"{self.id}: unknown requirement {self.require_key!r}")
        else:
            raise ModelError(f"{self.id}: meta subject must be activity or constraint")

    @cached_property
    def properties(self) -> DerivedProperties:
        from .properties import derive_properties

        return derive_properties(self)

    @property
    def constraint_type(self) -> str:
        return "meta"


@dataclass(frozen=True)
class OpaqueRule:
    """A domain rule with no structural pattern (never a process constraint)."""

    id: str
    text: str
