"""Usage / application / scope / origin derivation and type classification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .constraints import RESOURCE_KEYS, TIME_KEYS, MetaConstraint, ProcessConstraint
from .expr import DifferentActor, RoleIs, SameActor, UsesResource

CONSTRAINT_TYPES = (
    "resource-attribution",
    "timing-attribution",
    "structural-compliance",
    "data-compliance",
    "temporal-compliance",
    "separation-of-duty",
    "binding-of-duty",
    "access-constraint",
    "synchronization",
    "meta",
    "generic-business-compliance",
)


@dataclass(frozen=True)
class DerivedProperties:
    usage: str  # compliance | behavioral | meta
    application: frozenset[str]
    scope: frozenset[str]
    origin: str  # external | through-execution

    def to_json(self) -> dict:
        return {
            "usage": self.usage,
            "application": sorted(self.application),
            "scope": sorted(self.scope),
            "origin": self.origin,
        }


def derive_properties(c: Union[ProcessConstraint, MetaConstraint]) -> DerivedProperties:
    if isinstance(c, MetaConstraint):
        return DerivedProperties("meta", frozenset({"design-time"}), frozenset({"structure"}), "external")

    beh = c.behavior
    cond = c.condition
    usage = "behavioral" if not beh.empty else "compliance"

    scope = {"structure"}
    if cond.data is not None:
        scope.add("data")
    if cond.time or (beh.kind == "attribute" and beh.key in TIME_KEYS):
        scope.add("time")
    if cond.resource or beh.kind == "synchronize" or (beh.kind == "attribute" and beh.key in RESOURCE_KEYS):
        scope.add("resource")

    application = set()
    if usage == "compliance":
        application.add("design-time")
    if scope & {"data", "time", "resource"} or not beh.empty:
        application.add("run-time")

    origin = "through-execution" if c.context.instances is not None else "external"
    return DerivedProperties(usage, frozenset(application), frozenset(scope), origin)


def classify_type(c: Union[ProcessConstraint, MetaConstraint]) -> str:
    props = c.properties
    if props.usage == "meta":
        return "meta"
    beh = c.behavior
    if props.usage == "behavioral":
        if beh.kind == "synchronize":
            return "synchronization"
        if beh.kind == "attribute" and beh.key in RESOURCE_KEYS:
            return "resource-attribution"
        if beh.kind == "attribute" and beh.key in TIME_KEYS:
            return "timing-attribution"
        return "generic-business-compliance"

    atoms = c.condition.resource
    if any(isinstance(a, SameActor) for a in atoms):
        return "binding-of-duty"
    if any(isinstance(a, DifferentActor) for a in atoms):
        return "separation-of-duty"
    if any(isinstance(a, (RoleIs, UsesResource)) for a in atoms):
        return "access-constraint"
    if c.condition.time:
        return "temporal-compliance"
    if c.condition.data is not None:
        return "data-compliance"
    if props.scope == {"structure"}:
        return "structural-compliance"
    return "generic-business-compliance"
