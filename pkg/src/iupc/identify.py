"""Separate process constraints from other domain rules; enabled vs idle."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import Union

from .constraints import OpaqueRule, ProcessConstraint
from .errors import ModelError
from .process import ActivityRepository, ProcessSchema, SchemaSet, insert_activity, schema_index

Rule = Union[ProcessConstraint, OpaqueRule]

ENABLED, IDLE, NON_PROCESS = "enabled", "idle", "non-process"


@dataclass(frozen=True)
class IdentificationResult:
    rule_id: str
    status: str
    schemas: tuple[tuple[str, tuple[str, ...]], ...] = ()  # enabled: (schema id, anchor labels found)
    repository_labels: tuple[str, ...] = ()  # idle: referenced labels found in the repository
    unresolved: tuple[str, ...] = ()  # non-process: labels found nowhere

    def to_json(self) -> dict:
        out: dict = {"rule": self.rule_id, "status": self.status}
        if self.status == ENABLED:
            out["evidence"] = [{"schema": s, "anchors": list(labels)} for s, labels in self.schemas]
        elif self.status == IDLE:
            out["evidence"] = {"repository": list(self.repository_labels)}
        else:
            out["evidence"] = {"unresolved": list(self.unresolved)}
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> IdentificationResult:
        status = obj["status"]
        ev = obj.get("evidence", {})
        if status == ENABLED:
            return cls(obj["rule"], status, tuple((e["schema"], tuple(e["anchors"])) for e in ev))
        if status == IDLE:
            return cls(obj["rule"], status, repository_labels=tuple(ev.get("repository", ())))
        return cls(obj["rule"], status, unresolved=tuple(ev.get("unresolved", ())))


@dataclass(frozen=True)
class DomainRuleSet:
    rules: tuple[Rule, ...]

    def __post_init__(self) -> None:
        ids = [r.id for r in self.rules]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ModelError(f"duplicate rule ids: {dupes}")

    @classmethod
    def of(cls, rules: Iterable[Rule]) -> DomainRuleSet:
        return cls(tuple(rules))

    def get(self, rule_id: str) -> Rule:
        return next(r for r in self.rules if r.id == rule_id)


def _classify(rule: Rule, schema_labels: Mapping[str, frozenset[str]], repo_labels: frozenset[str]) -> IdentificationResult:
    if isinstance(rule, OpaqueRule):
        return IdentificationResult(rule.id, NON_PROCESS)
    referenced = rule.pattern.labels
    known = repo_labels.union(*schema_labels.values()) if schema_labels else repo_labels
    missing = referenced - known
    if missing:
        return IdentificationResult(rule.id, NON_PROCESS, unresolved=tuple(sorted(missing)))
    anchors = rule.pattern.anchor_labels
    evidence = []
    for sid in sorted(schema_labels):
        if not rule.context.covers_process(sid):
            continue
        found = anchors & schema_labels[sid]
        if found:
            evidence.append((sid, tuple(sorted(found))))
    if evidence:
        return IdentificationResult(rule.id, ENABLED, tuple(evidence))
    return IdentificationResult(rule.id, IDLE, repository_labels=tuple(sorted(referenced & repo_labels)))


def _rules(rules: DomainRuleSet | Iterable[Rule]) -> tuple[Rule, ...]:
    return rules.rules if isinstance(rules, DomainRuleSet) else DomainRuleSet.of(rules).rules


def identify(
    rules: DomainRuleSet | Iterable[Rule],
    schemas: SchemaSet,
    repo: ActivityRepository,
) -> list[IdentificationResult]:
    """One result per rule, in rule order.

    A rule is a process constraint when every label it references occurs in
    some schema or in the repository. It is enabled when an anchor label
    occurs in a schema its context covers, idle otherwise.
    """
    labels = {sid: s.labels for sid, s in schema_index(schemas).items()}
    return [_classify(r, labels, repo.labels) for r in _rules(rules)]


@dataclass(frozen=True)
class Transition:
    rule_id: str
    before: str
    after: str


def recompute_on_change(
    prev: Sequence[IdentificationResult],
    added_activity: str,
    schema_id: str,
    rules: DomainRuleSet | Iterable[Rule],
    schemas: SchemaSet,
    repo: ActivityRepository,
) -> tuple[list[IdentificationResult], list[Transition]]:
    """Update ``prev`` after ``added_activity`` joins schema ``schema_id``.

    ``schemas`` is the pre-change set. Only rules referencing the added label
    are reclassified.
    """
    index = schema_index(schemas)
    if schema_id not in index:
        raise ModelError(f"unknown schema {schema_id!r}")
    labels = {sid: s.labels for sid, s in index.items()}
    labels[schema_id] = labels[schema_id] | {added_activity}
    by_id = {r.id: r for r in _rules(rules)}
    results = []
    transitions = []
    for old in prev:
        rule = by_id[old.rule_id]
        if isinstance(rule, ProcessConstraint) and added_activity in rule.pattern.labels:
            new = _classify(rule, labels, repo.labels)
            if new.status != old.status:
                transitions.append(Transition(rule.id, old.status, new.status))
            results.append(new)
        else:
            results.append(old)
    return results, transitions


def apply_change(schemas: SchemaSet, added_activity: str, schema_id: str) -> dict[str, ProcessSchema]:
    """Post-change schema set matching :func:`recompute_on_change`."""
    index = schema_index(schemas)
    index[schema_id] = insert_activity(index[schema_id], added_activity)
    return index
