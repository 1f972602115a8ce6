"""Design-time compliance checking of constraints against process schemas."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .constraints import ProcessConstraint
from .errors import IupcError, NotIntervalDecidable, PatternUnmatched
from .expr import DataExpr, IntervalSet, conjuncts, expr_vars, interval_of, refs
from .matcher import MatchBinding, holds_on_path, match_schema
from .paths import DEFAULT_LOOP_BOUND, DEFAULT_MAX_PATHS, ExecutionPath, enumerate_paths
from .process import ProcessSchema, SchemaSet, schema_index

if TYPE_CHECKING:
    from .base import ConstraintBase

SATISFIED, VIOLATED, POSSIBLY_VIOLATED = "satisfied", "violated", "possibly-violated"


@dataclass(frozen=True)
class Witness:
    kind: str  # path | interval
    nodes: tuple[str, ...] = ()
    labels: tuple[str, ...] = ()
    element: str | None = None
    interval: IntervalSet | None = None
    note: str = ""

    def to_json(self) -> dict:
        if self.kind == "interval":
            assert self.interval is not None
            return {"kind": "interval", "element": self.element, "intervals": self.interval.to_json(), "note": self.note}
        return {"kind": "path", "nodes": list(self.nodes), "activities": list(self.labels), "note": self.note}


@dataclass(frozen=True)
class Verdict:
    status: str
    witnesses: tuple[Witness, ...] = ()
    monitor_required: bool = False

    def __post_init__(self) -> None:
        if self.status != SATISFIED and not self.witnesses:
            raise ValueError(f"{self.status} verdict needs a witness")
        if self.status == POSSIBLY_VIOLATED and not self.monitor_required:
            raise ValueError("possibly-violated verdicts require monitoring")

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "witnesses": [w.to_json() for w in self.witnesses],
            "monitor_required": self.monitor_required,
        }


def _path_witness(path: ExecutionPath, note: str) -> Witness:
    return Witness("path", path.nodes, path.activities, note=note)


def split_data_condition(c: ProcessConstraint) -> tuple[list[DataExpr], list[DataExpr]]:
    """(gate, filters): conjuncts over anchors only decide whether ``c`` applies."""
    anchors = {b.var for b in c.pattern.anchors}
    gate, filters = [], []
    for conj in conjuncts(c.condition.data):
        (gate if expr_vars(conj) <= anchors else filters).append(conj)
    return gate, filters


def _gate_field(gate: Sequence[DataExpr], schema: ProcessSchema) -> str:
    fields = {r.field for conj in gate for r in refs(conj)}
    if len(fields) != 1:
        raise NotIntervalDecidable(f"data gate mentions {len(fields)} fields, need exactly one")
    name = fields.pop()
    element = schema.element_map.get(name)
    if element is None or element.type != "integer":
        raise NotIntervalDecidable(f"{name!r} is not an integer data element of schema {schema.id}")
    return name


def _gate_interval(gate: Sequence[DataExpr], name: str, schema: ProcessSchema) -> IntervalSet:
    out = schema.element_map[name].interval()
    for conj in gate:
        out = out.intersect(interval_of(conj, name))
    return out


def _path_interval(path: ExecutionPath, name: str, schema: ProcessSchema) -> IntervalSet:
    out = schema.element_map[name].interval()
    for g in path.guards:
        mentioned = {r.field for r in refs(g.expression)}
        if name not in mentioned:
            continue
        out = out.intersect(interval_of(g.expression, name))
    return out


def _anchor_on_path(binding: MatchBinding, path: ExecutionPath) -> bool:
    nodes = [n for _, n in binding.assignment]
    for n in set(nodes):
        if path.nodes.count(n) < nodes.count(n):
            return False
    return True


def check_design_time(
    c: ProcessConstraint,
    s: ProcessSchema,
    loop_bound: int = DEFAULT_LOOP_BOUND,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> Verdict:
    """Three-valued compliance verdict of ``c`` on ``s``.

    A path fails when some anchor occurrence on it lacks its consequents or
    meets an absent activity. If a data gate restricts when ``c`` applies,
    integer guards along the path are intersected with it: paths whose
    guards exclude the gate do not count at all. A failure is definite
    when there is no gate or the intersection is decidable, conditional
    otherwise. ``violated`` needs a definite failure on every counted path
    carrying an anchor.
    """
    p = c.pattern
    if not (p.anchor_labels & s.labels):
        raise PatternUnmatched(f"{c.id}: no anchor of {sorted(p.anchor_labels)} occurs in schema {s.id}")
    paths = enumerate_paths(s, loop_bound, max_paths)
    bindings = match_schema(p, s)
    gate, filters = split_data_condition(c)
    gate_name: str | None = None
    gate_iv: IntervalSet | None = None
    if gate:
        try:
            gate_name = _gate_field(gate, s)
            gate_iv = _gate_interval(gate, gate_name, s)
        except NotIntervalDecidable:
            gate_name = gate_iv = None

    anchor_paths: list[ExecutionPath] = []
    failing: list[tuple[ExecutionPath, bool]] = []
    exposure = IntervalSet()
    exposure_exact = True
    for path in paths:
        present = [b for b in bindings if _anchor_on_path(b, path)]
        if not present:
            continue
        hit: IntervalSet | None = None
        if gate and gate_iv is not None and gate_name is not None:
            try:
                hit = _path_interval(path, gate_name, s).intersect(gate_iv)
            except NotIntervalDecidable:
                hit = None
            else:
                if not hit:
                    continue  # the gate never holds on this path
        anchor_paths.append(path)
        if all(holds_on_path(p, path, b, s) for b in present):
            continue
        if not gate:
            failing.append((path, True))
        elif hit is None:
            failing.append((path, False))
            exposure_exact = False
        else:
            exposure = exposure.union(hit)
            failing.append((path, True))

    runtime_only = bool(c.condition.time or c.condition.resource or filters)
    if failing:
        worst = min((path for path, _ in failing), key=ExecutionPath.sort_key)
        if len(failing) == len(anchor_paths) and all(definite for _, definite in failing):
            return Verdict(VIOLATED, (_path_witness(worst, "consequent missing on every path"),), False)
        witnesses = [_path_witness(worst, "consequent missing on this path")]
        if gate_name is not None and exposure and exposure_exact:
            witnesses.append(Witness("interval", element=gate_name, interval=exposure, note="values reaching a failing path"))
        return Verdict(POSSIBLY_VIOLATED, tuple(witnesses), True)
    if runtime_only and anchor_paths:
        shortest = min(anchor_paths, key=ExecutionPath.sort_key)
        return Verdict(POSSIBLY_VIOLATED, (_path_witness(shortest, "depends on run-time values"),), True)
    return Verdict(SATISFIED)


def analyze_data_coverage(
    c: ProcessConstraint,
    s: ProcessSchema,
    loop_bound: int = DEFAULT_LOOP_BOUND,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> Verdict:
    """Values of the gated data element the schema leaves uncovered.

    Computes (values for which ``c`` applies) minus (values routed onto a
    path where ``c`` holds); a nonempty remainder is reported as an exact
    integer interval witness.
    """
    gate, filters = split_data_condition(c)
    if not gate or filters:
        raise NotIntervalDecidable(f"{c.id}: data condition is not a gate over anchor variables")
    name = _gate_field(gate, s)
    required = _gate_interval(gate, name, s)
    p = c.pattern
    bindings = match_schema(p, s)
    covered = IntervalSet()
    for path in enumerate_paths(s, loop_bound, max_paths):
        present = [b for b in bindings if _anchor_on_path(b, path)]
        if all(holds_on_path(p, path, b, s) for b in present):
            covered = covered.union(_path_interval(path, name, s))
    gap = required.difference(covered)
    if gap:
        return Verdict(
            POSSIBLY_VIOLATED,
            (Witness("interval", element=name, interval=gap, note="applies but no compliant path is taken"),),
            True,
        )
    return Verdict(SATISFIED)


@dataclass(frozen=True)
class ReportEntry:
    constraint: str
    schema: str | None
    status: str  # verdict status | skipped | error
    verdict: Verdict | None = None
    skipped_reason: str | None = None
    error: str | None = None

    def to_json(self) -> dict:
        out: dict = {"constraint": self.constraint, "schema": self.schema, "status": self.status}
        if self.verdict is not None:
            out["witnesses"] = [w.to_json() for w in self.verdict.witnesses]
            out["monitor_required"] = self.verdict.monitor_required
        else:
            out["witnesses"] = []
            out["monitor_required"] = False
        out["skipped_reason"] = self.skipped_reason
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass(frozen=True)
class VerificationReport:
    entries: tuple[ReportEntry, ...] = field(default_factory=tuple)

    @property
    def checks_performed(self) -> int:
        return sum(1 for e in self.entries if e.status not in ("skipped",))

    @property
    def skipped(self) -> int:
        return sum(1 for e in self.entries if e.status == "skipped")

    @property
    def clean(self) -> bool:
        return all(e.status in (SATISFIED, "skipped") for e in self.entries)

    def to_json(self) -> dict:
        return {
            "checked": self.checks_performed,
            "skipped": self.skipped,
            "results": [e.to_json() for e in self.entries],
        }


def verify_all(
    base: ConstraintBase,
    schemas: SchemaSet,
    loop_bound: int = DEFAULT_LOOP_BOUND,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> VerificationReport:
    """Check every enabled compliance constraint against the schemas it anchors in.

    Idle, non-process and behavioral constraints are reported as skipped.
    Per-pair errors are recorded instead of aborting the batch.
    """
    base.require_identification()
    index = schema_index(schemas)
    entries: list[ReportEntry] = []
    for cid in sorted(base.constraints):
        c = base.constraints[cid]
        ident = base.identification[cid]
        if ident.status != "enabled":
            entries.append(ReportEntry(cid, None, "skipped", skipped_reason=ident.status))
            continue
        if c.properties.usage != "compliance":
            entries.append(ReportEntry(cid, None, "skipped", skipped_reason=f"{c.properties.usage}: enforced at run-time"))
            continue
        for sid, _ in ident.schemas:
            schema = index.get(sid)
            if schema is None:
                entries.append(ReportEntry(cid, sid, "error", error=f"schema {sid} not loaded"))
                continue
            try:
                verdict = check_design_time(c, schema, loop_bound, max_paths)
                if split_data_condition(c)[0]:
                    try:
                        coverage = analyze_data_coverage(c, schema, loop_bound, max_paths)
                    except NotIntervalDecidable:
                        pass
                    else:
                        verdict = _merge_coverage(verdict, coverage)
            except IupcError as exc:
                entries.append(ReportEntry(cid, sid, "error", error=f"{type(exc).__name__}: {exc}"))
                continue
            entries.append(ReportEntry(cid, sid, verdict.status, verdict))
    return VerificationReport(tuple(entries))


def _merge_coverage(verdict: Verdict, coverage: Verdict) -> Verdict:
    """Prefer the coverage interval over the path-derived one."""
    if coverage.status == SATISFIED or verdict.status == SATISFIED:
        return verdict
    paths = tuple(w for w in verdict.witnesses if w.kind == "path")
    return Verdict(verdict.status, paths + coverage.witnesses, verdict.monitor_required)
