"""Persistent constraint base with consistency checks and meta constraints."""

from __future__ import annotations

import itertools
import json
import os
import tempfile
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path

from .constraints import MetaConstraint, ProcessConstraint
from .dsl import parse_document, serialize_meta, serialize_constraint
from .errors import ModelError, ParseError, StaleIdentification, VersionConflict
from .identify import IdentificationResult, identify
from .process import ActivityRepository, ResourceModel, SchemaSet, schema_index

INDEX_FORMAT = 1


@dataclass
class ConstraintBase:
    """Mutable store; ``version`` counts mutations and never decreases."""

    constraints: dict[str, ProcessConstraint] = field(default_factory=dict)
    meta_constraints: list[MetaConstraint] = field(default_factory=list)
    identification: dict[str, IdentificationResult] = field(default_factory=dict)
    version: int = 0
    identified_version: int | None = None
    loaded_version: int | None = field(default=None, compare=False)

    @classmethod
    def of(cls, items: Iterable[ProcessConstraint | MetaConstraint]) -> ConstraintBase:
        base = cls()
        for item in items:
            if isinstance(item, MetaConstraint):
                base.add_meta(item)
            else:
                base.add(item)
        return base

    def _ids(self) -> set[str]:
        return set(self.constraints) | {m.id for m in self.meta_constraints}

    def add(self, c: ProcessConstraint) -> None:
        if c.id in self._ids():
            raise ModelError(f"id {c.id!r} already in the base")
        self.constraints[c.id] = c
        self.version += 1

    def remove(self, cid: str) -> ProcessConstraint:
        c = self.constraints.pop(cid)
        self.identification.pop(cid, None)
        self.version += 1
        return c

    def add_meta(self, m: MetaConstraint) -> None:
        if m.id in self._ids():
            raise ModelError(f"id {m.id!r} already in the base")
        self.meta_constraints.append(m)
        self.version += 1

    def remove_meta(self, mid: str) -> MetaConstraint:
        for i, m in enumerate(self.meta_constraints):
            if m.id == mid:
                self.version += 1
                return self.meta_constraints.pop(i)
        raise KeyError(mid)

    def set_identification(self, results: Iterable[IdentificationResult]) -> None:
        table = {r.rule_id: r for r in results}
        if set(table) != set(self.constraints):
            raise ModelError("identification must cover exactly the constraint ids")
        self.identification = table
        self.identified_version = self.version

    def identify(self, schemas: SchemaSet, repo: ActivityRepository) -> list[IdentificationResult]:
        ordered = [self.constraints[k] for k in sorted(self.constraints)]
        results = identify(ordered, schemas, repo)
        self.set_identification(results)
        return results

    @property
    def stale(self) -> bool:
        return self.identified_version is None or self.identified_version < self.version

    def require_identification(self) -> None:
        if self.stale:
            have = "never" if self.identified_version is None else f"at version {self.identified_version}"
            raise StaleIdentification(f"base is at version {self.version}, identified {have}")


def filter_enabled(base: ConstraintBase) -> ConstraintBase:
    """Sub-base of the enabled constraints, sharing version and identification."""
    base.require_identification()
    keep = {cid: c for cid, c in base.constraints.items() if base.identification[cid].status == "enabled"}
    return ConstraintBase(
        keep,
        list(base.meta_constraints),
        {cid: base.identification[cid] for cid in keep},
        base.version,
        base.version,
    )


# -- persistence -------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_index(root: Path) -> dict:
    index = root / "index.json"
    try:
        obj = json.loads(index.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError("missing index.json", source=str(index)) from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed index: {exc.msg}", exc.lineno, exc.colno, str(index)) from None
    if not isinstance(obj, dict) or obj.get("format") != INDEX_FORMAT:
        raise ParseError(f"index format must be {INDEX_FORMAT}", source=str(index))
    for key, kind in (("version", int), ("constraints", list), ("meta", list)):
        if not isinstance(obj.get(key), kind):
            raise ParseError(f"index field {key!r} missing or mistyped", source=str(index))
    return obj


def load_base(path: str | os.PathLike) -> ConstraintBase:
    root = Path(path)
    obj = _read_index(root)
    base = ConstraintBase()
    for cid in obj["constraints"] + obj["meta"]:
        file = root / "constraints" / f"{cid}.iupc"
        try:
            text = file.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ParseError(f"missing constraint file for {cid}", source=str(file)) from None
        stmts = parse_document(text, str(file))
        if len(stmts) != 1 or stmts[0].id != cid:
            raise ParseError(f"expected exactly one statement with id {cid}", source=str(file))
        stmt = stmts[0]
        if isinstance(stmt, ProcessConstraint) and cid in obj["constraints"]:
            base.constraints[cid] = stmt
        elif isinstance(stmt, MetaConstraint) and cid in obj["meta"]:
            base.meta_constraints.append(stmt)
        else:
            raise ParseError(f"{cid} has the wrong statement kind", source=str(file))
    base.version = obj["version"]
    ident = obj.get("identification")
    if ident is not None:
        try:
            base.identification = {r["rule"]: IdentificationResult.from_json(r) for r in ident["results"]}
            base.identified_version = int(ident["version"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed identification cache: {exc}", source=str(root / "index.json")) from None
        if set(base.identification) != set(base.constraints):
            raise ParseError("identification cache does not match the constraint ids", source=str(root / "index.json"))
    base.loaded_version = base.version
    return base


def save_base(base: ConstraintBase, path: str | os.PathLike) -> None:
    """Write ``base`` under ``path``; refuses to overwrite a newer or foreign version."""
    root = Path(path)
    if (root / "index.json").exists():
        on_disk = _read_index(root)["version"]
        if on_disk != base.loaded_version:
            raise VersionConflict(f"base on disk is at version {on_disk}, this copy was loaded at {base.loaded_version}")
    elif base.loaded_version is not None:
        raise VersionConflict("base directory disappeared since it was loaded")
    cdir = root / "constraints"
    cdir.mkdir(parents=True, exist_ok=True)
    wanted = set()
    for cid, c in sorted(base.constraints.items()):
        wanted.add(f"{cid}.iupc")
        _atomic_write(cdir / f"{cid}.iupc", serialize_constraint(c))
    for m in base.meta_constraints:
        wanted.add(f"{m.id}.iupc")
        _atomic_write(cdir / f"{m.id}.iupc", serialize_meta(m))
    index: dict = {
        "format": INDEX_FORMAT,
        "version": base.version,
        "constraints": sorted(base.constraints),
        "meta": [m.id for m in base.meta_constraints],
    }
    if base.identified_version is not None:
        index["identification"] = {
            "version": base.identified_version,
            "results": [base.identification[k].to_json() for k in sorted(base.identification)],
        }
    _atomic_write(root / "index.json", json.dumps(index, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
    for stale in cdir.glob("*.iupc"):
        if stale.name not in wanted:
            stale.unlink()
    base.loaded_version = base.version


# -- consistency -------------------------------------------------------------


@dataclass(frozen=True)
class Conflict:
    kind: str  # contradiction | ordering-cycle | duplicate
    constraints: tuple[str, str]
    detail: str

    def to_json(self) -> dict:
        return {"kind": self.kind, "constraints": list(self.constraints), "detail": self.detail}


def _required_labels(c: ProcessConstraint) -> set[str]:
    return {b.label for b in c.pattern.mandatory}


def _orderings(c: ProcessConstraint) -> set[tuple[str, str]]:
    p = c.pattern
    opt = {b.var for b in p.optional}
    labels = p.variables
    return {
        (labels[r.left], labels[r.right])
        for r in p.relations
        if r.kind == "eventually-precedes" and r.left not in opt and r.right not in opt
    }


def check_consistency(base: ConstraintBase) -> list[Conflict]:
    """Pairwise structural conflicts; each unordered pair reports each kind at most once."""
    out = []
    ids = sorted(base.constraints)
    for a_id, b_id in itertools.combinations(ids, 2):
        a, b = base.constraints[a_id], base.constraints[b_id]
        if not a.context.overlaps(b.context):
            continue
        clash = sorted((_required_labels(a) & set(b.pattern.absences)) | (_required_labels(b) & set(a.pattern.absences)))
        if clash:
            out.append(Conflict("contradiction", (a_id, b_id), "required and forbidden: " + ", ".join(clash)))
        cycles = sorted((x, y) for x, y in _orderings(a) if (y, x) in _orderings(b))
        if cycles:
            x, y = cycles[0]
            out.append(Conflict("ordering-cycle", (a_id, b_id), f"{x!r} before {y!r} and {y!r} before {x!r}"))
        if a.structure_key() == b.structure_key():
            out.append(Conflict("duplicate", (a_id, b_id), "identical linkage, condition and behavior"))
    return out


# -- meta constraints --------------------------------------------------------


@dataclass(frozen=True)
class MetaViolation:
    meta: str
    element: str
    reason: str

    def to_json(self) -> dict:
        return {"meta": self.meta, "element": self.element, "reason": self.reason}


def _matches(c: ProcessConstraint, key: str | None, value: str | None) -> bool:
    props = c.properties
    if key is None:
        return True
    if key == "usage":
        return props.usage == value
    if key == "type":
        return c.constraint_type == value
    if key == "scope":
        return value in props.scope
    return value in props.application


def _meets(c: ProcessConstraint, key: str, value: str | None) -> bool:
    if key == "trigger":
        return bool(c.linkage.triggers)
    if key == "condition":
        return not c.condition.empty
    if key == "behavior":
        return not c.behavior.empty
    if key == "scope":
        return value in c.properties.scope
    return value in c.properties.application


def evaluate_meta(
    base: ConstraintBase,
    schemas: SchemaSet,
    resource_model: ResourceModel | None = None,
) -> list[MetaViolation]:
    out = []
    index = schema_index(schemas)
    known_resources = resource_model.resources if resource_model else frozenset()
    for m in base.meta_constraints:
        if m.subject == "activity":
            required = base.constraints.get(m.require_value or "")
            for sid in sorted(index):
                s = index[sid]
                for node in sorted(s.activities, key=lambda n: n.id):
                    if m.where_value not in node.resources:
                        continue
                    element = f"{sid}/{node.id} ({node.label})"
                    if required is None:
                        out.append(MetaViolation(m.id, element, f"constraint {m.require_value} is not in the base"))
                    elif not (required.context.covers_process(sid) and node.label in required.pattern.anchor_labels):
                        out.append(MetaViolation(m.id, element, f"constraint {m.require_value} is not attached"))
                for node in sorted(s.activities, key=lambda n: n.id):
                    for r in node.resources:
                        if known_resources and r not in known_resources and r == m.where_value:
                            out.append(MetaViolation(m.id, f"{sid}/{node.id} ({node.label})", f"unknown resource {r!r}"))
        else:
            for cid in sorted(base.constraints):
                c = base.constraints[cid]
                if _matches(c, m.where_key, m.where_value) and not _meets(c, m.require_key, m.require_value):
                    want = m.require_key + (f" {m.require_value}" if m.require_value else "")
                    out.append(MetaViolation(m.id, cid, f"missing {want}"))
    return out
