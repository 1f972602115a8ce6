"""``iupc`` command line: identify, check, replay, lint, classify.

Exit codes: 0 clean, 1 findings, 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any, TextIO

from .base import ConstraintBase, check_consistency, evaluate_meta, load_base, save_base
from .constraints import MetaConstraint, ProcessConstraint
from .dsl import parse_document
from .errors import IupcError
from .identify import identify
from .monitor import open_session, replay
from .paths import DEFAULT_LOOP_BOUND
from .process import (
    ActivityRepository,
    ProcessSchema,
    ResourceModel,
    parse_activity_repository,
    parse_process_schema,
    parse_resource_model,
    parse_trace,
)
from .verify import verify_all

EXIT_OK, EXIT_FINDINGS, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None


def _dump(obj: Any, out: TextIO) -> None:
    out.write(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def load_schemas(directory: str) -> list[ProcessSchema]:
    root = Path(directory)
    if not root.is_dir():
        raise InputError(f"{directory}: not a directory")
    schemas = []
    for file in sorted(root.glob("*.json")):
        try:
            schemas.append(parse_process_schema(file.read_text(encoding="utf-8")))
        except IupcError as exc:
            raise InputError(f"{file}: {exc}") from None
    ids = [s.id for s in schemas]
    if len(set(ids)) != len(ids):
        raise InputError(f"{directory}: duplicate schema ids")
    return schemas


def load_repository(path: str) -> ActivityRepository:
    return parse_activity_repository(_read(path))


def load_resources(path: str) -> ResourceModel:
    return parse_resource_model(_read(path))


def load_rules(path: str) -> list:
    """Rules from a DSL document or a base directory; meta constraints are left out."""
    if Path(path).is_dir():
        base = load_base(path)
        return [base.constraints[k] for k in sorted(base.constraints)]
    return [s for s in parse_document(_read(path), path) if not isinstance(s, MetaConstraint)]


def _loop_bound(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("IUPC_LOOP_BOUND")
    if env is None:
        return DEFAULT_LOOP_BOUND
    try:
        bound = int(env)
    except ValueError:
        raise InputError(f"IUPC_LOOP_BOUND must be an integer, got {env!r}") from None
    if bound < 1:
        raise InputError("IUPC_LOOP_BOUND must be at least 1")
    return bound


def _base_for(args: argparse.Namespace, schemas: Sequence[ProcessSchema]) -> ConstraintBase:
    base = load_base(args.base)
    repo = getattr(args, "repo", None)
    if repo:
        base.identify(schemas, load_repository(repo))
    elif base.stale:
        raise InputError(f"{args.base}: identification is stale; pass --repo or run 'iupc identify --save'")
    return base


# -- commands ----------------------------------------------------------------


def cmd_identify(args: argparse.Namespace, out: TextIO) -> int:
    schemas = load_schemas(args.schemas)
    repo = load_repository(args.repo)
    if args.save:
        if not Path(args.rules).is_dir():
            raise InputError("--save needs RULES to be a base directory")
        base = load_base(args.rules)
        results = base.identify(schemas, repo)
        save_base(base, args.rules)
    else:
        results = identify(load_rules(args.rules), schemas, repo)
    _dump({"results": [r.to_json() for r in results]}, out)
    return EXIT_OK


def cmd_check(args: argparse.Namespace, out: TextIO) -> int:
    bound = _loop_bound(args.loop_bound)
    schemas = load_schemas(args.schemas)
    base = _base_for(args, schemas)
    report = verify_all(base, schemas, loop_bound=bound)
    if args.format == "json":
        _dump(report.to_json(), out)
    else:
        out.write(f"checked {report.checks_performed}, skipped {report.skipped}\n")
        for e in report.entries:
            line = f"{e.constraint:<12} {e.schema or '-':<24} {e.status}"
            if e.skipped_reason:
                line += f" ({e.skipped_reason})"
            if e.error:
                line += f" ({e.error})"
            out.write(line.rstrip() + "\n")
            if e.verdict is not None:
                for w in e.verdict.witnesses:
                    if w.kind == "interval":
                        out.write(f"    {w.element} in {w.interval}\n")
                    else:
                        out.write("    path: " + " -> ".join(w.labels) + "\n")
    return EXIT_OK if report.clean else EXIT_FINDINGS


def cmd_replay(args: argparse.Namespace, out: TextIO) -> int:
    schemas = load_schemas(args.schemas) if args.schemas else []
    base = load_base(args.base)
    if base.stale:
        raise InputError(f"{args.base}: identification is stale; run 'iupc identify --save' first")
    traces = parse_trace(_read(args.trace))
    sess = open_session(base, schemas, load_resources(args.resources), monitor_all=args.all)
    actions, violations = replay(sess, traces)
    if args.actions:
        for a in actions:
            out.write(json.dumps(a.to_json(), sort_keys=True, ensure_ascii=False) + "\n")
    for v in violations:
        row = {"constraint": v.constraint, "instance": v.instance, "reason": v.reason, "timestamp": v.to_json()["timestamp"]}
        out.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
    return EXIT_FINDINGS if violations else EXIT_OK


def cmd_lint(args: argparse.Namespace, out: TextIO) -> int:
    schemas = load_schemas(args.schemas)
    base = load_base(args.base)
    resources = load_resources(args.resources)
    conflicts = check_consistency(base)
    meta = evaluate_meta(base, schemas, resources)
    _dump({"conflicts": [c.to_json() for c in conflicts], "meta_violations": [m.to_json() for m in meta]}, out)
    return EXIT_FINDINGS if conflicts or meta else EXIT_OK


def cmd_classify(args: argparse.Namespace, out: TextIO) -> int:
    if Path(args.rules).is_dir():
        base = load_base(args.rules)
        items: list = [base.constraints[k] for k in sorted(base.constraints)] + list(base.meta_constraints)
    else:
        items = [s for s in parse_document(_read(args.rules), args.rules) if isinstance(s, (ProcessConstraint, MetaConstraint))]
    rows = []
    for c in items:
        row = {"id": c.id, "type": c.constraint_type, **c.properties.to_json()}
        if isinstance(c, ProcessConstraint):
            row["compact"] = c.compact()
        rows.append(row)
    if args.format == "json":
        _dump({"constraints": rows}, out)
    else:
        for r in rows:
            out.write(f"{r['id']:<12} {r['type']:<28} {r['usage']:<11} {','.join(r['application'])}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iupc", description="Process constraint identification, verification and monitoring.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("identify", help="classify rules as enabled, idle or non-process")
    p.add_argument("rules", help="DSL file or base directory")
    p.add_argument("schemas", help="directory of schema JSON files")
    p.add_argument("repo", help="activity repository JSON")
    p.add_argument("--save", action="store_true", help="store the result in the base directory")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("check", help="design-time verification of enabled compliance constraints")
    p.add_argument("base")
    p.add_argument("schemas")
    p.add_argument("--loop-bound", type=int, default=None, help="max firings per node (env IUPC_LOOP_BOUND)")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--repo", help="re-identify against this repository instead of the stored result")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("replay", help="monitor recorded traces")
    p.add_argument("base")
    p.add_argument("trace", help="JSON-lines event file")
    p.add_argument("resources", help="resource model JSON")
    p.add_argument("--schemas", help="schema directory (enables parallel-with and uses-resource)")
    p.add_argument("--all", action="store_true", help="also monitor design-time-only constraints")
    p.add_argument("--actions", action="store_true", help="print emitted actions before the violations")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("lint", help="consistency and meta-constraint checks")
    p.add_argument("base")
    p.add_argument("schemas")
    p.add_argument("resources")
    p.set_defaults(func=cmd_lint)

    p = sub.add_parser("classify", help="derived properties and type per constraint")
    p.add_argument("rules", help="DSL file or base directory")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.set_defaults(func=cmd_classify)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if getattr(args, "loop_bound", None) is not None and args.loop_bound < 1:
        err.write("iupc: --loop-bound must be at least 1\n")
        return EXIT_INPUT
    try:
        return args.func(args, out)
    except (InputError, IupcError) as exc:
        err.write(f"iupc: {type(exc).__name__}: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
