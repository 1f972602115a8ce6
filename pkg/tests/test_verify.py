from __future__ import annotations

import json
import math

import pytest
from conftest import FIXTURES
from hypothesis import given, settings
from hypothesis import strategies as st

from iupc.base import ConstraintBase, load_base
from iupc.cli import load_repository, load_rules, load_schemas
from iupc.dsl import parse_constraint
from iupc.errors import NotIntervalDecidable, PatternUnmatched, StaleIdentification
from iupc.expr import IntervalSet, evaluate
from iupc.paths import enumerate_paths
from iupc.process import ActivityRepository, schema_from_json
from iupc.verify import POSSIBLY_VIOLATED, SATISFIED, VIOLATED, Verdict, Witness, analyze_data_coverage, check_design_time, verify_all

C6 = (FIXTURES / "examples" / "c6.iupc").read_text()


def surgery_json() -> dict:
    return json.loads((FIXTURES / "clinic" / "schemas" / "invasive_surgery.json").read_text())


def treatment_json() -> dict:
    return json.loads((FIXTURES / "datagap" / "schemas" / "treatment.json").read_text())


def relabel(obj: dict, old: str, new: str) -> dict:
    for n in obj["nodes"]:
        if n.get("label") == old:
            n["label"] = new
    return obj


def test_c6_satisfied_on_surgery():
    v = check_design_time(parse_constraint(C6), schema_from_json(surgery_json()))
    assert v == Verdict(SATISFIED)


def test_c6_violated_without_examination():
    s = schema_from_json(relabel(surgery_json(), "examine patient", "greet patient"))
    v = check_design_time(parse_constraint(C6), s)
    assert v.status == VIOLATED and not v.monitor_required
    assert "conduct surgery" in v.witnesses[0].labels


def test_examination_on_one_branch_is_possibly_violated():
    # Treatment: blood test only on the age >= 65 branch
    c = parse_constraint(
        "constraint K { context all; on exists d is 'discharge'; require exists b is 'blood test' and b eventually-precedes d; }"
    )
    v = check_design_time(c, schema_from_json(treatment_json()))
    assert v.status == POSSIBLY_VIOLATED and v.monitor_required
    assert v.witnesses[0].labels == ("admit patient", "review chart", "discharge")


def test_unmatched_anchor_raises():
    c = parse_constraint("constraint K { context all; on exists d is 'fly'; }")
    with pytest.raises(PatternUnmatched):
        check_design_time(c, schema_from_json(treatment_json()))


def gated(threshold: int) -> str:
    return (
        "constraint G { context all; on exists a is 'admit patient'; "
        "require exists b is 'blood test' and a eventually-precedes b; "
        f"condition data(a.age >= {threshold}); }}"
    )


@pytest.mark.parametrize("threshold, status", [(62, POSSIBLY_VIOLATED), (65, SATISFIED), (70, SATISFIED), (0, POSSIBLY_VIOLATED)])
def test_gate_threshold_examples(threshold, status):
    s = schema_from_json(treatment_json())
    assert check_design_time(parse_constraint(gated(threshold)), s).status == status


def test_gate_covering_only_failing_branch_is_violated():
    c = parse_constraint(gated(62).replace("a.age >= 62", "a.age < 60"))
    v = check_design_time(c, schema_from_json(treatment_json()))
    assert v.status == VIOLATED


def _uncovered_by_brute_force(threshold: int) -> set[int]:
    s = schema_from_json(treatment_json())
    out = set()
    for age in range(0, 131):
        if age < threshold:
            continue
        taken = [p for p in enumerate_paths(s) if all(evaluate(g.expression, lambda r: age) for g in p.guards)]
        if not any("blood test" in p.activities for p in taken):
            out.add(age)
    return out


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 131))
def test_coverage_gap_matches_brute_force(threshold):
    s = schema_from_json(treatment_json())
    v = analyze_data_coverage(parse_constraint(gated(threshold)), s)
    expected = _uncovered_by_brute_force(threshold)
    if not expected:
        assert v.status == SATISFIED
    else:
        (w,) = v.witnesses
        assert w.element == "age"
        assert {a for a in range(0, 131) if a in w.interval} == expected


def test_coverage_needs_a_pure_gate():
    c = parse_constraint(
        "constraint G { context all; on exists a is 'admit patient'; "
        "require optional b is 'blood test'; condition data(a.age >= 3 and b.n == 1); }"
    )
    with pytest.raises(NotIntervalDecidable):
        analyze_data_coverage(c, schema_from_json(treatment_json()))


def test_verdict_invariants():
    with pytest.raises(ValueError):
        Verdict(VIOLATED)
    w = Witness("interval", element="age", interval=IntervalSet.of(1, math.inf))
    with pytest.raises(ValueError):
        Verdict(POSSIBLY_VIOLATED, (w,), False)
    assert w.to_json() == {"kind": "interval", "element": "age", "intervals": [[1, None]], "note": ""}


def test_verify_all_on_clinic():
    clinic = FIXTURES / "clinic"
    base = load_base(clinic / "base")
    schemas = load_schemas(str(clinic / "schemas"))
    base.identify(schemas, load_repository(str(clinic / "repository.json")))
    report = verify_all(base, schemas)
    by = {(e.constraint, e.schema): e for e in report.entries}
    assert by[("C1", None)].skipped_reason == "idle"
    assert by[("C11", None)].skipped_reason == "behavioral: enforced at run-time"
    assert by[("C6", "Invasive Surgery")].status == SATISFIED
    assert by[("C3", "Invasive Surgery")].status == POSSIBLY_VIOLATED
    assert report.checks_performed + report.skipped == len(report.entries)
    doc = report.to_json()
    assert doc["checked"] == report.checks_performed and len(doc["results"]) == len(report.entries)


def test_datagap_report_carries_interval():
    base = load_base(FIXTURES / "datagap" / "base")
    report = verify_all(base, load_schemas(str(FIXTURES / "datagap" / "schemas")))
    (entry,) = report.entries
    assert entry.status == POSSIBLY_VIOLATED and not report.clean
    intervals = [w.interval for w in entry.verdict.witnesses if w.kind == "interval"]
    assert intervals == [IntervalSet.of(62, 64)]


def test_verify_all_requires_fresh_identification():
    clinic = FIXTURES / "clinic"
    base = ConstraintBase.of(load_rules(str(clinic / "rules.iupc")))
    with pytest.raises(StaleIdentification):
        verify_all(base, load_schemas(str(clinic / "schemas")))
    base.identify(load_schemas(str(clinic / "schemas")), load_repository(str(clinic / "repository.json")))
    base.remove("C2")
    with pytest.raises(StaleIdentification):
        verify_all(base, load_schemas(str(clinic / "schemas")))


def test_missing_schema_is_an_error_entry():
    c = parse_constraint(C6)
    base = ConstraintBase.of([c])
    s = schema_from_json(surgery_json())
    base.identify([s], ActivityRepository(s.labels))
    report = verify_all(base, [])
    (entry,) = report.entries
    assert entry.status == "error" and "not loaded" in entry.error


@settings(max_examples=120, deadline=None)
@given(st.sampled_from(["<", "<=", ">", ">=", "==", "!="]), st.integers(-5, 135))
def test_gated_verdict_matches_brute_force(op, threshold):
    s = schema_from_json(treatment_json())
    c = parse_constraint(gated(0).replace("a.age >= 0", f"a.age {op} {threshold}"))
    outcomes = []
    for age in range(0, 131):
        if not evaluate(c.condition.data, lambda r: age):
            continue
        (taken,) = [p for p in enumerate_paths(s) if all(evaluate(g.expression, lambda r: age) for g in p.guards)]
        outcomes.append("blood test" in taken.activities)
    if not outcomes or all(outcomes):
        expected = SATISFIED
    elif not any(outcomes):
        expected = VIOLATED
    else:
        expected = POSSIBLY_VIOLATED
    assert check_design_time(c, s).status == expected


def test_one_enabled_one_idle():
    clinic = FIXTURES / "clinic"
    rules = {r.id: r for r in load_rules(str(clinic / "rules.iupc"))}
    base = ConstraintBase.of([rules["C6"], rules["C1"]])
    schemas = load_schemas(str(clinic / "schemas"))
    base.identify(schemas, load_repository(str(clinic / "repository.json")))
    report = verify_all(base, schemas)
    assert (report.checks_performed, report.skipped) == (1, 1)
