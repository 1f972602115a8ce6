from __future__ import annotations

import random

import pytest
from conftest import FIXTURES
from hypothesis import given, settings
from hypothesis import strategies as st
from synth import random_pattern, random_schema

from iupc.cli import load_repository, load_rules, load_schemas
from iupc.constraints import Context, Linkage, OpaqueRule, ProcessConstraint
from iupc.errors import ModelError
from iupc.identify import DomainRuleSet, IdentificationResult, apply_change, identify, recompute_on_change
from iupc.process import ActivityRepository


@pytest.fixture(scope="module")
def world():
    clinic = FIXTURES / "clinic"
    return (
        load_rules(str(clinic / "rules.iupc")),
        load_schemas(str(clinic / "schemas")),
        load_repository(str(clinic / "repository.json")),
    )


def test_clinic_statuses(world):
    rules, schemas, repo = world
    status = {r.rule_id: r.status for r in identify(rules, schemas, repo)}
    assert status["C1"] == "idle"
    assert status["C14"] == "idle"
    for cid in ("C2", "C3", "C4", "C6", "C8", "C10", "C11", "C15", "C16"):
        assert status[cid] == "enabled", cid


def test_evidence_names_schema_and_anchor(world):
    rules, schemas, repo = world
    res = {r.rule_id: r for r in identify(rules, schemas, repo)}
    assert res["C6"].schemas == (("Invasive Surgery", ("conduct surgery",)),)
    assert res["C1"].repository_labels == ("administer Aspirin", "administer Marcumar")


def test_context_limits_enabling(world):
    rules, schemas, repo = world
    c2 = DomainRuleSet.of(rules).get("C2")
    lab_only = [s for s in schemas if s.id == "Lab Analysis"]
    (res,) = identify([c2], lab_only, repo)
    assert res.status == "idle"


def test_opaque_and_unknown_labels_are_non_process(world):
    _, schemas, repo = world
    from iupc.dsl import parse_document

    rules = parse_document(
        """
        rule R1 'Invoices above a limit need two signatures';
        constraint R2 { context all; on exists a is 'sign invoice'; }
        """
    )
    r1, r2 = identify(rules, schemas, repo)
    assert r1.status == "non-process"
    assert (r2.status, r2.unresolved) == ("non-process", ("sign invoice",))


def test_results_round_trip_through_json(world):
    for r in identify(*world):
        assert IdentificationResult.from_json(r.to_json()) == r


def test_duplicate_rule_ids_rejected():
    with pytest.raises(ModelError):
        DomainRuleSet.of([OpaqueRule("A", "x"), OpaqueRule("A", "y")])


def test_change_to_unknown_schema(world):
    rules, schemas, repo = world
    with pytest.raises(ModelError):
        recompute_on_change(identify(rules, schemas, repo), "x", "Nope", rules, schemas, repo)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_incremental_equals_full(seed):
    rng = random.Random(seed)
    schemas = [random_schema(rng, f"S{i}")[1] for i in range(3)]
    pool = ["A", "B", "C", "D", "E", "F", "G", "H"]
    rules = [
        ProcessConstraint(f"R{i}", Linkage(rng.choice([Context(), Context(frozenset({"S0"}))]), random_pattern(rng, pool)))
        for i in range(8)
    ]
    repo = ActivityRepository(frozenset(pool[:7]))
    cur = identify(rules, schemas, repo)
    for _ in range(3):
        label, sid = rng.choice(pool[:7]), rng.choice(["S0", "S1", "S2"])
        cur, transitions = recompute_on_change(cur, label, sid, rules, schemas, repo)
        schemas = list(apply_change(schemas, label, sid).values())
        assert cur == identify(rules, schemas, repo)
        # adding an activity can only enable rules
        assert all(t.after == "enabled" for t in transitions)


def test_non_process_rule_becomes_resolvable(world):
    _, schemas, repo = world
    c = ProcessConstraint(
        "N1",
        Linkage(Context(), random_pattern(random.Random(0), ["order MRI"])),
    )
    (before,) = identify([c], schemas, repo)
    assert before.status == "non-process"
    after, transitions = recompute_on_change([before], "order MRI", "Invasive Surgery", [c], schemas, repo)
    assert [(t.before, t.after) for t in transitions] == [("non-process", "enabled")]
    assert after == identify([c], apply_change(schemas, "order MRI", "Invasive Surgery"), repo)
