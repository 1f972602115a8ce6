from __future__ import annotations

import json
import random
from datetime import datetime, timedelta, timezone

from conftest import FIXTURES
from hypothesis import given, settings
from hypothesis import strategies as st
from synth import linearize, oracle_concurrent, oracle_path_ok, oracle_paths, random_pattern, random_schema

from iupc.constraints import Binding, Relation, StructuralPattern
from iupc.dsl import parse_constraint
from iupc.matcher import holds_on_path, match_schema, match_trace_prefix
from iupc.paths import enumerate_paths
from iupc.process import Event, Trace, schema_from_json

T0 = datetime(2024, 5, 1, 8, 0, tzinfo=timezone.utc)


def clinic(name: str):
    return schema_from_json(json.loads((FIXTURES / "clinic" / "schemas" / f"{name}.json").read_text()))


def treatment():
    return schema_from_json(json.loads((FIXTURES / "datagap" / "schemas" / "treatment.json").read_text()))


def c6():
    return parse_constraint((FIXTURES / "examples" / "c6.iupc").read_text()).pattern


def test_match_schema_counts():
    surgery = clinic("invasive_surgery")
    (m,) = match_schema(c6(), surgery)
    assert m.completeness == "anchor-only" and surgery.node_map[m["a2"]].label == "conduct surgery"
    assert match_schema(c6(), clinic("lab_analysis")) == []


def test_match_schema_with_repeated_label():
    obj = json.loads((FIXTURES / "datagap" / "schemas" / "treatment.json").read_text())
    for n in obj["nodes"]:
        if n.get("label") == "review chart":
            n["label"] = "blood test"
    s = schema_from_json(obj)
    p = StructuralPattern((Binding("b", "blood test", True),))
    assert sorted(m["b"] for m in match_schema(p, s)) == ["n2", "n3"]


def test_holds_on_path_examples():
    s = treatment()
    p = StructuralPattern(
        (Binding("d", "discharge", True), Binding("b", "blood test", False)),
        (Relation("eventually-precedes", "b", "d"),),
    )
    (m,) = match_schema(p, s)
    verdicts = {path.activities[1]: holds_on_path(p, path, m, s) for path in enumerate_paths(s)}
    assert verdicts == {"blood test": True, "review chart": False}


def test_absence_fails_the_path():
    s = treatment()
    p = StructuralPattern((Binding("d", "discharge", True),), absences=("review chart",))
    (m,) = match_schema(p, s)
    verdicts = {path.activities[1]: holds_on_path(p, path, m, s) for path in enumerate_paths(s)}
    assert verdicts == {"blood test": True, "review chart": False}


def _trace(labels: list[str]) -> Trace:
    events = []
    t = T0
    for i, lab in enumerate(labels):
        events.append(Event("start", lab, f"o{i}", t))
        t += timedelta(minutes=10)
        events.append(Event("complete", lab, f"o{i}", t))
        t += timedelta(minutes=10)
    return Trace("i", "P", tuple(events))


def test_two_blood_tests_give_two_full_bindings():
    p = StructuralPattern(
        (Binding("s", "sonography", True), Binding("b", "blood test", False)),
        (Relation("eventually-precedes", "b", "s"),),
    )
    t = _trace(["blood test", "blood test", "sonography"])
    got = match_trace_prefix(p, t)
    assert [(m.completeness, m.mapping) for m in got] == [
        ("full", {"b": "o0", "s": "o2"}),
        ("full", {"b": "o1", "s": "o2"}),
    ]
    assert match_trace_prefix(p, t, upto=4) == []


def test_anchor_without_consequent_is_anchor_only():
    p = StructuralPattern(
        (Binding("s", "sonography", True), Binding("b", "blood test", False)),
        (Relation("eventually-precedes", "b", "s"),),
    )
    got = match_trace_prefix(p, _trace(["sonography", "blood test"]))
    assert [(m.completeness, m.mapping) for m in got] == [("anchor-only", {"s": "o0"})]


def test_overlapping_occurrences_are_parallel():
    p = StructuralPattern(
        (Binding("a", "x", True), Binding("b", "y", False)),
        (Relation("parallel-with", "a", "b"),),
    )
    ev = [
        Event("start", "x", "1", T0),
        Event("start", "y", "2", T0 + timedelta(minutes=1)),
        Event("complete", "x", "1", T0 + timedelta(minutes=2)),
        Event("complete", "y", "2", T0 + timedelta(minutes=3)),
    ]
    assert match_trace_prefix(p, Trace("i", "P", tuple(ev)))[0].completeness == "full"
    assert match_trace_prefix(p, _trace(["x", "y"]))[0].completeness == "anchor-only"


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**6))
def test_holds_on_path_matches_oracle(seed):
    rng = random.Random(seed)
    tree, schema = random_schema(rng)
    p = random_pattern(rng, sorted(schema.labels))
    conc = oracle_concurrent(tree)
    # acyclic schemas: two anchors on one node never co-occur on a path
    matches = [m for m in match_schema(p, schema) if len({n for _, n in m.assignment}) == len(m.assignment)]
    by_nodes = {}
    for path in enumerate_paths(schema):
        key = tuple(zip(path.activity_nodes, path.activities))
        on_path = [m for m in matches if all(n in path.nodes for _, n in m.assignment)]
        by_nodes[key] = (bool(on_path), all(holds_on_path(p, path, m, schema) for m in on_path))
    for path in oracle_paths(tree):
        present, ok = oracle_path_ok(p, path, conc)
        got_present, got_ok = by_nodes[path]
        assert got_present == present
        if present:
            assert got_ok == ok


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_full_bindings_persist_as_prefix_grows(seed):
    rng = random.Random(seed)
    tree, schema = random_schema(rng)
    p = random_pattern(rng, sorted(schema.labels))
    path = rng.choice(sorted(oracle_paths(tree)))
    t = linearize(path, "i", schema.id, T0, rng)
    prev_full: set = set()
    prev_anchors = 0
    for k in range(len(t.events) + 1):
        got = match_trace_prefix(p, t, upto=k)
        full = {m.assignment for m in got if m.completeness == "full"}
        anchors = {tuple((v, o) for v, o in m.assignment if v in {b.var for b in p.anchors}) for m in got}
        assert prev_full <= full
        assert len(anchors) >= prev_anchors
        prev_full, prev_anchors = full, len(anchors)
