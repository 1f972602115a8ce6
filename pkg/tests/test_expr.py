from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iupc.dsl import parse_data_expr
from iupc.errors import NotIntervalDecidable
from iupc.expr import Compare, Duration, IntervalSet, Ref, conjuncts, evaluate, expr_vars, interval_of, single_field

UNIVERSE = range(-5, 26)


def test_duration_in_milliseconds():
    assert Duration(4, "h").ms == 4 * 3600 * 1000
    assert Duration(30, "m").ms == 30 * 60 * 1000
    assert Duration(1, "d").ms == 86_400_000
    assert str(Duration(4, "h")) == "4h"


def test_duration_must_be_positive():
    with pytest.raises(Exception):
        Duration(0, "h")


def test_kleene_evaluation():
    e = parse_data_expr("a.x > 3 and (b.y == 'k' or not a.z == 1)")
    values = {("a", "x"): 5, ("b", "y"): "k"}

    def lookup(ref: Ref):
        return values.get((ref.var, ref.field))

    assert evaluate(e, lookup) is True
    values[("a", "x")] = 1
    assert evaluate(e, lookup) is False
    values[("a", "x")] = None
    assert evaluate(e, lookup) is None


def test_ordering_across_types_is_unknown():
    assert evaluate(Compare(Ref("a", "x"), "<", 3), lambda r: "text") is None
    assert evaluate(Compare(Ref("a", "x"), "==", 3), lambda r: "text") is False


def test_conjuncts_and_vars():
    e = parse_data_expr("a.x > 1 and (b.y == 2 and a.z < 4)")
    assert len(conjuncts(e)) == 3
    assert expr_vars(e) == {"a", "b"}
    assert conjuncts(None) == []


def test_interval_of_examples():
    assert interval_of(parse_data_expr("age >= 62"), "age") == IntervalSet.of(62, math.inf)
    assert interval_of(parse_data_expr("age >= 62 and age < 65"), "age") == IntervalSet.of(62, 64)
    assert interval_of(parse_data_expr("not age == 3"), "age") == IntervalSet.of(3, 3).complement()
    with pytest.raises(NotIntervalDecidable):
        interval_of(parse_data_expr("age >= 62 and weight > 3"), "age")
    with pytest.raises(NotIntervalDecidable):
        interval_of(parse_data_expr("age == 'old'"), "age")


def test_single_field():
    assert single_field(parse_data_expr("a.age > 1 and a.age < 9")) == "age"
    assert single_field(parse_data_expr("a.age > 1 and a.w < 9")) is None


def test_interval_rendering():
    s = IntervalSet.of(62, 64).union(IntervalSet.of(70, math.inf))
    assert str(s) == "[62,64] u [70,inf]"
    assert s.to_json() == [[62, 64], [70, None]]
    assert str(IntervalSet()) == "{}"


spans = st.lists(st.tuples(st.integers(-3, 23), st.integers(0, 6)), max_size=4)


def build(raw) -> IntervalSet:
    out = IntervalSet()
    for lo, width in raw:
        out = out.union(IntervalSet.of(lo, lo + width))
    return out


def members(s: IntervalSet) -> set[int]:
    return {v for v in UNIVERSE if v in s}


@settings(max_examples=300, deadline=None)
@given(spans, spans)
def test_interval_algebra_matches_finite_sets(a_raw, b_raw):
    a, b = build(a_raw), build(b_raw)
    assert members(a.union(b)) == members(a) | members(b)
    assert members(a.intersect(b)) == members(a) & members(b)
    assert members(a.difference(b)) == members(a) - members(b)
    assert members(a.complement()) == set(UNIVERSE) - members(a)
    assert a.issubset(b) == (members(a) <= members(b))
    assert a.complement().complement() == a


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(["==", "!=", "<", "<=", ">", ">="]), st.integers(-3, 23), st.sampled_from(["==", "<", ">="]), st.integers(-3, 23))
def test_interval_of_agrees_with_evaluation(op1, v1, op2, v2):
    e = parse_data_expr(f"x {op1} {v1} or not x {op2} {v2}")
    iv = interval_of(e, "x")
    for v in UNIVERSE:
        assert (v in iv) == evaluate(e, lambda r: v)
