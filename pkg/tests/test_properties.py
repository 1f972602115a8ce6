from __future__ import annotations

import pytest
from conftest import FIXTURES
from hypothesis import given, settings
from hypothesis import strategies as st
from test_dsl import _random_constraint

from iupc.constraints import MetaConstraint
from iupc.dsl import parse_document
from iupc.properties import CONSTRAINT_TYPES


@pytest.fixture(scope="module")
def clinic():
    return {s.id: s for s in parse_document((FIXTURES / "clinic" / "rules.iupc").read_text())}


@pytest.mark.parametrize(
    "cid, kind",
    [
        ("C1", "temporal-compliance"),
        ("C2", "structural-compliance"),
        ("C3", "temporal-compliance"),
        ("C5", "meta"),
        ("C6", "structural-compliance"),
        ("C7", "binding-of-duty"),
        ("C8", "data-compliance"),
        ("C10", "synchronization"),
        ("C11", "resource-attribution"),
        ("C12", "separation-of-duty"),
        ("C13", "timing-attribution"),
        ("C15", "structural-compliance"),
        ("C16", "generic-business-compliance"),
    ],
)
def test_classification(clinic, cid, kind):
    assert clinic[cid].constraint_type == kind


def test_derived_properties_examples(clinic):
    c6 = clinic["C6"].properties
    assert (c6.usage, c6.application, c6.scope, c6.origin) == ("compliance", {"design-time"}, {"structure"}, "external")
    c3 = clinic["C3"].properties
    assert c3.scope == {"structure", "data", "time"} and c3.application == {"design-time", "run-time"}
    c11 = clinic["C11"].properties
    assert (c11.usage, c11.application, c11.scope) == ("behavioral", {"run-time"}, {"structure", "resource"})
    c5 = clinic["C5"].properties
    assert c5.usage == "meta" and c5.application == {"design-time"}


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**6))
def test_property_invariants(seed):
    c = _random_constraint(seed)
    p = c.properties
    assert "structure" in p.scope
    assert p.application
    assert (p.usage == "behavioral") == (not c.behavior.empty)
    if p.usage == "behavioral":
        assert p.application == {"run-time"}
    if c.linkage.triggers:
        assert p.usage == "behavioral"
    if p.scope == {"structure"} and c.behavior.empty:
        assert p.application == {"design-time"}
    assert (p.origin == "through-execution") == (c.context.instances is not None)
    assert c.constraint_type in CONSTRAINT_TYPES and c.constraint_type != "meta"


def test_meta_is_always_meta():
    m = MetaConstraint("M", "constraint", "usage", "behavioral", "trigger")
    assert m.constraint_type == "meta" and m.properties.scope == {"structure"}
