"""Data, time and resource expression trees plus integer interval reasoning.

Data expressions are shared between xor-split guards (bare field references
such as ``age``) and constraint conditions (variable-qualified references
such as ``a1.patient``). Evaluation is three-valued: ``None`` means the
value needed to decide the expression is unknown.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass
from typing import Union

from .errors import NotIntervalDecidable

Literal = Union[int, str, bool]

COMPARE_OPS = ("==", "!=", "<", "<=", ">", ">=")

_UNITS_MS = {"m": 60_000, "h": 3_600_000, "d": 86_400_000}


@dataclass(frozen=True)
class Duration:
    amount: int
    unit: str

    def __post_init__(self) -> None:
        if self.unit not in _UNITS_MS:
            raise ValueError(f"unknown duration unit {self.unit!r}")
        if self.amount <= 0:
            raise ValueError("duration must be positive")

    @property
    def ms(self) -> int:
        return self.amount * _UNITS_MS[self.unit]

    def __str__(self) -> str:
        return f"{self.amount}{self.unit}"


@dataclass(frozen=True)
class Ref:
    """A data field, optionally qualified by a pattern variable."""

    var: str | None
    field: str

    def __str__(self) -> str:
        return f"{self.var}.{self.field}" if self.var else self.field


@dataclass(frozen=True)
class Compare:
    ref: Ref
    op: str
    value: Literal


@dataclass(frozen=True)
class SameValue:
    left: Ref
    right: Ref


@dataclass(frozen=True)
class And:
    items: tuple[DataExpr, ...]


@dataclass(frozen=True)
class Or:
    items: tuple[DataExpr, ...]


@dataclass(frozen=True)
class Not:
    item: DataExpr


DataExpr = Union[Compare, SameValue, And, Or, Not]


@dataclass(frozen=True)
class TimeAtom:
    """``min_time_between`` / ``max_time_between`` between two variables.

    The gap runs from the completion of ``left`` to the start of ``right``.
    """

    kind: str  # "min" | "max"
    left: str
    right: str
    duration: Duration

    @property
    def vars(self) -> frozenset[str]:
        return frozenset((self.left, self.right))


@dataclass(frozen=True)
class RoleIs:
    var: str
    role: str

    @property
    def vars(self) -> frozenset[str]:
        return frozenset((self.var,))


@dataclass(frozen=True)
class SameActor:
    left: str
    right: str

    @property
    def vars(self) -> frozenset[str]:
        return frozenset((self.left, self.right))


@dataclass(frozen=True)
class DifferentActor:
    left: str
    right: str

    @property
    def vars(self) -> frozenset[str]:
        return frozenset((self.left, self.right))


@dataclass(frozen=True)
class UsesResource:
    var: str
    resource: str

    @property
    def vars(self) -> frozenset[str]:
        return frozenset((self.var,))


ResourceAtom = Union[RoleIs, SameActor, DifferentActor, UsesResource]


def refs(expr: DataExpr) -> Iterator[Ref]:
    if isinstance(expr, Compare):
        yield expr.ref
    elif isinstance(expr, SameValue):
        yield expr.left
        yield expr.right
    elif isinstance(expr, (And, Or)):
        for item in expr.items:
            yield from refs(item)
    elif isinstance(expr, Not):
        yield from refs(expr.item)
    else:  # pragma: no cover - exhaustive
        raise TypeError(expr)


def expr_vars(expr: DataExpr) -> frozenset[str]:
    return frozenset(r.var for r in refs(expr) if r.var is not None)


def conjuncts(expr: DataExpr | None) -> list[DataExpr]:
    """Flatten top-level conjunctions."""
    if expr is None:
        return []
    if isinstance(expr, And):
        out: list[DataExpr] = []
        for item in expr.items:
            out.extend(conjuncts(item))
        return out
    return [expr]


def conjoin(items: Iterable[DataExpr]) -> DataExpr | None:
    items = list(items)
    if not items:
        return None
    if len(items) == 1:
        return items[0]
    return And(tuple(items))


def _compare(left: object, op: str, right: object) -> bool | None:
    if left is None or right is None:
        return None
    if op == "==":
        return left == right
    if op == "!=":
        return left != right
    if type(left) is bool or type(right) is bool or isinstance(left, str) != isinstance(right, str):
        # ordering across types is meaningless
        return None
    try:
        if op == "<":
            return left < right  # type: ignore[operator]
        if op == "<=":
            return left <= right  # type: ignore[operator]
        if op == ">":
            return left > right  # type: ignore[operator]
        if op == ">=":
            return left >= right  # type: ignore[operator]
    except TypeError:
        return None
    raise ValueError(f"unknown operator {op!r}")


def evaluate(expr: DataExpr, lookup: Callable[[Ref], object]) -> bool | None:
    """Kleene evaluation; ``lookup`` returns ``None`` for unknown values."""
    if isinstance(expr, Compare):
        return _compare(lookup(expr.ref), expr.op, expr.value)
    if isinstance(expr, SameValue):
        return _compare(lookup(expr.left), "==", lookup(expr.right))
    if isinstance(expr, Not):
        inner = evaluate(expr.item, lookup)
        return None if inner is None else not inner
    if isinstance(expr, And):
        result: bool | None = True
        for item in expr.items:
            v = evaluate(item, lookup)
            if v is False:
                return False
            if v is None:
                result = None
        return result
    if isinstance(expr, Or):
        result = False
        for item in expr.items:
            v = evaluate(item, lookup)
            if v is True:
                return True
            if v is None:
                result = None
        return result
    raise TypeError(expr)  # pragma: no cover


# -- integer intervals -------------------------------------------------------

Bound = Union[int, float]


@dataclass(frozen=True)
class IntervalSet:
    """Finite union of closed integer intervals; bounds may be +/-inf."""

    spans: tuple[tuple[Bound, Bound], ...] = ()

    @classmethod
    def of(cls, lo: Bound = -math.inf, hi: Bound = math.inf) -> IntervalSet:
        return cls._normalize([(lo, hi)])

    @classmethod
    def everything(cls) -> IntervalSet:
        return cls.of()

    @classmethod
    def _normalize(cls, spans: Iterable[tuple[Bound, Bound]]) -> IntervalSet:
        ordered = sorted((lo, hi) for lo, hi in spans if lo <= hi)
        merged: list[tuple[Bound, Bound]] = []
        for lo, hi in ordered:
            if merged and lo <= merged[-1][1] + 1:
                if hi > merged[-1][1]:
                    merged[-1] = (merged[-1][0], hi)
            else:
                merged.append((lo, hi))
        return cls(tuple(merged))

    def __bool__(self) -> bool:
        return bool(self.spans)

    def __contains__(self, value: int) -> bool:
        return any(lo <= value <= hi for lo, hi in self.spans)

    def union(self, other: IntervalSet) -> IntervalSet:
        return IntervalSet._normalize(self.spans + other.spans)

    def intersect(self, other: IntervalSet) -> IntervalSet:
        out = []
        for a_lo, a_hi in self.spans:
            for b_lo, b_hi in other.spans:
                lo, hi = max(a_lo, b_lo), min(a_hi, b_hi)
                if lo <= hi:
                    out.append((lo, hi))
        return IntervalSet._normalize(out)

    def complement(self) -> IntervalSet:
        out = []
        cursor: Bound = -math.inf
        for lo, hi in self.spans:
            if lo > cursor:
                out.append((cursor, lo - 1))
            cursor = hi + 1
        if cursor != math.inf:
            out.append((cursor, math.inf))
        return IntervalSet._normalize(out)

    def difference(self, other: IntervalSet) -> IntervalSet:
        return self.intersect(other.complement())

    def issubset(self, other: IntervalSet) -> bool:
        return not self.difference(other)

    def to_json(self) -> list[list[int | None]]:
        def b(x: Bound) -> int | None:
            return None if math.isinf(x) else int(x)

        return [[b(lo), b(hi)] for lo, hi in self.spans]

    def __str__(self) -> str:
        if not self.spans:
            return "{}"

        def b(x: Bound) -> str:
            return ("-inf" if x < 0 else "inf") if math.isinf(x) else str(int(x))

        return " u ".join(f"[{b(lo)},{b(hi)}]" for lo, hi in self.spans)


def _atom_interval(op: str, value: int) -> IntervalSet:
    if op == "==":
        return IntervalSet.of(value, value)
    if op == "!=":
        return IntervalSet.of(value, value).complement()
    if op == "<":
        return IntervalSet.of(-math.inf, value - 1)
    if op == "<=":
        return IntervalSet.of(-math.inf, value)
    if op == ">":
        return IntervalSet.of(value + 1, math.inf)
    if op == ">=":
        return IntervalSet.of(value, math.inf)
    raise ValueError(op)


def interval_of(expr: DataExpr, field: str) -> IntervalSet:
    """Integer values of ``field`` that make ``expr`` true.

    Raises NotIntervalDecidable when ``expr`` mentions other fields or
    compares against non-integer literals.
    """
    if isinstance(expr, Compare):
        if expr.ref.field != field:
            raise NotIntervalDecidable(f"expression mentions {expr.ref} besides {field}")
        if isinstance(expr.value, bool) or not isinstance(expr.value, int):
            raise NotIntervalDecidable(f"{expr.ref} compared against non-integer {expr.value!r}")
        return _atom_interval(expr.op, expr.value)
    if isinstance(expr, SameValue):
        raise NotIntervalDecidable("same-value comparison is not an interval")
    if isinstance(expr, Not):
        return interval_of(expr.item, field).complement()
    if isinstance(expr, And):
        out = IntervalSet.everything()
        for item in expr.items:
            out = out.intersect(interval_of(item, field))
        return out
    if isinstance(expr, Or):
        out = IntervalSet()
        for item in expr.items:
            out = out.union(interval_of(item, field))
        return out
    raise TypeError(expr)  # pragma: no cover


def single_field(expr: DataExpr) -> str | None:
    """The one field name ``expr`` mentions, or None if zero or several."""
    names = {r.field for r in refs(expr)}
    return names.pop() if len(names) == 1 else None
