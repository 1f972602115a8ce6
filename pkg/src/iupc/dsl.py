"""Recursive-descent parser and canonical printer for the constraint DSL.

A document holds any number of ``constraint``, ``meta`` and ``rule`` blocks::

    constraint C6 {
      context process 'Invasive Surgery' all;
      on exists a2 is 'conduct surgery';
      require exists a1 is 'examine patient' and a1 eventually-precedes a2;
    }

    meta C5 { for each activity using 'centrifuge' require constraint C10; }

    rule R1 'Invoices carry a VAT number';

``#`` starts a comment running to the end of the line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .constraints import (
    RELATION_KINDS,
    RESOURCE_KEYS,
    TIME_KEYS,
    Behavior,
    Binding,
    Condition,
    Context,
    Linkage,
    MetaConstraint,
    OpaqueRule,
    ProcessConstraint,
    Relation,
    StructuralPattern,
    TriggerPosition,
)
from .errors import BindError, ModelError, ParseError
from .expr import (
    COMPARE_OPS,
    And,
    Compare,
    DataExpr,
    DifferentActor,
    Duration,
    Not,
    Or,
    Ref,
    ResourceAtom,
    RoleIs,
    SameActor,
    SameValue,
    TimeAtom,
    UsesResource,
)

Statement = Union[ProcessConstraint, MetaConstraint, OpaqueRule]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<str>'(?:[^'\\\n]|\\.)*'|"(?:[^"\\\n]|\\.)*")
  | (?P<dur>\d+[mhd](?![A-Za-z0-9_]))
  | (?P<int>-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_\-]*)
  | (?P<op>:=|==|!=|<=|>=|<|>)
  | (?P<punct>[{}();,.*])
    """,
    re.VERBOSE,
)

_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", "'": "'", '"': '"'}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str, source: str | None = None) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1, source)
        kind = m.lastgroup
        assert kind is not None
        chunk = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, chunk, line, pos - line_start + 1))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


def _unquote(tok: Token) -> str:
    body = tok.text[1:-1]
    return re.sub(r"\\(.)", lambda m: _ESCAPES.get(m.group(1), m.group(1)), body)


def quote(value: str) -> str:
    return "'" + value.replace("\\", "\\\\").replace("'", "\\'").replace("\n", "\\n").replace("\t", "\\t") + "'"


class _Parser:
    def __init__(self, text: str, source: str | None = None):
        self.source = source
        self.tokens = tokenize(text, source)
        self.i = 0

    # -- token helpers --
    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.col, self.source)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("ident", "op", "punct") and self.tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    def ident(self, what: str = "identifier") -> str:
        if self.tok.kind != "ident":
            raise self.error(f"expected {what}, found {self.tok.text or 'end of input'!r}")
        text = self.tok.text
        self.i += 1
        return text

    def string(self, what: str = "string") -> str:
        if self.tok.kind != "str":
            raise self.error(f"expected {what}, found {self.tok.text or 'end of input'!r}")
        value = _unquote(self.tok)
        self.i += 1
        return value

    def duration(self) -> Duration:
        if self.tok.kind != "dur":
            raise self.error(f"expected duration such as 4h, found {self.tok.text or 'end of input'!r}")
        text = self.tok.text
        self.i += 1
        return Duration(int(text[:-1]), text[-1])

    def string_list(self) -> tuple[str, ...]:
        items = [self.string()]
        while self.accept(","):
            items.append(self.string())
        return tuple(items)

    # -- document --
    def document(self) -> list[Statement]:
        out: list[Statement] = []
        while self.tok.kind != "eof":
            if self.at("constraint"):
                out.append(self.constraint())
            elif self.at("meta"):
                out.append(self.meta())
            elif self.at("rule"):
                self.i += 1
                rid = self.ident("rule id")
                text = self.string("rule text")
                self.expect(";")
                out.append(OpaqueRule(rid, text))
            else:
                raise self.error(f"expected 'constraint', 'meta' or 'rule', found {self.tok.text!r}")
        return out

    def constraint(self) -> ProcessConstraint:
        start = self.expect("constraint")
        cid = self.ident("constraint id")
        self.expect("{")
        text = ""
        context: Context | None = None
        anchors: list[Binding] = []
        consequents: list[Binding] = []
        relations: list[Relation] = []
        absences: list[str] = []
        condition = Condition()
        triggers: list[TriggerPosition] = []
        behavior = Behavior()
        seen: set[str] = set()
        while not self.accept("}"):
            kw_tok = self.tok
            kw = self.ident("clause keyword")
            if kw in seen and kw != "trigger":
                raise self.error(f"duplicate {kw!r} clause", kw_tok)
            seen.add(kw)
            if kw == "text":
                text = self.string()
            elif kw == "context":
                context = self.context()
            elif kw == "on":
                anchors = self.bindings(anchor=True)
            elif kw == "require":
                consequents, relations = self.requirements()
            elif kw == "absent":
                absences = list(self.string_list())
            elif kw == "condition":
                condition = self.condition()
            elif kw == "trigger":
                triggers.extend(self.triggers())
            elif kw == "behavior":
                behavior = self.behavior()
            else:
                raise self.error(f"unknown clause {kw!r}", kw_tok)
            self.expect(";")
        if context is None:
            raise self.error(f"constraint {cid} lacks a context clause", start)
        if not anchors:
            raise self.error(f"constraint {cid} lacks an 'on' clause", start)
        try:
            pattern = StructuralPattern(tuple(anchors + consequents), tuple(relations), tuple(absences))
            linkage = Linkage(context, pattern, tuple(triggers))
            return ProcessConstraint(cid, linkage, condition, behavior, text)
        except BindError as exc:
            raise BindError(exc.message, start.line, start.col, self.source) from None
        except ModelError as exc:
            raise ParseError(f"constraint {cid}: {exc}", start.line, start.col, self.source) from None

    def context(self) -> Context:
        if self.accept("all"):
            if self.accept("instances"):
                return Context(None, frozenset(self.string_list()))
            return Context()
        procs: list[str] = []
        instance_sets: list[frozenset[str] | None] = []
        while True:
            self.expect("process")
            procs.append(self.string("process name"))
            if self.accept("all"):
                instance_sets.append(None)
            elif self.accept("instances"):
                names = [self.string()]
                while self.tok.text == "," and self.tokens[self.i + 1].kind == "str":
                    self.i += 1
                    names.append(self.string())
                instance_sets.append(frozenset(names))
            else:
                raise self.error("expected 'all' or 'instances'")
            if not self.accept(","):
                break
        if any(s is None for s in instance_sets) and any(s is not None for s in instance_sets):
            raise self.error("mixing 'all' and named instances across processes is not supported")
        instances = None
        if instance_sets[0] is not None:
            instances = frozenset().union(*instance_sets)  # type: ignore[arg-type]
        return Context(frozenset(procs), instances)

    def binding(self, anchor: bool) -> Binding:
        optional = False
        if self.accept("optional"):
            if anchor:
                raise self.error("anchor bindings cannot be optional", self.tokens[self.i - 1])
            optional = True
        else:
            self.accept("exists")
        var = self.ident("variable")
        self.expect("is")
        label = self.string("activity label")
        return Binding(var, label, anchor, optional)

    def bindings(self, anchor: bool) -> list[Binding]:
        out = [self.binding(anchor)]
        while self.accept(",") or self.accept("and"):
            out.append(self.binding(anchor))
        return out

    def requirements(self) -> tuple[list[Binding], list[Relation]]:
        binds: list[Binding] = []
        rels: list[Relation] = []
        while True:
            nxt = self.tokens[self.i + 1] if self.i + 1 < len(self.tokens) else self.tok
            if self.at("exists") or self.at("optional") or nxt.text == "is":
                binds.append(self.binding(anchor=False))
            else:
                left = self.ident("variable")
                kind_tok = self.tok
                kind = self.ident("relation")
                if kind not in RELATION_KINDS:
                    raise self.error(f"unknown relation {kind!r}", kind_tok)
                right = self.ident("variable")
                if left == right:
                    raise self.error(f"relation {kind} relates {left!r} to itself", kind_tok)
                rels.append(Relation(kind, left, right))
            if not (self.accept("and") or self.accept(",")):
                return binds, rels

    def triggers(self) -> list[TriggerPosition]:
        out = []
        while True:
            tok = self.tok
            pos = self.ident("before/after")
            if pos not in ("before", "after"):
                raise self.error("expected 'before' or 'after'", tok)
            out.append(TriggerPosition(pos, self.ident("variable")))
            if not self.accept(","):
                return out

    # -- conditions --
    def condition(self) -> Condition:
        data: list[DataExpr] = []
        time: list[TimeAtom] = []
        res: list[ResourceAtom] = []
        while True:
            tok = self.tok
            part = self.ident("data/time/resource")
            self.expect("(")
            if part == "data":
                data.append(self.data_expr())
            elif part == "time":
                time.append(self.time_atom())
                while self.accept("and"):
                    time.append(self.time_atom())
            elif part == "resource":
                res.append(self.resource_atom())
                while self.accept("and"):
                    res.append(self.resource_atom())
            else:
                raise self.error(f"expected data(...), time(...) or resource(...), found {part!r}", tok)
            self.expect(")")
            if not self.accept("and"):
                break
        expr: DataExpr | None
        if not data:
            expr = None
        elif len(data) == 1:
            expr = data[0]
        else:
            expr = And(tuple(data))
        return Condition(expr, tuple(time), tuple(res))

    def data_expr(self) -> DataExpr:
        items = [self.data_and()]
        while self.accept("or"):
            items.append(self.data_and())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def data_and(self) -> DataExpr:
        items = [self.data_unary()]
        while self.accept("and"):
            items.append(self.data_unary())
        return items[0] if len(items) == 1 else And(tuple(items))

    def data_unary(self) -> DataExpr:
        if self.accept("not"):
            return Not(self.data_unary())
        if self.accept("("):
            inner = self.data_expr()
            self.expect(")")
            return inner
        left = self.ref()
        op_tok = self.tok
        if op_tok.kind != "op" or op_tok.text not in COMPARE_OPS:
            raise self.error(f"expected comparison operator, found {op_tok.text or 'end of input'!r}")
        self.i += 1
        if self.tok.kind == "ident" and self.tok.text not in ("true", "false"):
            right = self.ref()
            if op_tok.text != "==":
                raise self.error("fields can only be compared with '=='", op_tok)
            return SameValue(left, right)
        return Compare(left, op_tok.text, self.literal())

    def ref(self) -> Ref:
        first = self.ident("field reference")
        if self.accept("."):
            return Ref(first, self.ident("field name"))
        return Ref(None, first)

    def literal(self) -> int | str | bool:
        tok = self.tok
        if tok.kind == "int":
            self.i += 1
            return int(tok.text)
        if tok.kind == "str":
            return self.string()
        if self.accept("true"):
            return True
        if self.accept("false"):
            return False
        raise self.error(f"expected literal, found {tok.text or 'end of input'!r}")

    def time_atom(self) -> TimeAtom:
        tok = self.tok
        name = self.ident("time atom")
        kinds = {"min_time_between": "min", "max_time_between": "max"}
        if name not in kinds:
            raise self.error(f"unknown time atom {name!r}", tok)
        self.expect("(")
        left = self.ident("variable")
        self.expect(",")
        right = self.ident("variable")
        self.expect(",")
        dur = self.duration()
        self.expect(")")
        return TimeAtom(kinds[name], left, right, dur)

    def resource_atom(self) -> ResourceAtom:
        tok = self.tok
        name = self.ident("resource atom")
        self.expect("(")
        if name == "role":
            var = self.ident("variable")
            self.expect(")")
            self.expect("==")
            return RoleIs(var, self.string("role name"))
        if name in ("same-actor", "different-actor"):
            left = self.ident("variable")
            self.expect(",")
            right = self.ident("variable")
            self.expect(")")
            return SameActor(left, right) if name == "same-actor" else DifferentActor(left, right)
        if name == "uses-resource":
            var = self.ident("variable")
            self.expect(",")
            res = self.string("resource name")
            self.expect(")")
            return UsesResource(var, res)
        raise self.error(f"unknown resource atom {name!r}", tok)

    def behavior(self) -> Behavior:
        tok = self.tok
        kind = self.ident("behavior kind")
        if kind == "attribute":
            target = self.ident("variable")
            key_tok = self.tok
            key = self.ident("attribute key")
            if key not in RESOURCE_KEYS + TIME_KEYS:
                raise self.error(f"unknown attribute key {key!r}", key_tok)
            self.expect(":=")
            if key in RESOURCE_KEYS:
                return Behavior("attribute", target, key, self.string("attribute value"))
            self.expect("(")
            durs = [self.duration()]
            while self.accept(","):
                durs.append(self.duration())
            self.expect(")")
            want = 2 if key == "DURATION" else 1
            if len(durs) != want:
                raise self.error(f"{key} takes {want} duration(s)", key_tok)
            return Behavior("attribute", target, key, tuple(durs))  # type: ignore[arg-type]
        if kind == "synchronize":
            target = self.ident("variable")
            return Behavior("synchronize", target, resource=self.string("resource name"))
        if kind == "raise-exception":
            target = self.ident("variable")
            message = self.string() if self.tok.kind == "str" else None
            return Behavior("raise-exception", target, message=message)
        raise self.error(f"unknown behavior {kind!r}", tok)

    # -- meta --
    def meta(self) -> MetaConstraint:
        start = self.expect("meta")
        mid = self.ident("meta constraint id")
        self.expect("{")
        text = ""
        if self.accept("text"):
            text = self.string()
            self.expect(";")
        self.expect("for")
        self.expect("each")
        subject_tok = self.tok
        subject = self.ident("'activity' or 'constraint'")
        where_key = where_value = None
        require_value = None
        if subject == "activity":
            self.expect("using")
            where_key, where_value = "using", self.string("resource name")
            self.expect("require")
            self.expect("constraint")
            require_key = "constraint"
            require_value = self.ident("constraint id")
        elif subject == "constraint":
            if self.accept("with"):
                where_key = self.ident("filter key")
                where_value = self.ident("filter value")
            self.expect("require")
            require_key = self.ident("requirement")
            if require_key in ("scope", "application"):
                require_value = self.ident(f"{require_key} value")
        else:
            raise self.error("expected 'activity' or 'constraint'", subject_tok)
        self.expect(";")
        self.expect("}")
        try:
            return MetaConstraint(mid, subject, where_key, where_value, require_key, require_value, text)
        except ModelError as exc:
            raise ParseError(str(exc), start.line, start.col, self.source) from None


def parse_document(text: str, source: str | None = None) -> list[Statement]:
    statements = _Parser(text, source).document()
    ids = [s.id for s in statements]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ParseError(f"duplicate ids: {', '.join(dupes)}", source=source)
    return statements


def parse_constraint(text: str, source: str | None = None) -> ProcessConstraint:
    """Parse a document holding exactly one ``constraint`` block."""
    statements = parse_document(text, source)
    if len(statements) != 1 or not isinstance(statements[0], ProcessConstraint):
        raise ParseError("expected exactly one constraint block", source=source)
    return statements[0]


def parse_data_expr(text: str, source: str | None = None) -> DataExpr:
    parser = _Parser(text, source)
    expr = parser.data_expr()
    if parser.tok.kind != "eof":
        raise parser.error(f"unexpected {parser.tok.text!r} after expression")
    return expr


# -- printing ----------------------------------------------------------------


def _literal(value: int | str | bool) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return quote(value)


def format_data_expr(expr: DataExpr) -> str:
    def child(e: DataExpr) -> str:
        text = format_data_expr(e)
        return f"({text})" if isinstance(e, (And, Or)) else text

    if isinstance(expr, Compare):
        return f"{expr.ref} {expr.op} {_literal(expr.value)}"
    if isinstance(expr, SameValue):
        return f"{expr.left} == {expr.right}"
    if isinstance(expr, Not):
        return f"not {child(expr.item)}"
    if isinstance(expr, And):
        return " and ".join(child(i) for i in expr.items)
    if isinstance(expr, Or):
        return " or ".join(child(i) for i in expr.items)
    raise TypeError(expr)  # pragma: no cover


def _format_resource(atom: ResourceAtom) -> str:
    if isinstance(atom, RoleIs):
        return f"role({atom.var}) == {quote(atom.role)}"
    if isinstance(atom, SameActor):
        return f"same-actor({atom.left}, {atom.right})"
    if isinstance(atom, DifferentActor):
        return f"different-actor({atom.left}, {atom.right})"
    return f"uses-resource({atom.var}, {quote(atom.resource)})"


def _format_context(ctx: Context) -> str:
    inst = "all" if ctx.instances is None else "instances " + ", ".join(quote(i) for i in sorted(ctx.instances))
    if ctx.processes is None:
        return "all" if ctx.instances is None else f"all {inst}"
    return ", ".join(f"process {quote(p)} {inst}" for p in sorted(ctx.processes))


def format_condition(cond: Condition) -> str:
    parts = []
    if cond.data is not None:
        parts.append(f"data({format_data_expr(cond.data)})")
    if cond.time:
        atoms = " and ".join(
            f"{a.kind}_time_between({a.left}, {a.right}, {a.duration})" for a in cond.time
        )
        parts.append(f"time({atoms})")
    if cond.resource:
        parts.append("resource(" + " and ".join(_format_resource(a) for a in cond.resource) + ")")
    return " and ".join(parts)


def _format_binding(b: Binding) -> str:
    return f"{'optional' if b.optional else 'exists'} {b.var} is {quote(b.label)}"


def _format_behavior(beh: Behavior) -> str:
    if beh.kind == "attribute":
        if isinstance(beh.value, tuple):
            value = "(" + ", ".join(str(d) for d in beh.value) + ")"
        else:
            value = quote(str(beh.value))
        return f"attribute {beh.target} {beh.key} := {value}"
    if beh.kind == "synchronize":
        return f"synchronize {beh.target} {quote(str(beh.resource))}"
    msg = f" {quote(beh.message)}" if beh.message is not None else ""
    return f"raise-exception {beh.target}{msg}"


def serialize_constraint(c: ProcessConstraint) -> str:
    p = c.pattern
    lines = [f"constraint {c.id} {{"]
    if c.source_text:
        lines.append(f"  text {quote(c.source_text)};")
    lines.append(f"  context {_format_context(c.context)};")
    lines.append("  on " + ", ".join(_format_binding(b) for b in p.anchors) + ";")
    req = [_format_binding(b) for b in p.consequents]
    req += [f"{r.left} {r.kind} {r.right}" for r in p.relations]
    if req:
        lines.append("  require " + " and ".join(req) + ";")
    if p.absences:
        lines.append("  absent " + ", ".join(quote(a) for a in p.absences) + ";")
    if not c.condition.empty:
        lines.append(f"  condition {format_condition(c.condition)};")
    if c.linkage.triggers:
        lines.append("  trigger " + ", ".join(f"{t.position} {t.target}" for t in c.linkage.triggers) + ";")
    if not c.behavior.empty:
        lines.append(f"  behavior {_format_behavior(c.behavior)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def serialize_meta(m: MetaConstraint) -> str:
    lines = [f"meta {m.id} {{"]
    if m.source_text:
        lines.append(f"  text {quote(m.source_text)};")
    if m.subject == "activity":
        lines.append(f"  for each activity using {quote(str(m.where_value))} require constraint {m.require_value};")
    else:
        where = f" with {m.where_key} {m.where_value}" if m.where_key else ""
        req = m.require_key + (f" {m.require_value}" if m.require_value else "")
        lines.append(f"  for each constraint{where} require {req};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def serialize_statement(s: Statement) -> str:
    if isinstance(s, ProcessConstraint):
        return serialize_constraint(s)
    if isinstance(s, MetaConstraint):
        return serialize_meta(s)
    return f"rule {s.id} {quote(s.text)};\n"


def serialize_document(statements: list[Statement]) -> str:
    return "\n".join(serialize_statement(s) for s in statements)
