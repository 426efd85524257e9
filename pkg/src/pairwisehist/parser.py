"""Parser for the supported SQL subset.

    SELECT agg(col | *) FROM table [WHERE cond {AND|OR} cond ...] [GROUP BY col]

Conditions are ``col OP literal`` (or ``literal OP col``), ``col IS [NOT] NULL``;
parentheses group, AND binds tighter than OR. Literals are moved into the
encoded domain while parsing.
"""

from __future__ import annotations

import re
from typing import List, Optional, Sequence, Tuple

from .model import AGGREGATES, BoolNode, ColumnSpec, Condition, Predicate, QueryPlan
from .preprocess import transform_literal


class QueryShapeError(ValueError):
    """The query text is outside the supported grammar or references unknown columns."""


_TOKEN = re.compile(
    r"""\s*(?:
        (?P<num>-?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
      | '(?P<str>(?:[^']|'')*)'
      | (?P<op><=|>=|<>|!=|=|<|>)
      | (?P<punct>[(),*;])
      | "(?P<qid>[^"]+)"
      | `(?P<bid>[^`]+)`
      | (?P<word>[A-Za-z_][A-Za-z0-9_.]*)
    )""",
    re.VERBOSE,
)

_FLIP = {"<": ">", ">": "<", "<=": ">=", ">=": "<=", "=": "=", "!=": "!="}


def tokenize(text: str) -> List[Tuple[str, str]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise QueryShapeError(f"unsupported query shape: cannot tokenize near {text[pos:pos + 20]!r}")
        pos = m.end()
        kind = m.lastgroup
        value = m.group(kind)
        if kind == "str":
            value = value.replace("''", "'")
        elif kind in ("qid", "bid"):
            kind = "ident"
        elif kind == "word":
            kind = "ident" if value.upper() not in _KEYWORDS else "kw"
            value = value if kind == "ident" else value.upper()
        elif kind == "op" and value == "<>":
            value = "!="
        tokens.append((kind, value))
    return tokens


_KEYWORDS = {"SELECT", "FROM", "WHERE", "AND", "OR", "GROUP", "BY", "IS", "NOT", "NULL"}


class _Parser:
    def __init__(self, tokens, specs: Sequence[ColumnSpec]):
        self.tokens = tokens
        self.pos = 0
        self.specs = specs
        self.by_name = {s.name: s for s in specs}
        self.by_lower = {s.name.lower(): s for s in specs}

    def peek(self, offset=0):
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else (None, None)

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, kind, value=None):
        k, v = self.take()
        if k != kind or (value is not None and v != value):
            raise QueryShapeError(f"unsupported query shape: expected {value or kind}, got {v!r}")
        return v

    def accept(self, kind, value=None) -> bool:
        k, v = self.peek()
        if k == kind and (value is None or v == value):
            self.pos += 1
            return True
        return False

    def column(self, name: str) -> ColumnSpec:
        spec = self.by_name.get(name) or self.by_lower.get(name.lower())
        if spec is None:
            raise QueryShapeError(f"unknown column {name!r}")
        return spec

    def query(self) -> QueryPlan:
        self.expect("kw", "SELECT")
        agg = self.expect("ident").upper()
        if agg not in AGGREGATES:
            raise QueryShapeError(f"unsupported query shape: aggregate {agg}")
        self.expect("punct", "(")
        if self.accept("punct", "*"):
            if agg != "COUNT":
                raise QueryShapeError(f"unsupported query shape: {agg}(*)")
            agg_col = None
        else:
            agg_col = self.column(self.expect("ident")).column_id
        self.expect("punct", ")")
        self.expect("kw", "FROM")
        self.expect("ident")
        predicate = None
        if self.accept("kw", "WHERE"):
            predicate = self.disjunction()
        group_by = None
        if self.accept("kw", "GROUP"):
            self.expect("kw", "BY")
            spec = self.column(self.expect("ident"))
            if not spec.is_categorical:
                raise QueryShapeError("unsupported query shape: GROUP BY needs a categorical column")
            group_by = spec.column_id
        self.accept("punct", ";")
        if self.pos != len(self.tokens):
            raise QueryShapeError(f"unsupported query shape: trailing {self.peek()[1]!r}")
        return QueryPlan(agg, agg_col, predicate, group_by)

    def disjunction(self) -> Predicate:
        parts = [self.conjunction()]
        while self.accept("kw", "OR"):
            parts.append(self.conjunction())
        return _combine("OR", parts)

    def conjunction(self) -> Predicate:
        parts = [self.factor()]
        while self.accept("kw", "AND"):
            parts.append(self.factor())
        return _combine("AND", parts)

    def factor(self) -> Predicate:
        if self.accept("punct", "("):
            node = self.disjunction()
            self.expect("punct", ")")
            return node
        return self.condition()

    def _literal(self):
        kind, value = self.take()
        if kind == "num" or kind == "str":
            return value
        if kind == "kw" and value == "NULL":
            return None
        raise QueryShapeError(f"unsupported query shape: expected a literal, got {value!r}")

    def condition(self) -> Condition:
        kind, value = self.peek()
        if kind == "ident":
            spec = self.column(self.take()[1])
            if self.accept("kw", "IS"):
                negated = self.accept("kw", "NOT")
                self.expect("kw", "NULL")
                return Condition(spec.column_id, "IS NOT NULL" if negated else "IS NULL")
            op = self.expect("op")
            literal = self._literal()
        elif kind in ("num", "str"):
            literal = self._literal()
            op = _FLIP[self.expect("op")]
            spec = self.column(self.expect("ident"))
        else:
            raise QueryShapeError(f"unsupported query shape: unexpected {value!r}")
        if literal is None:
            if op not in ("=", "!="):
                raise QueryShapeError("unsupported query shape: ordering comparison with NULL")
            return Condition(spec.column_id, "IS NULL" if op == "=" else "IS NOT NULL")
        try:
            encoded = transform_literal(literal, op, spec)
        except ValueError as exc:
            raise QueryShapeError(f"unsupported query shape: {exc}") from None
        return Condition(spec.column_id, op, encoded)


def _combine(kind: str, parts: List[Predicate]) -> Predicate:
    if len(parts) == 1:
        return parts[0]
    flat: List[Predicate] = []
    for p in parts:
        if isinstance(p, BoolNode) and p.kind == kind:
            flat.extend(p.children)
        else:
            flat.append(p)
    return BoolNode(kind, tuple(flat))


def parse_query(text: str, specs_or_synopsis) -> QueryPlan:
    """Parse ``text`` against a synopsis (or a list of column specs)."""
    specs = getattr(specs_or_synopsis, "columns", specs_or_synopsis)
    return _Parser(tokenize(text), specs).query()
