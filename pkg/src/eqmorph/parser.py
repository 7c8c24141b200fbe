"""Hand-rolled lexer and recursive-descent parser for the SQL subset."""

from __future__ import annotations

import re
from decimal import Decimal

from .sqlast import (
    AGG_FNS, UNION, UNION_ALL, AggCall, And, ColumnRef, Cmp, Const, Not, Or,
    SqlQuery, SqlSyntaxError, TruthLit,
)
from .values import TruthValue

KEYWORDS = {
    "SELECT", "DISTINCT", "FROM", "WHERE", "GROUP", "BY", "HAVING",
    "UNION", "ALL", "AND", "OR", "NOT", "TRUE", "FALSE", "NULL",
    "COUNT", "SUM", "MIN", "MAX", "AVG",
    # accepted by the script loader, reserved here
    "CREATE", "TABLE", "INSERT", "INTO", "VALUES",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<dec>-?\d+\.\d+)
  | (?P<int>-?\d+)
  | (?P<str>'(?:[^']|'')*')
  | (?P<word>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|!=|=|<|>)
  | (?P<punct>[(),.;*])
""", re.VERBOSE)


class Token:
    __slots__ = ("kind", "value", "pos")

    def __init__(self, kind, value, pos):
        self.kind = kind
        self.value = value
        self.pos = pos

    def __repr__(self):
        return f"Token({self.kind}, {self.value!r}, {self.pos})"


def tokenize(text: str):
    tokens = []
    i = 0
    n = len(text)
    while i < n:
        m = _TOKEN_RE.match(text, i)
        if m is None:
            raise SqlSyntaxError(f"unexpected character {text[i]!r}", i)
        i = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        value = m.group()
        if kind == "word":
            upper = value.upper()
            if upper in KEYWORDS:
                tokens.append(Token("kw", upper, m.start()))
            else:
                tokens.append(Token("ident", value.lower(), m.start()))
        elif kind == "int":
            tokens.append(Token("int", int(value), m.start()))
        elif kind == "dec":
            tokens.append(Token("dec", Decimal(value), m.start()))
        elif kind == "str":
            tokens.append(Token("str", value[1:-1].replace("''", "'"),
                                m.start()))
        else:
            tokens.append(Token(kind, value, m.start()))
    tokens.append(Token("eof", None, n))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    @property
    def cur(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.cur
        self.i += 1
        return t

    def at_kw(self, *kws) -> bool:
        return self.cur.kind == "kw" and self.cur.value in kws

    def accept_kw(self, *kws):
        if self.at_kw(*kws):
            return self.advance()
        return None

    def expect_kw(self, kw):
        if not self.at_kw(kw):
            self.fail(f"expected {kw}", {kw})
        return self.advance()

    def expect(self, kind):
        if self.cur.kind != kind:
            self.fail(f"expected {kind}", {kind})
        return self.advance()

    def fail(self, message, expected=()):
        got = self.cur.value if self.cur.kind != "eof" else "end of input"
        raise SqlSyntaxError(f"{message}, got {got!r}", self.cur.pos, expected)

    # grammar ---------------------------------------------------------------

    def query(self) -> SqlQuery:
        q = self.select_core()
        if self.accept_kw(UNION):
            op = UNION_ALL if self.accept_kw("ALL") else UNION
            rhs = self.select_core()
            if self.at_kw(UNION):
                self.fail("at most one set operation is supported")
            q = SqlQuery(q.select, q.from_tables, q.distinct, q.where,
                         q.group_by, q.having, set_op=(op, rhs))
        if self.cur.kind == "punct" and self.cur.value == ";":
            self.advance()
        if self.cur.kind != "eof":
            self.fail("trailing input after query")
        return q

    def select_core(self) -> SqlQuery:
        self.expect_kw("SELECT")
        distinct = self.accept_kw("DISTINCT") is not None
        select = [self.select_item()]
        while self.punct(","):
            select.append(self.select_item())
        self.expect_kw("FROM")
        tables = [self.expect("ident").value]
        while self.punct(","):
            tables.append(self.expect("ident").value)
        where = group_by = having = None
        if self.accept_kw("WHERE"):
            where = self.pred()
        if self.accept_kw("GROUP"):
            self.expect_kw("BY")
            group_by = [self.column_ref()]
            while self.punct(","):
                group_by.append(self.column_ref())
        if self.at_kw("HAVING"):
            if group_by is None:
                self.fail("HAVING without GROUP BY")
            self.advance()
            having = self.pred()
        return SqlQuery(tuple(select), tuple(tables), distinct, where,
                        tuple(group_by) if group_by is not None else None,
                        having)

    def punct(self, ch) -> bool:
        if self.cur.kind == "punct" and self.cur.value == ch:
            self.advance()
            return True
        return False

    def select_item(self):
        if self.at_kw(*AGG_FNS):
            fn = self.advance().value
            if not self.punct("("):
                self.fail("expected (", {"("})
            if self.cur.kind == "punct" and self.cur.value == "*":
                self.advance()
                arg = None
                if fn != "COUNT":
                    self.fail("star argument is only valid for COUNT")
            else:
                arg = self.column_ref()
            if not self.punct(")"):
                self.fail("expected )", {")"})
            return AggCall(fn, arg)
        return self.column_ref()

    def column_ref(self) -> ColumnRef:
        first = self.expect("ident").value
        if self.cur.kind == "punct" and self.cur.value == ".":
            self.advance()
            name = self.expect("ident").value
            return ColumnRef(name, first)
        return ColumnRef(first)

    # predicates ------------------------------------------------------------

    def pred(self):
        return self.or_pred()

    def or_pred(self):
        p = self.and_pred()
        while self.accept_kw("OR"):
            p = Or(p, self.and_pred())
        return p

    def and_pred(self):
        p = self.unary_pred()
        while self.accept_kw("AND"):
            p = And(p, self.unary_pred())
        return p

    def unary_pred(self):
        if self.accept_kw("NOT"):
            return Not(self.unary_pred())
        return self.atom_pred()

    def atom_pred(self):
        if self.cur.kind == "punct" and self.cur.value == "(":
            self.advance()
            p = self.pred()
            if not self.punct(")"):
                self.fail("expected )", {")"})
            return p
        if self.at_kw("TRUE", "FALSE"):
            kw = self.advance().value
            return TruthLit(TruthValue.TRUE if kw == "TRUE"
                            else TruthValue.FALSE)
        if self.at_kw("NULL"):
            # NULL is a truth literal unless it starts a comparison
            if self.tokens[self.i + 1].kind == "op":
                left = Const(None)
                self.advance()
                return self.finish_cmp(left)
            self.advance()
            return TruthLit(TruthValue.UNKNOWN)
        left = self.term()
        return self.finish_cmp(left)

    def finish_cmp(self, left):
        if self.cur.kind != "op":
            self.fail("expected comparison operator", set("=<>"))
        op = self.advance().value
        right = self.term()
        return Cmp(left, op, right)

    def term(self):
        t = self.cur
        if t.kind == "ident":
            return self.column_ref()
        if t.kind in ("int", "dec", "str"):
            self.advance()
            return Const(t.value)
        if self.at_kw("NULL"):
            self.advance()
            return Const(None)
        self.fail("expected a column, constant, or NULL")


def parse(text: str) -> SqlQuery:
    """Parse a single statement; raises SqlSyntaxError on malformed input."""
    if not isinstance(text, str):
        raise SqlSyntaxError("input is not a string", 0)
    return _Parser(tokenize(text)).query()
