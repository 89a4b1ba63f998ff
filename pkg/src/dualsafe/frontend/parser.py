"""Recursive-descent parser for B0-lite source text.

``parse`` either returns a Model or raises ModelError; it never lets any
other exception escape, whatever the input.
"""

from __future__ import annotations

import re

from .ast import (
    BOOL, INT32_MAX, INT32_MIN, MAX_ARRAY, ArrayType, Assign, Binary, For, If,
    Index, IntType, Lit, Model, Name, Span, Unary, VarDecl,
)
from .diagnostics import ModelError, error

KEYWORDS = {
    "MACHINE", "INPUTS", "OUTPUTS", "STATE", "CONSTANTS", "INVARIANT", "OPERATION",
    "BEGIN", "END", "IF", "THEN", "ELSIF", "ELSE", "FOR", "FROM", "TO", "DO",
    "BOOL", "INT", "ARRAY", "OF", "NOT", "AND", "OR", "XOR", "MOD", "TRUE", "FALSE",
    "WHILE",
}
SECTIONS = ("INPUTS", "OUTPUTS", "STATE", "CONSTANTS", "INVARIANT", "OPERATION")

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*)
  | (?P<int>[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>:=|\.\.|/=|<=|>=|[():;,=<>+\-*/\[\]])
""", re.VERBOSE)


class Token:
    __slots__ = ("kind", "text", "span")

    def __init__(self, kind, text, span):
        self.kind, self.text, self.span = kind, text, span

    def __repr__(self):
        return f"Token({self.kind}, {self.text!r}, {self.span})"


class _Stop(Exception):
    pass


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos, line, col = 0, 1, 1
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ModelError([error(Span(line, col), "syntax",
                                    f"unexpected character {source[pos]!r}")])
        text = m.group()
        kind = m.lastgroup
        if kind != "ws":
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, text, Span(line, col)))
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    tokens.append(Token("eof", "", Span(line, col)))
    return tokens


class Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.pos = 0
        self.diags = []
        self._const_spans = []

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def at(self, text: str) -> bool:
        return self.tok.kind in ("kw", "sym") and self.tok.text == text

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.pos += 1
        return t

    def fail(self, message: str, span=None, code="syntax"):
        self.diags.append(error(span or self.tok.span, code, message))
        raise _Stop

    def expect(self, text: str) -> Token:
        if not self.at(text):
            got = self.tok.text or "end of input"
            self.fail(f"expected '{text}', found '{got}'")
        return self.advance()

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            if self.at("WHILE"):
                self.fail("WHILE loops are not part of the language; use a bounded FOR")
            got = self.tok.text or "end of input"
            self.fail(f"expected identifier, found '{got}'")
        return self.advance()

    def integer(self) -> int:
        neg = False
        if self.at("-"):
            self.advance()
            neg = True
        if self.tok.kind != "int":
            self.fail(f"expected integer, found '{self.tok.text or 'end of input'}'")
        t = self.advance()
        value = -int(t.text) if neg else int(t.text)
        if not INT32_MIN <= value <= INT32_MAX:
            self.fail(f"integer {value} outside signed 32-bit range", t.span, "literal-range")
        return value

    def section_ends(self, follow: str) -> bool:
        # an upper-case word not followed by the decl punctuation starts a section
        t = self.tok
        if t.kind != "ident":
            return True
        nxt = self.toks[self.pos + 1]
        return t.text.isupper() and nxt.text != follow

    def separators(self):
        while self.at(";") or self.at(","):
            self.advance()

    # -- model
    def model(self) -> Model:
        start = self.tok.span
        self.expect("MACHINE")
        name = self.ident().text
        parts = {"INPUTS": [], "OUTPUTS": [], "STATE": [], "CONSTANTS": []}
        invariant = None
        operations = []
        while self.tok.kind != "eof":
            t = self.tok
            if t.kind == "kw" and t.text in parts:
                self.advance()
                if t.text == "CONSTANTS":
                    parts[t.text] += self.constants()
                else:
                    parts[t.text] += self.decls(with_init=t.text == "STATE")
            elif self.at("INVARIANT"):
                self.advance()
                if invariant is not None:
                    self.fail("duplicate INVARIANT section", t.span)
                invariant = self.expr()
            elif self.at("OPERATION"):
                self.advance()
                op = self.ident()
                self.expect("BEGIN")
                body = self.stmts(("END",))
                self.expect("END")
                operations.append((op, body))
            elif t.kind == "ident" and t.text.isupper():
                self.fail(f"unknown section '{t.text}'", code="unknown-section")
            else:
                self.fail(f"expected a section keyword, found '{t.text}'")
        if not operations:
            self.fail("missing OPERATION user_logic", start, "operation-name")
        if len(operations) > 1:
            self.fail("exactly one operation is allowed", operations[1][0].span, "operation-name")
        op, body = operations[0]
        if op.text != "user_logic":
            self.fail(f"operation must be named user_logic, not '{op.text}'", op.span,
                      "operation-name")
        model = Model(name, tuple(parts["INPUTS"]), tuple(parts["OUTPUTS"]),
                      tuple(parts["STATE"]), tuple(parts["CONSTANTS"]), invariant,
                      body, start)
        self.check_duplicates(model)
        return model

    def check_duplicates(self, model: Model):
        seen = {}
        spans = [(d.name, d.span) for d in model.decls()]
        spans += [(n, s) for n, _, s in self._const_spans]
        for name, span in spans:
            if name in seen:
                self.diags.append(error(span, "duplicate",
                                        f"identifier '{name}' already declared at {seen[name]}"))
            else:
                seen[name] = span
        if self.diags:
            raise _Stop

    def constants(self):
        out = []
        self.separators()
        while not self.section_ends("="):
            t = self.advance()
            self.expect("=")
            value = self.integer()
            out.append((t.text, value))
            self._const_spans.append((t.text, value, t.span))
            self.separators()
        return out

    def decls(self, with_init: bool):
        out = []
        self.separators()
        while not self.section_ends(":"):
            t = self.advance()
            self.expect(":")
            ty = self.type()
            init = None
            if self.at(":="):
                if not with_init:
                    self.fail("only STATE variables take an initial value")
                self.advance()
                init = self.init_value(ty)
            out.append(VarDecl(t.text, ty, init, t.span))
            self.separators()
        return out

    def type(self):
        t = self.tok
        if self.at("BOOL"):
            self.advance()
            return BOOL
        if self.at("INT"):
            self.advance()
            self.expect("(")
            lo = self.integer()
            self.expect("..")
            hi = self.integer()
            self.expect(")")
            if lo > hi:
                self.fail(f"empty range {lo}..{hi}", t.span, "range")
            return IntType(lo, hi)
        if self.at("ARRAY"):
            self.advance()
            if self.tok.kind != "int":
                self.fail("expected array length")
            n = int(self.advance().text)
            if not 1 <= n <= MAX_ARRAY:
                self.fail(f"array length {n} outside 1..{MAX_ARRAY}", t.span, "range")
            self.expect("OF")
            elem = self.type()
            if isinstance(elem, ArrayType):
                self.fail("arrays of arrays are not supported", t.span)
            return ArrayType(n, elem)
        self.fail(f"expected a type, found '{t.text}'")

    def init_scalar(self):
        if self.at("TRUE"):
            self.advance()
            return 1
        if self.at("FALSE"):
            self.advance()
            return 0
        return self.integer()

    def init_value(self, ty):
        if self.at("["):
            self.advance()
            values = [self.init_scalar()]
            while self.at(","):
                self.advance()
                values.append(self.init_scalar())
            self.expect("]")
            return tuple(values)
        return self.init_scalar()

    # -- statements
    def stmts(self, terminators):
        out = []
        while True:
            self.separators()
            if self.tok.kind == "eof" or (self.tok.kind == "kw" and self.tok.text in terminators):
                return tuple(out)
            out.append(self.stmt())
            if not (self.at(";") or (self.tok.kind == "kw" and self.tok.text in terminators)):
                self.fail(f"expected ';' or {'/'.join(terminators)}, found '{self.tok.text}'")

    def stmt(self):
        t = self.tok
        if self.at("IF"):
            self.advance()
            branches = []
            cond = self.expr()
            self.expect("THEN")
            branches.append((cond, self.stmts(("ELSIF", "ELSE", "END"))))
            orelse = None
            while self.at("ELSIF"):
                self.advance()
                cond = self.expr()
                self.expect("THEN")
                branches.append((cond, self.stmts(("ELSIF", "ELSE", "END"))))
            if self.at("ELSE"):
                self.advance()
                orelse = self.stmts(("END",))
            self.expect("END")
            return If(tuple(branches), orelse, t.span)
        if self.at("FOR"):
            self.advance()
            var = self.ident().text
            self.expect("FROM")
            lo = self.expr()
            self.expect("TO")
            hi = self.expr()
            self.expect("DO")
            body = self.stmts(("END",))
            self.expect("END")
            return For(var, lo, hi, body, t.span)
        name = self.ident()
        index = None
        if self.at("("):
            self.advance()
            index = self.expr()
            self.expect(")")
        self.expect(":=")
        return Assign(name.text, index, self.expr(), name.span)

    # -- expressions, lowest precedence first
    def expr(self):
        left = self.conj()
        while self.at("OR") or self.at("XOR"):
            t = self.advance()
            left = Binary(t.text, left, self.conj(), t.span)
        return left

    def conj(self):
        left = self.neg()
        while self.at("AND"):
            t = self.advance()
            left = Binary("AND", left, self.neg(), t.span)
        return left

    def neg(self):
        if self.at("NOT"):
            t = self.advance()
            return Unary("NOT", self.neg(), t.span)
        return self.comparison()

    def comparison(self):
        left = self.additive()
        if self.tok.kind == "sym" and self.tok.text in ("=", "/=", "<", "<=", ">", ">="):
            t = self.advance()
            left = Binary(t.text, left, self.additive(), t.span)
            if self.tok.kind == "sym" and self.tok.text in ("=", "/=", "<", "<=", ">", ">="):
                self.fail("comparisons do not chain; add parentheses")
        return left

    def additive(self):
        left = self.term()
        while self.at("+") or self.at("-"):
            t = self.advance()
            left = Binary(t.text, left, self.term(), t.span)
        return left

    def term(self):
        left = self.unary()
        while self.at("*") or self.at("/") or self.at("MOD"):
            t = self.advance()
            left = Binary(t.text, left, self.unary(), t.span)
        return left

    def unary(self):
        if self.at("-"):
            t = self.advance()
            if self.tok.kind == "int":
                lit = self.advance()
                value = -int(lit.text)
                if value < INT32_MIN:
                    self.fail(f"integer {value} outside signed 32-bit range", lit.span,
                              "literal-range")
                return Lit(value, False, t.span)
            return Unary("-", self.unary(), t.span)
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "int":
            self.advance()
            value = int(t.text)
            if value > INT32_MAX:
                self.fail(f"integer {value} outside signed 32-bit range", t.span, "literal-range")
            return Lit(value, False, t.span)
        if self.at("TRUE") or self.at("FALSE"):
            self.advance()
            return Lit(int(t.text == "TRUE"), True, t.span)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.advance()
            if self.at("("):
                self.advance()
                idx = self.expr()
                self.expect(")")
                return Index(t.text, idx, t.span)
            return Name(t.text, t.span)
        if self.at("WHILE"):
            self.ident()
        self.fail(f"expected an expression, found '{t.text or 'end of input'}'")


def parse(source: str) -> Model:
    """Parse B0-lite text into a Model, or raise ModelError."""
    try:
        p = Parser(source)
        model = p.model()
    except _Stop:
        raise ModelError(p.diags) from None
    except RecursionError:
        raise ModelError([error(Span(1, 1), "syntax", "nesting too deep")]) from None
    return model
