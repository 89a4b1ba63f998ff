"""Type checking and static interval annotation.

The typed tree is what every later stage consumes: the reference
interpreter, both code generators, the cost model and the exhaustive
checker. Every typed expression carries its kind (BOOL or INT) and a sound
static interval ``[lo, hi]`` computed with exact integers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import ast as A
from .diagnostics import ModelError, error

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

INPUT, OUTPUT, STATE, LOOP = "input", "output", "state", "loop"


@dataclass(eq=False)
class Symbol:
    name: str
    kind: str
    type: A.Type
    index: int = 0           # position in declaration order
    init: list = field(default_factory=list)

    @property
    def is_array(self) -> bool:
        return isinstance(self.type, A.ArrayType)

    @property
    def elem(self) -> A.ScalarType:
        return A.scalar_of(self.type)

    @property
    def length(self) -> int:
        return self.type.length if self.is_array else 1

    @property
    def is_bool(self) -> bool:
        return isinstance(self.elem, A.BoolType)

    @property
    def lo(self) -> int:
        return 0 if self.is_bool else self.elem.lo

    @property
    def hi(self) -> int:
        return 1 if self.is_bool else self.elem.hi


# -- typed expressions (kind is "bool" or "int") ------------------------------

@dataclass(eq=False)
class TConst:
    value: int
    kind: str
    lo: int
    hi: int


@dataclass(eq=False)
class TVar:
    sym: Symbol
    kind: str
    lo: int
    hi: int


@dataclass(eq=False)
class TIndex:
    sym: Symbol
    index: object
    kind: str
    lo: int
    hi: int


@dataclass(eq=False)
class TUnary:
    op: str
    operand: object
    kind: str
    lo: int
    hi: int


@dataclass(eq=False)
class TBinary:
    op: str
    left: object
    right: object
    kind: str
    lo: int
    hi: int


# -- typed statements ----------------------------------------------------------

@dataclass(eq=False)
class TAssign:
    sym: Symbol
    index: Optional[object]
    value: object
    span: A.Span = A.NOSPAN


@dataclass(eq=False)
class TArrayCopy:
    dst: Symbol
    src: Symbol
    span: A.Span = A.NOSPAN


@dataclass(eq=False)
class TIf:
    branches: list  # of (cond, [stmts])
    orelse: list


@dataclass(eq=False)
class TFor:
    sym: Symbol
    lo: int
    hi: int
    body: list

    @property
    def trips(self) -> int:
        return max(0, self.hi - self.lo + 1)


@dataclass(eq=False)
class TypedModel:
    model: A.Model
    inputs: list
    outputs: list
    state: list
    loop_slots: list          # distinct loop index names, in first-use order
    invariant: Optional[object]
    body: list

    @property
    def name(self) -> str:
        return self.model.name

    @property
    def variables(self) -> list:
        """Inputs, outputs and state in declaration order."""
        return self.inputs + self.outputs + self.state

    def symbol(self, name: str) -> Symbol:
        for s in self.variables:
            if s.name == name:
                return s
        raise KeyError(name)


# -- interval arithmetic ---------------------------------------------------------

def _trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b > 0) else -q


def _trunc_mod(a: int, b: int) -> int:
    return a - b * _trunc_div(a, b)


def binop_interval(op: str, l: tuple, r: tuple) -> tuple:
    (alo, ahi), (blo, bhi) = l, r
    if op == "+":
        return alo + blo, ahi + bhi
    if op == "-":
        return alo - bhi, ahi - blo
    if op == "*":
        c = [alo * blo, alo * bhi, ahi * blo, ahi * bhi]
        return min(c), max(c)
    if op == "/":
        parts = []
        if blo <= -1:
            parts.append((blo, min(bhi, -1)))
        if bhi >= 1:
            parts.append((max(blo, 1), bhi))
        if not parts:
            return 0, 0
        c = [_trunc_div(a, b) for lo, hi in parts for a in (alo, ahi) for b in (lo, hi)]
        return min(c), max(c)
    if op == "MOD":
        m = max(abs(blo), abs(bhi)) - 1
        if m < 0:
            return 0, 0
        lo = 0 if alo >= 0 else max(alo, -m)
        hi = 0 if ahi <= 0 else min(ahi, m)
        return lo, hi
    return 0, 1


def apply_binop(op: str, a: int, b: int) -> int:
    """Exact value of a binary operator; division by zero raises ZeroDivisionError."""
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return _trunc_div(a, b)
    if op == "MOD":
        return _trunc_mod(a, b)
    if op == "AND":
        return a & b
    if op == "OR":
        return a | b
    if op == "XOR":
        return a ^ b
    if op == "=":
        return int(a == b)
    if op == "/=":
        return int(a != b)
    if op == "<":
        return int(a < b)
    if op == "<=":
        return int(a <= b)
    if op == ">":
        return int(a > b)
    if op == ">=":
        return int(a >= b)
    raise ValueError(op)


class Checker:
    def __init__(self, model: A.Model):
        self.model = model
        self.diags = []
        self.constants = dict(model.constants)
        self.scope = {}
        self.loop_slots = []
        self.active_loops = set()

    def err(self, span, code, msg):
        self.diags.append(error(span, code, msg))

    def declare(self):
        idx = 0
        out = {INPUT: [], OUTPUT: [], STATE: []}
        for kind, decls in ((INPUT, self.model.inputs), (OUTPUT, self.model.outputs),
                            (STATE, self.model.state)):
            for d in decls:
                if isinstance(d.type, A.IntType) and not (
                        A.INT32_MIN <= d.type.lo <= d.type.hi <= A.INT32_MAX):
                    self.err(d.span, "range", f"bad range for '{d.name}'")
                sym = Symbol(d.name, kind, d.type, idx, d.initial_values())
                idx += 1
                if kind == STATE:
                    self.check_init(d, sym)
                out[kind].append(sym)
                self.scope[d.name] = sym
        return out

    def check_init(self, d: A.VarDecl, sym: Symbol):
        if isinstance(d.init, tuple) and len(d.init) != sym.length:
            self.err(d.span, "type-mismatch",
                     f"'{d.name}' has {sym.length} elements but {len(d.init)} initial values")
            return
        for v in sym.init:
            if not sym.lo <= v <= sym.hi:
                self.err(d.span, "range", f"initial value {v} outside the type of '{d.name}'")
                return

    # -- expressions
    def expr(self, e):
        if isinstance(e, A.Lit):
            kind = "bool" if e.is_bool else "int"
            return TConst(e.value, kind, e.value, e.value)
        if isinstance(e, A.Name):
            if e.ident in self.constants:
                v = self.constants[e.ident]
                return TConst(v, "int", v, v)
            sym = self.lookup(e.ident, e.span)
            if sym.is_array:
                self.err(e.span, "type-mismatch", f"array '{sym.name}' used as a scalar")
            return TVar(sym, "bool" if sym.is_bool else "int", sym.lo, sym.hi)
        if isinstance(e, A.Index):
            sym = self.lookup(e.ident, e.span)
            idx = self.expr(e.index)
            if not sym.is_array:
                self.err(e.span, "type-mismatch", f"'{sym.name}' is not an array")
            if idx.kind != "int":
                self.err(e.span, "index-type", f"index of '{sym.name}' must be INT")
            return TIndex(sym, idx, "bool" if sym.is_bool else "int", sym.lo, sym.hi)
        if isinstance(e, A.Unary):
            x = self.expr(e.operand)
            if e.op == "NOT":
                self.want(x, "bool", e.span, "NOT")
                return TUnary("NOT", x, "bool", 0, 1)
            self.want(x, "int", e.span, "unary minus")
            return TUnary("-", x, "int", -x.hi, -x.lo)
        if isinstance(e, A.Binary):
            l, r = self.expr(e.left), self.expr(e.right)
            if e.op in A.BOOL_OPS:
                self.want(l, "bool", e.span, e.op)
                self.want(r, "bool", e.span, e.op)
                return TBinary(e.op, l, r, "bool", 0, 1)
            if e.op in ("=", "/="):
                if l.kind != r.kind:
                    self.err(e.span, "type-mismatch", f"operands of '{e.op}' differ in type")
                return TBinary(e.op, l, r, "bool", 0, 1)
            self.want(l, "int", e.span, e.op)
            self.want(r, "int", e.span, e.op)
            if e.op in A.CMP_OPS:
                return TBinary(e.op, l, r, "bool", 0, 1)
            lo, hi = binop_interval(e.op, (l.lo, l.hi), (r.lo, r.hi))
            return TBinary(e.op, l, r, "int", lo, hi)
        raise TypeError(f"not an expression: {e!r}")

    def want(self, x, kind, span, what):
        if x.kind != kind:
            self.err(span, "type-mismatch", f"{what} expects {kind.upper()}, got {x.kind.upper()}")

    def lookup(self, name, span) -> Symbol:
        sym = self.scope.get(name)
        if sym is None:
            self.err(span, "unknown-identifier", f"unknown identifier '{name}'")
            # placeholder keeps checking going
            sym = Symbol(name, STATE, A.IntType(0, 0))
            self.scope[name] = sym
        return sym

    def const_value(self, e, what: str):
        """Fold a constant expression (literals, CONSTANTS, arithmetic)."""
        if isinstance(e, A.Lit) and not e.is_bool:
            return e.value
        if isinstance(e, A.Name):
            if e.ident in self.constants:
                return self.constants[e.ident]
            self.err(e.span, "non-constant-bound", f"{what} must be a constant expression, "
                     f"'{e.ident}' is a variable")
            return None
        if isinstance(e, A.Unary) and e.op == "-":
            v = self.const_value(e.operand, what)
            return None if v is None else -v
        if isinstance(e, A.Binary) and e.op in A.ARITH_OPS:
            a, b = self.const_value(e.left, what), self.const_value(e.right, what)
            if a is None or b is None:
                return None
            if e.op in ("/", "MOD") and b == 0:
                self.err(e.span, "non-constant-bound", f"division by zero in {what}")
                return None
            return apply_binop(e.op, a, b)
        self.err(getattr(e, "span", A.NOSPAN), "non-constant-bound",
                 f"{what} must be a constant integer expression")
        return None

    # -- statements
    def stmts(self, stmts) -> list:
        return [self.stmt(s) for s in stmts]

    def stmt(self, s):
        if isinstance(s, A.Assign):
            return self.assign(s)
        if isinstance(s, A.If):
            branches = []
            for cond, body in s.branches:
                c = self.expr(cond)
                self.want(c, "bool", s.span, "IF condition")
                branches.append((c, self.stmts(body)))
            orelse = self.stmts(s.orelse) if s.orelse is not None else []
            return TIf(branches, orelse)
        if isinstance(s, A.For):
            lo = self.const_value(s.lo, "FOR bound")
            hi = self.const_value(s.hi, "FOR bound")
            if s.var in self.active_loops or (
                    s.var in self.scope and self.scope[s.var].kind != LOOP) or s.var in self.constants:
                self.err(s.span, "duplicate", f"loop index '{s.var}' shadows another identifier")
            lo = 0 if lo is None else lo
            hi = 0 if hi is None else hi
            for v in (lo, hi):
                if not A.INT32_MIN <= v <= A.INT32_MAX:
                    self.err(s.span, "range", f"FOR bound {v} outside signed 32-bit range")
            sym = Symbol(s.var, LOOP, A.IntType(min(lo, hi), max(lo, hi)))
            if s.var not in self.loop_slots:
                self.loop_slots.append(s.var)
            saved = self.scope.get(s.var)
            self.scope[s.var] = sym
            self.active_loops.add(s.var)
            body = self.stmts(s.body)
            self.active_loops.discard(s.var)
            if saved is None:
                del self.scope[s.var]
            else:
                self.scope[s.var] = saved
            return TFor(sym, lo, hi, body)
        raise TypeError(f"not a statement: {s!r}")

    def assign(self, s: A.Assign):
        if s.target in self.constants:
            self.err(s.span, "assign-constant", f"cannot assign to constant '{s.target}'")
        sym = self.lookup(s.target, s.span)
        if sym.kind == INPUT:
            self.err(s.span, "assign-input", f"cannot assign to input '{sym.name}'")
        elif sym.kind == LOOP:
            self.err(s.span, "assign-loop-index", f"cannot assign to FOR index '{sym.name}'")
        if s.index is not None:
            idx = self.expr(s.index)
            if not sym.is_array:
                self.err(s.span, "type-mismatch", f"'{sym.name}' is not an array")
            if idx.kind != "int":
                self.err(s.span, "index-type", f"index of '{sym.name}' must be INT")
            value = self.expr(s.value)
            self.want(value, "bool" if sym.is_bool else "int", s.span, f"element of '{sym.name}'")
            return TAssign(sym, idx, value, s.span)
        if sym.is_array:
            src = s.value
            other = self.scope.get(src.ident) if isinstance(src, A.Name) else None
            if other is None or not other.is_array:
                self.err(s.span, "type-mismatch", f"array '{sym.name}' needs a whole-array value")
                return TArrayCopy(sym, sym, s.span)
            if other.length != sym.length or other.is_bool != sym.is_bool:
                self.err(s.span, "type-mismatch",
                         f"cannot assign {other.type} to {sym.type}")
            return TArrayCopy(sym, other, s.span)
        value = self.expr(s.value)
        self.want(value, "bool" if sym.is_bool else "int", s.span, f"assignment to '{sym.name}'")
        return TAssign(sym, None, value, s.span)

    def run(self) -> TypedModel:
        syms = self.declare()
        invariant = None
        if self.model.invariant is not None:
            invariant = self.expr(self.model.invariant)
            self.want(invariant, "bool", self.model.span, "INVARIANT")
        body = self.stmts(self.model.body)
        if self.diags:
            raise ModelError(self.diags)
        return TypedModel(self.model, syms[INPUT], syms[OUTPUT], syms[STATE],
                          self.loop_slots, invariant, body)


def typecheck(model: A.Model) -> TypedModel:
    """Check types and annotate intervals; raises ModelError on any problem."""
    return Checker(model).run()


def walk_exprs(e):
    """Yield ``e`` and all of its typed subexpressions."""
    yield e
    if isinstance(e, TIndex):
        yield from walk_exprs(e.index)
    elif isinstance(e, TUnary):
        yield from walk_exprs(e.operand)
    elif isinstance(e, TBinary):
        yield from walk_exprs(e.left)
        yield from walk_exprs(e.right)
