"""Syntax tree of a B0-lite machine.

Nodes are frozen dataclasses; source spans are excluded from equality so a
printed-then-reparsed model compares equal to the original.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1
MAX_ARRAY = 65536


@dataclass(frozen=True)
class Span:
    line: int = 0
    col: int = 0

    def __str__(self):
        return f"{self.line}:{self.col}"


NOSPAN = Span()


def _span():
    return field(default=NOSPAN, compare=False, repr=False)


@dataclass(frozen=True)
class BoolType:
    def __str__(self):
        return "BOOL"


@dataclass(frozen=True)
class IntType:
    lo: int
    hi: int

    def __str__(self):
        return f"INT({self.lo}..{self.hi})"


@dataclass(frozen=True)
class ArrayType:
    length: int
    elem: Union[BoolType, IntType]

    def __str__(self):
        return f"ARRAY {self.length} OF {self.elem}"


ScalarType = Union[BoolType, IntType]
Type = Union[BoolType, IntType, ArrayType]

BOOL = BoolType()


def scalar_of(ty: Type) -> ScalarType:
    return ty.elem if isinstance(ty, ArrayType) else ty


def default_value(ty: ScalarType) -> int:
    """Fail-safe default: FALSE for booleans, the range minimum for integers."""
    return ty.lo if isinstance(ty, IntType) else 0


# -- expressions -------------------------------------------------------------

@dataclass(frozen=True)
class Lit:
    value: int
    is_bool: bool = False
    span: Span = _span()


@dataclass(frozen=True)
class Name:
    ident: str
    span: Span = _span()


@dataclass(frozen=True)
class Index:
    ident: str
    index: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Unary:
    op: str  # "NOT" or "-"
    operand: "Expr"
    span: Span = _span()


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"
    span: Span = _span()


Expr = Union[Lit, Name, Index, Unary, Binary]

TRUE = Lit(1, True)
FALSE = Lit(0, True)

BOOL_OPS = ("AND", "OR", "XOR")
CMP_OPS = ("=", "/=", "<", "<=", ">", ">=")
ARITH_OPS = ("+", "-", "*", "/", "MOD")


# -- statements --------------------------------------------------------------

@dataclass(frozen=True)
class Assign:
    target: str
    index: Optional[Expr]
    value: Expr
    span: Span = _span()


@dataclass(frozen=True)
class If:
    branches: tuple  # of (cond, tuple of stmts)
    orelse: Optional[tuple] = None
    span: Span = _span()


@dataclass(frozen=True)
class For:
    var: str
    lo: Expr
    hi: Expr
    body: tuple
    span: Span = _span()


Stmt = Union[Assign, If, For]


# -- declarations ------------------------------------------------------------

@dataclass(frozen=True)
class VarDecl:
    name: str
    type: Type
    init: Optional[Union[int, tuple]] = None  # scalar (broadcast) or per-element tuple
    span: Span = _span()

    def initial_values(self) -> list[int]:
        """Flattened initial contents, applying the fail-safe defaults."""
        elem = scalar_of(self.type)
        n = self.type.length if isinstance(self.type, ArrayType) else 1
        if self.init is None:
            return [default_value(elem)] * n
        if isinstance(self.init, tuple):
            return list(self.init)
        return [self.init] * n


@dataclass(frozen=True)
class Model:
    name: str
    inputs: tuple = ()
    outputs: tuple = ()
    state: tuple = ()
    constants: tuple = ()  # of (name, value)
    invariant: Optional[Expr] = None
    body: tuple = ()
    span: Span = _span()

    def decls(self):
        yield from self.inputs
        yield from self.outputs
        yield from self.state
