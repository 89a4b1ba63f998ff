"""Worst-case cost of one cycle.

Cost table: every literal or variable load, every operator and every store
costs 1. An IF costs all of its conditions plus its most expensive branch.
A FOR costs ``trips * (body + 2)``. A whole-array copy costs one load and
one store per element. The reference interpreter counts the same units
dynamically, so the static figure is an upper bound on every actual cycle.
"""

from __future__ import annotations

from dataclasses import dataclass

from .typecheck import (
    TArrayCopy, TAssign, TBinary, TConst, TFor, TIf, TIndex, TUnary, TVar, TypedModel,
)

LOOP_OVERHEAD = 2


@dataclass(frozen=True)
class CycleBound:
    max_ops: int
    max_stack_depth: int


def expr_cost(e) -> int:
    if isinstance(e, (TConst, TVar)):
        return 1
    if isinstance(e, TIndex):
        return 1 + expr_cost(e.index)
    if isinstance(e, TUnary):
        return 1 + expr_cost(e.operand)
    if isinstance(e, TBinary):
        return 1 + expr_cost(e.left) + expr_cost(e.right)
    raise TypeError(e)


def expr_depth(e) -> int:
    """Operand-stack slots needed to evaluate ``e`` left to right."""
    if isinstance(e, (TConst, TVar)):
        return 1
    if isinstance(e, TIndex):
        return expr_depth(e.index)
    if isinstance(e, TUnary):
        return expr_depth(e.operand)
    return max(expr_depth(e.left), 1 + expr_depth(e.right))


def stmts_cost(stmts) -> int:
    return sum(stmt_cost(s) for s in stmts)


def stmt_cost(s) -> int:
    if isinstance(s, TAssign):
        c = 1 + expr_cost(s.value)
        if s.index is not None:
            c += expr_cost(s.index)
        return c
    if isinstance(s, TArrayCopy):
        return 2 * s.dst.length
    if isinstance(s, TIf):
        conds = sum(expr_cost(c) for c, _ in s.branches)
        bodies = [stmts_cost(b) for _, b in s.branches] + [stmts_cost(s.orelse)]
        return conds + max(bodies)
    if isinstance(s, TFor):
        return s.trips * (stmts_cost(s.body) + LOOP_OVERHEAD)
    raise TypeError(s)


def stmts_depth(stmts) -> int:
    d = 0
    for s in stmts:
        if isinstance(s, TAssign):
            v = expr_depth(s.value)
            if s.index is not None:
                v = max(expr_depth(s.index), 1 + v)
            d = max(d, v)
        elif isinstance(s, TArrayCopy):
            d = max(d, 1)
        elif isinstance(s, TIf):
            for c, b in s.branches:
                d = max(d, expr_depth(c), stmts_depth(b))
            d = max(d, stmts_depth(s.orelse))
        elif isinstance(s, TFor):
            d = max(d, stmts_depth(s.body))
    return d


def complexity_check(tm: TypedModel) -> CycleBound:
    return CycleBound(stmts_cost(tm.body), stmts_depth(tm.body))


def reset_ops(tm: TypedModel) -> int:
    """Allowance for the fixed per-cycle prologue (output reset) and the final halt.

    It is independent of the back end: each output may take up to four
    instructions per element plus a small loop setup.
    """
    return 8 + sum(8 + 4 * s.length for s in tm.outputs)


def instruction_budget(tm: TypedModel, margin: int = 4) -> int:
    """Step limit for one instance in one cycle."""
    return margin * complexity_check(tm).max_ops + reset_ops(tm)
