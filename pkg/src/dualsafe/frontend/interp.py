"""Reference interpreter: the semantic oracle both back ends are held to.

Arithmetic is exact and then checked against the signed 64-bit range;
division truncates toward zero; every store into a ranged variable is
range-checked. A violated check raises Trap.
"""

from __future__ import annotations

from dataclasses import dataclass

from .typecheck import (
    INT64_MAX, INT64_MIN, TArrayCopy, TAssign, TBinary, TConst, TFor, TIf, TIndex,
    TUnary, TVar, TypedModel, apply_binop,
)

RANGE, DIV_ZERO, OVERFLOW, INDEX = "range", "div_zero", "overflow", "index"


class Trap(Exception):
    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {message}" if message else kind)


@dataclass
class CycleOutcome:
    outputs: dict
    state: dict
    ops: int


def initial_state(tm: TypedModel) -> dict:
    return {s.name: (list(s.init) if s.is_array else s.init[0]) for s in tm.state}


def default_outputs(tm: TypedModel) -> dict:
    return {s.name: ([s.lo] * s.length if s.is_array else s.lo) for s in tm.outputs}


def default_inputs(tm: TypedModel) -> dict:
    return {s.name: ([s.lo] * s.length if s.is_array else s.lo) for s in tm.inputs}


def check_inputs(tm: TypedModel, inputs: dict) -> dict:
    """Validate an input vector against the declared types; returns a normalized copy."""
    out = {}
    for s in tm.inputs:
        if s.name not in inputs:
            raise ValueError(f"missing input '{s.name}'")
        v = inputs[s.name]
        vals = list(v) if s.is_array else [v]
        if len(vals) != s.length:
            raise ValueError(f"input '{s.name}' needs {s.length} values")
        for x in vals:
            if isinstance(x, bool):
                x = int(x)
            if not isinstance(x, int) or not s.lo <= x <= s.hi:
                raise ValueError(f"input '{s.name}' value {x!r} outside {s.type}")
        out[s.name] = [int(x) for x in vals] if s.is_array else int(vals[0])
    extra = set(inputs) - {s.name for s in tm.inputs}
    if extra:
        raise ValueError(f"unknown inputs: {sorted(extra)}")
    return out


class Interpreter:
    def __init__(self, tm: TypedModel):
        self.tm = tm
        self.ops = 0
        self.env = {}

    def run_cycle(self, state: dict, inputs: dict) -> CycleOutcome:
        tm = self.tm
        self.ops = 0
        env = {}
        env.update({k: (list(v) if isinstance(v, list) else v) for k, v in inputs.items()})
        env.update(default_outputs(tm))
        env.update({k: (list(v) if isinstance(v, list) else v) for k, v in state.items()})
        self.env = env
        self.exec(tm.body)
        outputs = {s.name: env[s.name] for s in tm.outputs}
        new_state = {s.name: env[s.name] for s in tm.state}
        return CycleOutcome(outputs, new_state, self.ops)

    def eval_invariant(self, env: dict) -> bool:
        if self.tm.invariant is None:
            return True
        self.env = env
        return bool(self.eval(self.tm.invariant))

    # -- statements
    def exec(self, stmts):
        for s in stmts:
            if isinstance(s, TAssign):
                self.assign(s)
            elif isinstance(s, TIf):
                for cond, body in s.branches:
                    if self.eval(cond):
                        self.exec(body)
                        break
                else:
                    self.exec(s.orelse)
            elif isinstance(s, TFor):
                for k in range(s.lo, s.hi + 1):
                    self.env[s.sym.name] = k
                    self.ops += 2
                    self.exec(s.body)
            elif isinstance(s, TArrayCopy):
                src = self.env[s.src.name]
                dst = self.env[s.dst.name]
                for i, v in enumerate(src):
                    self.ops += 2
                    dst[i] = self.checked(s.dst, v)
            else:
                raise TypeError(s)

    def checked(self, sym, v: int) -> int:
        if not sym.lo <= v <= sym.hi:
            raise Trap(RANGE, f"{v} outside {sym.type} of '{sym.name}'")
        return v

    def assign(self, s: TAssign):
        if s.index is not None:
            i = self.eval(s.index)
            v = self.eval(s.value)
            self.ops += 1
            if not 0 <= i < s.sym.length:
                raise Trap(INDEX, f"index {i} outside '{s.sym.name}'")
            self.env[s.sym.name][i] = self.checked(s.sym, v)
        else:
            v = self.eval(s.value)
            self.ops += 1
            self.env[s.sym.name] = self.checked(s.sym, v)

    # -- expressions
    def eval(self, e) -> int:
        self.ops += 1
        if isinstance(e, TConst):
            return e.value
        if isinstance(e, TVar):
            return self.env[e.sym.name]
        if isinstance(e, TIndex):
            i = self.eval(e.index)
            if not 0 <= i < e.sym.length:
                raise Trap(INDEX, f"index {i} outside '{e.sym.name}'")
            return self.env[e.sym.name][i]
        if isinstance(e, TUnary):
            x = self.eval(e.operand)
            if e.op == "NOT":
                return 1 - x
            return self.in64(-x)
        if isinstance(e, TBinary):
            a = self.eval(e.left)
            b = self.eval(e.right)
            if e.op in ("/", "MOD") and b == 0:
                raise Trap(DIV_ZERO)
            return self.in64(apply_binop(e.op, a, b))
        raise TypeError(e)

    @staticmethod
    def in64(v: int) -> int:
        if not INT64_MIN <= v <= INT64_MAX:
            raise Trap(OVERFLOW, str(v))
        return v


def run_trace(tm: TypedModel, input_trace, state=None):
    """Yield one CycleOutcome per input vector, threading the state through."""
    interp = Interpreter(tm)
    state = initial_state(tm) if state is None else state
    for inputs in input_trace:
        out = interp.run_cycle(state, check_inputs(tm, inputs))
        state = out.state
        yield out
