"""Breadth-first invariant check over every reachable state of a small model."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .interp import Interpreter, Trap, default_outputs, initial_state
from .typecheck import TypedModel

HOLDS, VIOLATED, TRAP, TOO_LARGE = "holds", "violated", "trap", "too-large"


@dataclass
class InvariantReport:
    verdict: str
    states: int = 0
    estimate: int = 0
    witness: list = field(default_factory=list)  # input vectors, one per cycle
    trap: Optional[str] = None

    def summary(self) -> str:
        if self.verdict == HOLDS:
            return f"holds, {self.states} states"
        if self.verdict == TOO_LARGE:
            return f"state space too large: estimate {self.estimate}"
        what = f"trap {self.trap}" if self.verdict == TRAP else "invariant violated"
        return f"{what} after {len(self.witness)} cycles"


def _domain_size(sym) -> int:
    return (sym.hi - sym.lo + 1) ** sym.length


def space_estimate(tm: TypedModel) -> int:
    n = 1
    for s in tm.state + tm.inputs:
        n *= _domain_size(s)
    return n


def input_vectors(tm: TypedModel):
    """Every input vector of the model, in a fixed order."""
    axes = []
    for s in tm.inputs:
        values = range(s.lo, s.hi + 1)
        if s.is_array:
            axes.append([list(v) for v in itertools.product(values, repeat=s.length)])
        else:
            axes.append(list(values))
    names = [s.name for s in tm.inputs]
    for combo in itertools.product(*axes):
        yield dict(zip(names, combo))


def _freeze(state: dict) -> tuple:
    return tuple(tuple(v) if isinstance(v, list) else v for v in state.values())


def check_exhaustive(tm: TypedModel, max_states: int = 1_000_000) -> InvariantReport:
    estimate = space_estimate(tm)
    if estimate > max_states:
        return InvariantReport(TOO_LARGE, estimate=estimate)
    interp = Interpreter(tm)
    start = initial_state(tm)
    env = {**{s.name: (list(s.init) if s.is_array else s.lo) for s in tm.inputs},
           **default_outputs(tm), **start}
    if not interp.eval_invariant(env):
        return InvariantReport(VIOLATED, 1, estimate)
    vectors = list(input_vectors(tm))
    key = _freeze(start)
    parent = {key: None}
    queue = deque([(key, start)])
    while queue:
        key, state = queue.popleft()
        for inputs in vectors:
            try:
                out = interp.run_cycle(state, inputs)
            except Trap as t:
                return InvariantReport(TRAP, len(parent), estimate,
                                       _witness(parent, key) + [inputs], t.kind)
            env = {**inputs, **out.outputs, **out.state}
            if not interp.eval_invariant(env):
                return InvariantReport(VIOLATED, len(parent), estimate,
                                       _witness(parent, key) + [inputs])
            nkey = _freeze(out.state)
            if nkey not in parent:
                parent[nkey] = (key, inputs)
                queue.append((nkey, out.state))
    return InvariantReport(HOLDS, len(parent), estimate)


def _witness(parent, key) -> list:
    trace = []
    while parent[key] is not None:
        key, inputs = parent[key]
        trace.append(inputs)
    return trace[::-1]
