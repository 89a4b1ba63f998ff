"""Random model generation for differential fuzzing, plus the interlocking benchmark.

Generated models are well typed and can never trap on a fault-free run:
every integer expression carries an exact static interval kept well inside
the 64-bit range, divisors are nonzero by construction or guarded by an
``IF d /= 0`` test, array indices are in bounds by construction or guarded,
and values stored into ranged variables are either statically in range,
wrapped into range with MOD, or guarded by a range test.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .frontend import ast as A
from .frontend.typecheck import binop_interval

LIMIT = 2**62                      # magnitude bound on every static interval
MAX_DEPTH = 4                      # keeps both back ends far from their stack/register limits

_INT_RANGES = ((0, 1), (0, 7), (-50, 50), (-1000, 1000), (0, 255), (-100000, 100000),
               (A.INT32_MIN, A.INT32_MAX))


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    budget: int = 12               # statements, nested ones included
    n_inputs: int = 3
    n_outputs: int = 3
    n_state: int = 3
    weights: dict = field(default_factory=lambda: {
        "assign": 6, "index_assign": 2, "if": 3, "for": 2, "copy": 1, "guarded": 2})
    bool_ratio: float = 0.5        # share of BOOL among declared variables
    array_ratio: float = 0.3


@dataclass
class _Var:
    name: str
    kind: str        # input | output | state | loop
    is_bool: bool
    lo: int = 0
    hi: int = 1
    length: int = 0  # 0 for scalars


class _Gen:
    def __init__(self, cfg: GenConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.vars: list = []
        self.loops: list = []
        self.budget = cfg.budget
        self.loop_names = 0

    # -- declarations ----------------------------------------------------------
    def decl(self, name: str, kind: str, force_bool: bool = False) -> A.VarDecl:
        r = self.rng
        is_bool = force_bool or r.random() < self.cfg.bool_ratio
        length = r.randint(1, 6) if r.random() < self.cfg.array_ratio else 0
        lo, hi = (0, 1) if is_bool else r.choice(_INT_RANGES)
        self.vars.append(_Var(name, kind, is_bool, lo, hi, length))
        elem = A.BOOL if is_bool else A.IntType(lo, hi)
        ty = A.ArrayType(length, elem) if length else elem
        init = None
        if kind == "state":
            vals = tuple(r.randint(max(lo, -5), min(hi, 5)) for _ in range(max(length, 1)))
            init = vals if length else vals[0]
        return A.VarDecl(name, ty, init)

    # -- expressions -----------------------------------------------------------
    def readable(self, is_bool: bool, scalar: bool) -> list:
        return [v for v in self.vars + self.loops
                if v.is_bool == is_bool and (not scalar or not v.length)]

    def safe_index(self, length: int, depth: int) -> A.Expr:
        r = self.rng
        fits = [v for v in self.loops if 0 <= v.lo and v.hi < length]
        roll = r.random()
        if fits and roll < 0.4:
            return A.Name(r.choice(fits).name)
        if roll < 0.7 or depth >= MAX_DEPTH - 1:
            return A.Lit(r.randrange(length))
        e, _, _ = self.int_expr(depth + 2)
        n = A.Lit(length)
        return A.Binary("MOD", A.Binary("+", A.Binary("MOD", e, n), n), n)

    def leaf(self, is_bool: bool, depth: int):
        r = self.rng
        cands = self.readable(is_bool, scalar=False)
        if cands and r.random() < 0.75:
            v = r.choice(cands)
            e = A.Index(v.name, self.safe_index(v.length, depth)) if v.length else A.Name(v.name)
            return e, v.lo, v.hi
        if is_bool:
            b = r.random() < 0.5
            return A.Lit(int(b), True), int(b), int(b)
        c = r.choice((r.randint(-9, 9), r.randint(-1000, 1000), r.randint(-2**20, 2**20)))
        return A.Lit(c), c, c

    def int_expr(self, depth: int = 0):
        r = self.rng
        if depth >= MAX_DEPTH or r.random() < 0.35:
            return self.leaf(False, depth)
        op = r.choice(("+", "-", "*", "/", "MOD", "neg", "+", "-"))
        if op == "neg":
            e, lo, hi = self.int_expr(depth + 1)
            return A.Unary("-", e), -hi, -lo
        left, llo, lhi = self.int_expr(depth + 1)
        if op in ("/", "MOD"):
            right, rlo, rhi = self.nonzero_divisor(depth + 1)
        else:
            right, rlo, rhi = self.int_expr(depth + 1)
        lo, hi = binop_interval(op, (llo, lhi), (rlo, rhi))
        if max(abs(lo), abs(hi)) > LIMIT:
            return left, llo, lhi
        return A.Binary(op, left, right), lo, hi

    def nonzero_divisor(self, depth: int):
        """A divisor whose static interval excludes zero."""
        r = self.rng
        if r.random() < 0.5 or depth >= MAX_DEPTH:
            c = r.choice([x for x in range(-9, 10) if x])
            return A.Lit(c), c, c
        e, _, _ = self.int_expr(depth + 1)
        k = r.randint(2, 9)
        # (e MOD k) lies in [-(k-1), k-1], so adding k keeps it in [1, 2k-1]
        return A.Binary("+", A.Binary("MOD", e, A.Lit(k)), A.Lit(k)), 1, 2 * k - 1

    def bool_expr(self, depth: int = 0) -> A.Expr:
        r = self.rng
        if depth >= MAX_DEPTH or r.random() < 0.3:
            return self.leaf(True, depth)[0]
        roll = r.random()
        if roll < 0.15:
            return A.Unary("NOT", self.bool_expr(depth + 1))
        if roll < 0.55:
            return A.Binary(r.choice(A.BOOL_OPS), self.bool_expr(depth + 1),
                            self.bool_expr(depth + 1))
        if roll < 0.65:
            return A.Binary(r.choice(("=", "/=")), self.bool_expr(depth + 1),
                            self.bool_expr(depth + 1))
        return A.Binary(r.choice(A.CMP_OPS), self.int_expr(depth + 1)[0],
                        self.int_expr(depth + 1)[0])

    def value_for(self, v: _Var, depth: int = 0):
        """Expression assignable to ``v``; returns (expr, guard or None)."""
        if v.is_bool:
            return self.bool_expr(depth), None
        return self.fit(v, *self.int_expr(depth))

    def fit(self, v: _Var, e, lo: int, hi: int):
        """Bring ``e`` into the range of ``v``: as is, wrapped with MOD, or behind a guard."""
        if v.lo <= lo and hi <= v.hi:
            return e, None
        n = v.hi - v.lo + 1
        if n <= A.INT32_MAX and self.rng.random() < 0.5:
            wrapped = A.Binary("MOD", A.Binary("+", A.Binary("MOD", e, A.Lit(n)), A.Lit(n)),
                               A.Lit(n))
            return (A.Binary("+", A.Lit(v.lo), wrapped) if v.lo else wrapped), None
        guard = A.Binary("AND", A.Binary(">=", e, A.Lit(v.lo)), A.Binary("<=", e, A.Lit(v.hi)))
        return e, guard

    # -- statements --------------------------------------------------------------
    def writable(self, scalar=None) -> list:
        return [v for v in self.vars if v.kind in ("output", "state")
                and (scalar is None or (v.length == 0) == scalar)]

    def stmts(self, depth: int = 0, limit: int = 0) -> list:
        out = []
        count = self.rng.randint(1, limit) if limit else self.budget
        while self.budget > 0 and len(out) < count:
            out.append(self.stmt(depth))
        return out

    def stmt(self, depth: int):
        r = self.rng
        self.budget -= 1
        w = dict(self.cfg.weights)
        if depth >= 2:
            w["if"] = w["for"] = 0
        if not self.writable(scalar=False):
            w["index_assign"] = w["copy"] = 0
        if not self.writable(scalar=True):
            w["assign"] = w["guarded"] = 0
        kind = r.choices(list(w), weights=list(w.values()))[0]
        return getattr(self, "s_" + kind)(depth)

    def _guarded(self, target, index, value, guard):
        s = A.Assign(target, index, value)
        return A.If(((guard, (s,)),)) if guard is not None else s

    def s_assign(self, depth):
        v = self.rng.choice(self.writable(scalar=True))
        value, guard = self.value_for(v)
        return self._guarded(v.name, None, value, guard)

    def s_index_assign(self, depth):
        return self.index_assign()

    def index_assign(self):
        v = self.rng.choice(self.writable(scalar=False))
        value, guard = self.value_for(v, 1)
        return self._guarded(v.name, self.safe_index(v.length, 1), value, guard)

    def s_copy(self, depth):
        r = self.rng
        dst = r.choice(self.writable(scalar=False))
        same = [v for v in self.vars if v.length == dst.length and v.is_bool == dst.is_bool
                and v.lo >= dst.lo and v.hi <= dst.hi and v is not dst]
        if not same:
            return self.index_assign()
        return A.Assign(dst.name, None, A.Name(r.choice(same).name))

    def s_guarded(self, depth):
        """Division by a possibly-zero variable, or an unchecked index, behind an IF."""
        r = self.rng
        ints = [v for v in self.readable(False, scalar=True) if v.lo <= 0 <= v.hi]
        arrays = self.writable(scalar=False)
        if ints and (not arrays or r.random() < 0.6):
            d = r.choice(ints)
            v = r.choice(self.writable(scalar=True))
            e, elo, ehi = self.int_expr(2)
            op = r.choice(("/", "MOD"))
            q = A.Binary(op, e, A.Name(d.name))
            qlo, qhi = binop_interval(op, (elo, ehi), (d.lo, d.hi))
            if v.is_bool:
                inner = A.Assign(v.name, None, A.Binary(">", q, A.Lit(0)))
            else:
                value, guard = self.fit(v, q, qlo, qhi)
                inner = self._guarded(v.name, None, value, guard)
            return A.If(((A.Binary("/=", A.Name(d.name), A.Lit(0)), (inner,)),))
        if arrays:
            a = r.choice(arrays)
            e, _, _ = self.int_expr(2)
            guard = A.Binary("AND", A.Binary(">=", e, A.Lit(0)),
                             A.Binary("<", e, A.Lit(a.length)))
            value, g2 = self.value_for(a, 2)
            if g2 is not None:
                guard = A.Binary("AND", guard, g2)
            return A.If(((guard, (A.Assign(a.name, e, value),)),))
        return self.s_assign(depth)

    def s_if(self, depth):
        r = self.rng
        branches = [(self.bool_expr(1), tuple(self.stmts(depth + 1, 3)))]
        while r.random() < 0.3:
            branches.append((self.bool_expr(1), tuple(self.stmts(depth + 1, 2))))
        orelse = tuple(self.stmts(depth + 1, 2)) if r.random() < 0.5 else None
        return A.If(tuple(branches), orelse)

    def s_for(self, depth):
        r = self.rng
        name = f"i{self.loop_names}"
        self.loop_names += 1
        lo = r.randint(-2, 3)
        trips = r.choice((0, 1, 2, 3, 5, 8, 9, 12))
        hi = lo + trips - 1
        self.loops.append(_Var(name, "loop", False, min(lo, hi), max(lo, hi)))
        body = tuple(self.stmts(depth + 1, 3))
        self.loops.pop()
        return A.For(name, A.Lit(lo), A.Lit(hi), body)


def gen_program(cfg: GenConfig) -> A.Model:
    """A random well-typed, trap-free model; the same config gives the same model."""
    g = _Gen(cfg)
    inputs = tuple(g.decl(f"x{i}", "input") for i in range(cfg.n_inputs))
    outputs = tuple(g.decl(f"y{i}", "output", force_bool=(i == 0))
                    for i in range(max(cfg.n_outputs, 1)))
    state = tuple(g.decl(f"s{i}", "state") for i in range(cfg.n_state))
    body = tuple(g.stmts()) if cfg.budget > 0 else ()
    return A.Model(f"Gen{cfg.seed}", inputs, outputs, state, body=body)


def random_inputs(tm, rng: random.Random) -> dict:
    """One input vector drawn uniformly from the declared types (edges favoured)."""
    out = {}
    for s in tm.inputs:
        def draw():
            if rng.random() < 0.2:
                return rng.choice((s.lo, s.hi))
            return rng.randint(s.lo, s.hi)
        out[s.name] = [draw() for _ in range(s.length)] if s.is_array else draw()
    return out


# -- interlocking benchmark ---------------------------------------------------------

BENCH_INPUTS = 64
BENCH_OUTPUTS = 8
BLOCK = 64


def bench_model(n: int, seed: int = 0) -> A.Model:
    """``n`` Boolean equations over 64 inputs and ``n`` state relays.

    Equations come in blocks of 64 templates executed by one FOR loop, each
    template a small AND/OR/NOT network of inputs and relay states; the tail
    that does not fill a block is written out directly.
    """
    if n < 1:
        raise ValueError("the benchmark needs at least one equation")
    rng = random.Random(seed)
    blocks, tail = divmod(n, BLOCK)

    def contact(idx_expr):
        e = A.Index("s", idx_expr) if rng.random() < 0.5 else \
            A.Index("x", A.Lit(rng.randrange(BENCH_INPUTS)))
        return A.Unary("NOT", e) if rng.random() < 0.3 else e

    def network(idx):
        a, b, c = contact(idx()), contact(idx()), contact(idx())
        return A.Binary("OR", A.Binary("AND", a, b), c) if rng.random() < 0.5 else \
            A.Binary("AND", A.Binary("OR", a, b), c)

    body = []
    if blocks:
        base = A.Binary("*", A.Name("b"), A.Lit(BLOCK))
        templates = []
        for j in range(BLOCK):
            def idx():
                return A.Binary("+", base, A.Lit(rng.randrange(BLOCK)))
            templates.append(A.Assign("s", A.Binary("+", base, A.Lit(j)), network(idx)))
        body.append(A.For("b", A.Lit(0), A.Lit(blocks - 1), tuple(templates)))
    for j in range(blocks * BLOCK, n):
        body.append(A.Assign("s", A.Lit(j), network(lambda: A.Lit(rng.randrange(n)))))
    for k in range(BENCH_OUTPUTS):
        body.append(A.Assign("q", A.Lit(k), A.Index("s", A.Lit(rng.randrange(n)))))
    return A.Model(
        "Interlocking",
        inputs=(A.VarDecl("x", A.ArrayType(BENCH_INPUTS, A.BOOL)),),
        outputs=(A.VarDecl("q", A.ArrayType(BENCH_OUTPUTS, A.BOOL)),),
        state=(A.VarDecl("s", A.ArrayType(n, A.BOOL), 0),),
        body=tuple(body),
    )
