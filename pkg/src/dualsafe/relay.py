"""Relay netlists and their translation to a B0-lite model.

Netlist format::

    # seal-in circuit
    INPUT start, stop;
    COIL K = (start | K) & !stop;
    OUTPUT motor = K;

``&`` is a series connection, ``|`` a parallel one, a bare name a normally
open contact and ``!name`` a normally closed one. Coils update
synchronously: every coil rung reads the coil states of the previous
cycle, outputs read the freshly computed ones.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .frontend import ast as A
from .frontend.diagnostics import ModelError, error


@dataclass(frozen=True)
class NO:
    ref: str


@dataclass(frozen=True)
class NC:
    ref: str


@dataclass(frozen=True)
class Series:
    items: tuple


@dataclass(frozen=True)
class Parallel:
    items: tuple


@dataclass(frozen=True)
class Rung:
    kind: str          # COIL or OUTPUT
    target: str
    network: object
    line: int = 0


@dataclass(frozen=True)
class Schematic:
    inputs: tuple
    coils: tuple       # coil names in rung order
    outputs: tuple
    rungs: tuple


_TOK = re.compile(r"\s*(?:(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[&|!(),;=])|(?P<bad>\S))")
_KEYWORDS = {"INPUT", "COIL", "OUTPUT"}


def _tokens(source: str):
    out = []
    for lineno, line in enumerate(source.splitlines(), 1):
        line = line.split("#", 1)[0]
        pos = 0
        while True:
            m = _TOK.match(line, pos)
            if not m or m.end() == pos:
                break
            pos = m.end()
            col = m.start(m.lastgroup) + 1
            out.append((m.lastgroup, m.group(m.lastgroup), A.Span(lineno, col)))
    return out


class _Parser:
    def __init__(self, source: str):
        self.toks = _tokens(source)
        self.i = 0
        self.diags = []

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("eof", "", self._end())

    def _end(self):
        return self.toks[-1][2] if self.toks else A.Span(1, 1)

    def take(self):
        t = self.peek()
        self.i += 1
        return t

    def expect(self, value):
        t = self.take()
        if t[1] != value:
            raise ModelError([error(t[2], "syntax", f"expected '{value}', found '{t[1] or 'end'}'")])
        return t

    def ident(self):
        t = self.take()
        if t[0] != "id" or t[1] in _KEYWORDS:
            raise ModelError([error(t[2], "syntax", f"expected a name, found '{t[1] or 'end'}'")])
        return t

    def parse(self):
        inputs, rungs = [], []
        while self.peek()[0] != "eof":
            kind, word, span = self.take()
            if kind == "bad":
                raise ModelError([error(span, "syntax", f"unexpected character '{word}'")])
            if word == "INPUT":
                inputs.append(self.ident())
                while self.peek()[1] == ",":
                    self.take()
                    inputs.append(self.ident())
            elif word in ("COIL", "OUTPUT"):
                name = self.ident()
                self.expect("=")
                rungs.append((word, name, self.parallel()))
            else:
                raise ModelError([error(span, "syntax",
                                        f"expected INPUT, COIL or OUTPUT, found '{word}'")])
            self.expect(";")
        return inputs, rungs

    def parallel(self):
        items = [self.series()]
        while self.peek()[1] == "|":
            self.take()
            items.append(self.series())
        return items[0] if len(items) == 1 else Parallel(tuple(items))

    def series(self):
        items = [self.contact()]
        while self.peek()[1] == "&":
            self.take()
            items.append(self.contact())
        return items[0] if len(items) == 1 else Series(tuple(items))

    def contact(self):
        t = self.peek()
        if t[1] == "(":
            self.take()
            net = self.parallel()
            self.expect(")")
            return net
        if t[1] == "!":
            self.take()
            _, name, span = self.ident()
            return (NC(name), span)
        _, name, span = self.ident()
        return (NO(name), span)


def _refs(net):
    if isinstance(net, tuple):
        yield net
    else:
        for it in net.items:
            yield from _refs(it)


def _strip(net):
    if isinstance(net, tuple):
        return net[0]
    return type(net)(tuple(_strip(i) for i in net.items))


def parse_schematic(source: str) -> Schematic:
    """Parse a netlist; raises ModelError with line-numbered diagnostics."""
    p = _Parser(source)
    inputs, rungs = p.parse()
    diags = []
    names = {}
    for _, name, span in inputs:
        if name in names:
            diags.append(error(span, "duplicate", f"'{name}' declared twice"))
        names[name] = "input"
    targets = {}
    for kind, (_, name, span), _ in rungs:
        if name in targets or name in names:
            diags.append(error(span, "duplicate-target", f"'{name}' is the target of two rungs"
                               if name in targets else f"'{name}' is already an input"))
            continue
        targets[name] = kind
    coils = {n for n, k in targets.items() if k == "COIL"}
    for _, _, net in rungs:
        for contact, span in _refs(net):
            if contact.ref not in names and contact.ref not in coils:
                what = "an output" if contact.ref in targets else "undeclared"
                diags.append(error(span, "unknown-reference",
                                   f"contact '{contact.ref}' refers to {what} name"))
    if diags:
        raise ModelError(diags)
    built = tuple(Rung(k, t[1], _strip(net), t[2].line) for k, t, net in rungs)
    return Schematic(tuple(n for _, n, _ in inputs),
                     tuple(r.target for r in built if r.kind == "COIL"),
                     tuple(r.target for r in built if r.kind == "OUTPUT"), built)


def _expr(net, rename: dict):
    if isinstance(net, NO):
        return A.Name(rename.get(net.ref, net.ref))
    if isinstance(net, NC):
        return A.Unary("NOT", A.Name(rename.get(net.ref, net.ref)))
    op = "AND" if isinstance(net, Series) else "OR"
    out = _expr(net.items[0], rename)
    for it in net.items[1:]:
        out = A.Binary(op, out, _expr(it, rename))
    return out


def translate(sch: Schematic, name: str = "Relay") -> A.Model:
    """Synchronous translation: coil rungs read snapshots of the previous coil states."""
    taken = set(sch.inputs) | set(sch.coils) | set(sch.outputs)
    read_by_coils = {c.ref for r in sch.rungs if r.kind == "COIL" for c in _refs_plain(r.network)}
    snap = {}
    for c in sch.coils:
        if c in read_by_coils:
            s = f"pre_{c}"
            while s in taken:
                s = "_" + s
            taken.add(s)
            snap[c] = s
    body = [A.Assign(snap[c], None, A.Name(c)) for c in sch.coils if c in snap]
    body += [A.Assign(r.target, None, _expr(r.network, snap))
             for r in sch.rungs if r.kind == "COIL"]
    body += [A.Assign(r.target, None, _expr(r.network, {}))
             for r in sch.rungs if r.kind == "OUTPUT"]
    return A.Model(
        name,
        inputs=tuple(A.VarDecl(n, A.BOOL) for n in sch.inputs),
        outputs=tuple(A.VarDecl(n, A.BOOL) for n in sch.outputs),
        state=tuple(A.VarDecl(n, A.BOOL, 0) for n in sch.coils)
        + tuple(A.VarDecl(snap[c], A.BOOL, 0) for c in sch.coils if c in snap),
        body=tuple(body),
    )


def _refs_plain(net):
    if isinstance(net, (NO, NC)):
        yield net
    else:
        for it in net.items:
            yield from _refs_plain(it)
