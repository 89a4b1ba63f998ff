"""Canonical source rendering of a Model (inverse of ``parse``)."""

from __future__ import annotations

from .ast import Assign, Binary, For, If, Index, Lit, Model, Name, Unary, VarDecl

# higher binds tighter
_PREC = {"OR": 1, "XOR": 1, "AND": 2, "NOT": 3,
         "=": 4, "/=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
         "+": 5, "-": 5, "*": 6, "/": 6, "MOD": 6}
_UNARY_MINUS = 7
_ATOM = 8


def _prec(e) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary):
        return _PREC["NOT"] if e.op == "NOT" else _UNARY_MINUS
    if isinstance(e, Lit) and e.value < 0:
        return _UNARY_MINUS
    return _ATOM


def expr_str(e) -> str:
    if isinstance(e, Lit):
        if e.is_bool:
            return "TRUE" if e.value else "FALSE"
        return str(e.value)
    if isinstance(e, Name):
        return e.ident
    if isinstance(e, Index):
        return f"{e.ident}({expr_str(e.index)})"
    if isinstance(e, Unary):
        inner = expr_str(e.operand)
        if e.op == "NOT":
            if _prec(e.operand) < _PREC["NOT"]:
                inner = f"({inner})"
            return f"NOT {inner}"
        # "-" followed by a digit would fold into a literal when reparsed
        if _prec(e.operand) < _ATOM or isinstance(e.operand, Lit):
            inner = f"({inner})"
        return f"-{inner}"
    p = _PREC[e.op]
    left, right = expr_str(e.left), expr_str(e.right)
    lp, rp = _prec(e.left), _prec(e.right)
    comparison = p == 4
    if lp < p or (comparison and lp == p):
        left = f"({left})"
    if rp <= p:
        right = f"({right})"
    # NOT sits below the comparisons, so it must be wrapped as an operand of them
    return f"{left} {e.op} {right}"


def _init_str(v):
    if isinstance(v, tuple):
        return "[" + ", ".join(str(x) for x in v) + "]"
    return str(v)


def decl_str(d: VarDecl) -> str:
    s = f"{d.name} : {d.type}"
    if d.init is not None:
        s += f" := {_init_str(d.init)}"
    return s


def stmts_str(stmts, indent: int) -> list[str]:
    pad = "  " * indent
    lines = []
    for i, s in enumerate(stmts):
        sep = ";" if i < len(stmts) - 1 else ""
        if isinstance(s, Assign):
            target = s.target if s.index is None else f"{s.target}({expr_str(s.index)})"
            lines.append(f"{pad}{target} := {expr_str(s.value)}{sep}")
        elif isinstance(s, If):
            for j, (cond, body) in enumerate(s.branches):
                kw = "IF" if j == 0 else "ELSIF"
                lines.append(f"{pad}{kw} {expr_str(cond)} THEN")
                lines += stmts_str(body, indent + 1)
            if s.orelse is not None:
                lines.append(f"{pad}ELSE")
                lines += stmts_str(s.orelse, indent + 1)
            lines.append(f"{pad}END{sep}")
        elif isinstance(s, For):
            lines.append(f"{pad}FOR {s.var} FROM {expr_str(s.lo)} TO {expr_str(s.hi)} DO")
            lines += stmts_str(s.body, indent + 1)
            lines.append(f"{pad}END{sep}")
        else:
            raise TypeError(f"not a statement: {s!r}")
    return lines


def print_model(model: Model) -> str:
    out = [f"MACHINE {model.name}"]
    if model.constants:
        out.append("CONSTANTS")
        out += [f"  {n} = {v};" for n, v in model.constants]
    for title, decls in (("INPUTS", model.inputs), ("OUTPUTS", model.outputs),
                         ("STATE", model.state)):
        if decls:
            out.append(title)
            out += [f"  {decl_str(d)};" for d in decls]
    if model.invariant is not None:
        out.append("INVARIANT")
        out.append(f"  {expr_str(model.invariant)}")
    out.append("OPERATION user_logic BEGIN")
    out += stmts_str(model.body, 1)
    out.append("END")
    return "\n".join(out) + "\n"
