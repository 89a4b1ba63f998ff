"""B0-lite frontend: parsing, typing, cost bound, reference semantics."""

from .ast import Model, VarDecl
from .complexity import CycleBound, complexity_check, instruction_budget
from .diagnostics import Diagnostic, ModelError
from .exhaustive import InvariantReport, check_exhaustive
from .interp import Interpreter, Trap, check_inputs, initial_state, run_trace
from .parser import parse
from .printer import print_model
from .typecheck import TypedModel, typecheck


def compile_source(source: str) -> TypedModel:
    """parse + typecheck; raises ModelError."""
    return typecheck(parse(source))


__all__ = [
    "Model", "VarDecl", "CycleBound", "complexity_check", "instruction_budget", "Diagnostic", "ModelError",
    "InvariantReport", "check_exhaustive", "Interpreter", "Trap", "check_inputs",
    "initial_state", "run_trace", "parse", "print_model", "TypedModel", "typecheck",
    "compile_source",
]
