from __future__ import annotations

from dataclasses import dataclass

from .ast import Span


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    span: Span
    message: str
    code: str

    def format(self, filename: str = "<model>") -> str:
        return f"{filename}:{self.span.line}:{self.span.col}: {self.severity}[{self.code}]: {self.message}"

    def __str__(self):
        return self.format()


class ModelError(Exception):
    """Raised by the frontend with one or more diagnostics attached."""

    def __init__(self, diagnostics: list[Diagnostic]):
        assert diagnostics
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))

    @property
    def codes(self) -> list[str]:
        return [d.code for d in self.diagnostics]


def error(span: Span, code: str, message: str) -> Diagnostic:
    return Diagnostic("error", span, message, code)
