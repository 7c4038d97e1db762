"""Diagnostics shared by the DSL parsers and the model validators."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    """One problem found while parsing or validating a model.

    ``path`` points at the offending element (``conduit/activity/get-articles``),
    ``line``/``col`` at the source position when one is known.
    """

    message: str
    line: int | None = None
    col: int | None = None
    path: str | None = None

    def __str__(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"line {self.line}")
            if self.col is not None:
                where.append(f"col {self.col}")
        prefix = ", ".join(where)
        at = f" [{self.path}]" if self.path else ""
        if prefix:
            return f"{prefix}: {self.message}{at}"
        return f"{self.message}{at}"


class DslError(Exception):
    """Raised when a DSL source cannot be turned into a valid model."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics) or "invalid source")
