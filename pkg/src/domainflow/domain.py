"""Domain models: libraries of data types, service bindings, and activities.

A domain is the unit of reuse: flows assemble its activities into behavior,
and the coordination layer derives client payloads from nothing but these
definitions.  Models are immutable after validation and safe to share across
threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .diagnostics import Diagnostic
from .values import ValueType, is_primitive

ACTIVITY_KINDS = ("service", "user-facing", "compute")
SERVICE_KINDS = (
    "builtin-store",
    "builtin-query",
    "builtin-delete",
    "external-http",
    "local-function",
)
CONSTRAINT_KINDS = ("valueFrom", "required")

# Names that may appear inside expressions (fields, variables, node ids) must
# lex as a single identifier token; definition names may also carry hyphens.
EXPR_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
DEF_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")


@dataclass(frozen=True)
class FieldDef:
    name: str
    label: str
    type: ValueType


@dataclass(frozen=True)
class DataTypeDef:
    name: str
    fields: tuple[FieldDef, ...]


@dataclass(frozen=True)
class ServiceBinding:
    name: str
    kind: str
    config: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Constraint:
    kind: str
    target: str
    source: str | None = None


@dataclass(frozen=True)
class DisplaySpec:
    display_elements: tuple[str, ...]
    gather_elements: tuple[str, ...]
    constraints: tuple[Constraint, ...]


@dataclass(frozen=True)
class ActivityDef:
    name: str
    kind: str
    inputs: tuple[FieldDef, ...]
    outputs: tuple[FieldDef, ...]
    service_ref: str | None = None
    display_spec: DisplaySpec | None = None

    def input(self, name: str) -> FieldDef | None:
        for f in self.inputs:
            if f.name == name:
                return f
        return None

    def output(self, name: str) -> FieldDef | None:
        for f in self.outputs:
            if f.name == name:
                return f
        return None


@dataclass(frozen=True)
class DomainModel:
    name: str
    types: tuple[DataTypeDef, ...]
    services: tuple[ServiceBinding, ...]
    activities: tuple[ActivityDef, ...]

    def type_def(self, name: str) -> DataTypeDef | None:
        for t in self.types:
            if t.name == name:
                return t
        return None

    def service(self, name: str) -> ServiceBinding | None:
        for s in self.services:
            if s.name == name:
                return s
        return None

    def activity(self, name: str) -> ActivityDef | None:
        for a in self.activities:
            if a.name == name:
                return a
        return None


def _check_fields(
    fields: tuple[FieldDef, ...], d: DomainModel, path: str, out: list[Diagnostic]
) -> None:
    seen: set[str] = set()
    for f in fields:
        fpath = f"{path}/{f.name}"
        if f.name in seen:
            out.append(Diagnostic(f"duplicate field {f.name!r}", path=fpath))
        seen.add(f.name)
        if not EXPR_NAME_RE.match(f.name):
            out.append(Diagnostic(f"field name {f.name!r} is not a plain identifier", path=fpath))
        if not f.label:
            out.append(Diagnostic(f"field {f.name!r} has an empty label", path=fpath))
        base = f.type.base
        if not is_primitive(base) and d.type_def(base) is None:
            out.append(Diagnostic(f"unresolved type {base}", path=fpath))


def _cycle_from(d: DomainModel, start: str) -> bool:
    # A type may not contain itself transitively, directly or through sets.
    stack, seen = [start], set()
    while stack:
        name = stack.pop()
        type_def = d.type_def(name)
        if type_def is None:
            continue
        for f in type_def.fields:
            base = f.type.base
            if is_primitive(base):
                continue
            if base == start:
                return True
            if base not in seen:
                seen.add(base)
                stack.append(base)
    return False


def validate_domain(d: DomainModel) -> list[Diagnostic]:
    """All internal-consistency checks; empty list means the domain is valid.

    Pure and order-stable: diagnostics follow declaration order.
    """
    out: list[Diagnostic] = []
    if not DEF_NAME_RE.match(d.name):
        out.append(Diagnostic(f"invalid domain name {d.name!r}", path=d.name))

    seen: set[str] = set()
    for group, names in (
        ("type", [t.name for t in d.types]),
        ("service", [s.name for s in d.services]),
        ("activity", [a.name for a in d.activities]),
    ):
        for name in names:
            if name in seen:
                out.append(Diagnostic(f"duplicate identifier {name!r}", path=f"{d.name}/{group}/{name}"))
            seen.add(name)
            if not DEF_NAME_RE.match(name):
                out.append(Diagnostic(f"invalid {group} name {name!r}", path=f"{d.name}/{group}/{name}"))

    for t in d.types:
        path = f"{d.name}/type/{t.name}"
        _check_fields(t.fields, d, path, out)
        for f in t.fields:
            if f.type.is_set and not is_primitive(f.type.base) and d.type_def(f.type.base) is None:
                continue  # already reported as unresolved
        if _cycle_from(d, t.name):
            out.append(Diagnostic(f"type {t.name!r} contains itself (cycle)", path=path))

    for s in d.services:
        path = f"{d.name}/service/{s.name}"
        if s.kind not in SERVICE_KINDS:
            out.append(Diagnostic(f"unknown service kind {s.kind!r}", path=path))
        if s.kind in ("builtin-store", "builtin-query", "builtin-delete"):
            stored = s.config.get("type")
            if not stored or d.type_def(stored) is None:
                out.append(Diagnostic(f"service {s.name!r} stores unknown type {stored!r}", path=path))
        if s.kind == "local-function" and not s.config.get("function"):
            out.append(Diagnostic(f"service {s.name!r} names no function", path=path))
        if s.kind == "external-http" and not s.config.get("url"):
            out.append(Diagnostic(f"service {s.name!r} has no url", path=path))

    for a in d.activities:
        path = f"{d.name}/activity/{a.name}"
        if a.kind not in ACTIVITY_KINDS:
            out.append(Diagnostic(f"unknown activity kind {a.kind!r}", path=path))
        _check_fields(a.inputs, d, f"{path}/input", out)
        _check_fields(a.outputs, d, f"{path}/output", out)
        overlap = {f.name for f in a.inputs} & {f.name for f in a.outputs}
        if overlap:
            out.append(Diagnostic(f"input/output names overlap: {sorted(overlap)}", path=path))

        if a.kind == "service":
            if a.service_ref is None:
                out.append(Diagnostic(f"service activity {a.name!r} names no service", path=path))
            elif d.service(a.service_ref) is None:
                out.append(Diagnostic(f"unresolved service {a.service_ref!r}", path=path))
        elif a.service_ref is not None:
            out.append(Diagnostic(f"{a.kind} activity {a.name!r} must not name a service", path=path))

        if a.kind == "user-facing":
            if a.display_spec is None:
                out.append(Diagnostic(f"user-facing activity {a.name!r} has no display spec", path=path))
            else:
                _check_display_spec(a, path, out)
        elif a.display_spec is not None:
            out.append(Diagnostic(f"{a.kind} activity {a.name!r} must not display or gather", path=path))

        if a.kind == "compute":
            # Compute activities relay values positionally (i-th output takes
            # the i-th input); the transformation itself lives in the flow's
            # binding expressions.
            if len(a.inputs) != len(a.outputs):
                out.append(Diagnostic(f"compute activity {a.name!r} needs matching input/output counts", path=path))
            else:
                for i, o in zip(a.inputs, a.outputs):
                    if i.type != o.type:
                        out.append(
                            Diagnostic(
                                f"compute activity {a.name!r}: input {i.name!r} and output {o.name!r} differ in type",
                                path=path,
                            )
                        )
    return out


def _check_display_spec(a: ActivityDef, path: str, out: list[Diagnostic]) -> None:
    spec = a.display_spec
    assert spec is not None
    input_names = {f.name for f in a.inputs}
    output_names = {f.name for f in a.outputs}
    for name in spec.display_elements:
        if name not in input_names:
            out.append(Diagnostic(f"displayed element {name!r} is not an input", path=path))
    for name in spec.gather_elements:
        if name not in output_names:
            out.append(Diagnostic(f"gathered element {name!r} is not an output", path=path))
    for c in spec.constraints:
        cpath = f"{path}/constraint/{c.target}"
        if c.kind not in CONSTRAINT_KINDS:
            out.append(Diagnostic(f"unknown constraint kind {c.kind!r}", path=cpath))
            continue
        if c.target not in spec.gather_elements:
            out.append(Diagnostic(f"constraint targets {c.target!r}, which is not gathered", path=cpath))
        if c.kind == "valueFrom":
            if c.source is None:
                out.append(Diagnostic("valueFrom constraint names no source", path=cpath))
            elif c.source not in spec.display_elements:
                out.append(Diagnostic(f"valueFrom source {c.source!r} is not displayed", path=cpath))
            else:
                src = a.input(c.source)
                if src is not None and not src.type.is_set:
                    out.append(Diagnostic(f"valueFrom source {c.source!r} is not set-valued", path=cpath))
        elif c.source is not None:
            out.append(Diagnostic("required constraint takes no source", path=cpath))
