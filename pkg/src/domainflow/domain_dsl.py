"""Textual form of domain models.

Line-oriented blocks::

    domain conduit

    type article {
      title: String label "Article title"
      tags: set String label "Tags"
    }

    service article-store {
      kind builtin-store
      type article
    }

    activity show-articles {
      kind user-facing
      input alist: set article label "Article List"
      output selected: article label "Article selected"
      display alist
      gather selected
      constraint selected valueFrom alist
    }

``#`` starts a comment.  :func:`print_domain` emits the canonical form;
parsing it back yields a structurally equal model.
"""

from __future__ import annotations

import re

from .diagnostics import Diagnostic, DslError
from .domain import (
    ActivityDef,
    Constraint,
    DataTypeDef,
    DisplaySpec,
    DomainModel,
    FieldDef,
    ServiceBinding,
    validate_domain,
)
from .values import ValueType

_FIELD_RE = re.compile(
    r"^(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*:\s*(?P<set>set\s+)?(?P<type>[A-Za-z_][A-Za-z0-9_-]*)"
    r"(?:\s+label\s+\"(?P<label>[^\"]*)\")?$"
)
_HEADER_RE = re.compile(r"^(?P<kw>type|service|activity)\s+(?P<name>\S+)\s*\{$")
_CONSTRAINT_RE = re.compile(
    r"^constraint\s+(?P<target>\S+)\s+(?:(?P<vf>valueFrom)\s+(?P<source>\S+)|(?P<req>required))$"
)


def _strip_comment(line: str) -> str:
    # '#' starts a comment unless it sits inside a quoted label.
    quoted = False
    for i, ch in enumerate(line):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def _parse_field(text: str, line_no: int, diags: list[Diagnostic]) -> FieldDef | None:
    m = _FIELD_RE.match(text)
    if not m:
        diags.append(Diagnostic(f"bad field declaration: {text!r}", line=line_no))
        return None
    name = m.group("name")
    label = m.group("label")
    if label is None:
        label = name
    return FieldDef(name=name, label=label, type=ValueType(m.group("type"), bool(m.group("set"))))


def parse_domain(text: str) -> DomainModel:
    """Parse and validate a domain source; raises :class:`DslError` carrying
    positional diagnostics for syntax errors and validation failures."""
    diags: list[Diagnostic] = []
    lines = text.splitlines()

    domain_name: str | None = None
    types: list[DataTypeDef] = []
    services: list[ServiceBinding] = []
    activities: list[ActivityDef] = []

    block: str | None = None  # "type" | "service" | "activity"
    block_name = ""
    fields: list[FieldDef] = []
    config: dict = {}
    act: dict = {}

    def close_block(line_no: int) -> None:
        nonlocal block
        if block == "type":
            types.append(DataTypeDef(name=block_name, fields=tuple(fields)))
        elif block == "service":
            kind = config.pop("kind", "")
            services.append(ServiceBinding(name=block_name, kind=kind, config=dict(config)))
        elif block == "activity":
            spec = None
            if act["display"] or act["gather"] or act["constraints"] or act["kind"] == "user-facing":
                spec = DisplaySpec(
                    display_elements=tuple(act["display"]),
                    gather_elements=tuple(act["gather"]),
                    constraints=tuple(act["constraints"]),
                )
            activities.append(
                ActivityDef(
                    name=block_name,
                    kind=act["kind"],
                    inputs=tuple(act["inputs"]),
                    outputs=tuple(act["outputs"]),
                    service_ref=act["service"],
                    display_spec=spec,
                )
            )
        block = None

    for idx, raw in enumerate(lines, start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue

        if block is None:
            if line.startswith("domain "):
                if domain_name is not None:
                    diags.append(Diagnostic("duplicate domain header", line=idx))
                domain_name = line.split(None, 1)[1].strip()
                continue
            m = _HEADER_RE.match(line)
            if m:
                block = m.group("kw")
                block_name = m.group("name")
                fields, config, act = [], {}, {
                    "kind": "",
                    "service": None,
                    "inputs": [],
                    "outputs": [],
                    "display": [],
                    "gather": [],
                    "constraints": [],
                }
                continue
            diags.append(Diagnostic(f"unexpected line: {line!r}", line=idx))
            continue

        if line == "}":
            close_block(idx)
            continue

        if block == "type":
            f = _parse_field(line, idx, diags)
            if f is not None:
                fields.append(f)
        elif block == "service":
            parts = line.split(None, 1)
            if len(parts) != 2:
                diags.append(Diagnostic(f"bad service entry: {line!r}", line=idx))
                continue
            key, value = parts
            config[key] = value.strip().strip('"')
        elif block == "activity":
            if line.startswith("kind "):
                act["kind"] = line.split(None, 1)[1].strip()
            elif line.startswith("service "):
                act["service"] = line.split(None, 1)[1].strip()
            elif line.startswith("input "):
                f = _parse_field(line[len("input "):].strip(), idx, diags)
                if f is not None:
                    act["inputs"].append(f)
            elif line.startswith("output "):
                f = _parse_field(line[len("output "):].strip(), idx, diags)
                if f is not None:
                    act["outputs"].append(f)
            elif line.startswith("display "):
                act["display"].append(line.split(None, 1)[1].strip())
            elif line.startswith("gather "):
                act["gather"].append(line.split(None, 1)[1].strip())
            elif line.startswith("constraint "):
                m = _CONSTRAINT_RE.match(line)
                if not m:
                    diags.append(Diagnostic(f"bad constraint: {line!r}", line=idx))
                    continue
                kind = "valueFrom" if m.group("vf") else "required"
                act["constraints"].append(
                    Constraint(kind=kind, target=m.group("target"), source=m.group("source"))
                )
            else:
                diags.append(Diagnostic(f"unexpected activity entry: {line!r}", line=idx))

    if block is not None:
        diags.append(Diagnostic(f"unclosed {block} block {block_name!r}", line=len(lines)))
    if domain_name is None and not diags:
        diags.append(Diagnostic("empty domain"))

    if diags:
        raise DslError(diags)

    model = DomainModel(
        name=domain_name or "",
        types=tuple(types),
        services=tuple(services),
        activities=tuple(activities),
    )
    problems = validate_domain(model)
    if problems:
        raise DslError(problems)
    return model


def _print_field(f: FieldDef) -> str:
    return f'{f.name}: {f.type} label "{f.label}"'


def print_domain(d: DomainModel) -> str:
    """Canonical text for a domain; ``parse_domain`` round-trips it."""
    out: list[str] = [f"domain {d.name}", ""]
    for t in d.types:
        out.append(f"type {t.name} {{")
        for f in t.fields:
            out.append(f"  {_print_field(f)}")
        out.append("}")
        out.append("")
    for s in d.services:
        out.append(f"service {s.name} {{")
        out.append(f"  kind {s.kind}")
        for key, value in s.config.items():
            out.append(f"  {key} {value}")
        out.append("}")
        out.append("")
    for a in d.activities:
        out.append(f"activity {a.name} {{")
        out.append(f"  kind {a.kind}")
        if a.service_ref:
            out.append(f"  service {a.service_ref}")
        for f in a.inputs:
            out.append(f"  input {_print_field(f)}")
        for f in a.outputs:
            out.append(f"  output {_print_field(f)}")
        if a.display_spec:
            for name in a.display_spec.display_elements:
                out.append(f"  display {name}")
            for name in a.display_spec.gather_elements:
                out.append(f"  gather {name}")
            for c in a.display_spec.constraints:
                if c.kind == "valueFrom":
                    out.append(f"  constraint {c.target} valueFrom {c.source}")
                else:
                    out.append(f"  constraint {c.target} required")
        out.append("}")
        out.append("")
    while out and out[-1] == "":
        out.pop()
    return "\n".join(out) + "\n"
