"""The coordination layer: turns activity metadata into client-facing
interaction payloads, validates what comes back, and owns the wire format.

Payloads carry only *what* to display and gather, never *how*: no HTML, CSS,
or any other rendering markup.  They are derived from the activity and its
domain alone, so two flows sharing an activity produce identical descriptor
sections, and a domain change propagates to every client with no client
change.

Wire format (canonical encoding):

- UTF-8 JSON, two-space-free ``indent=1`` layout, one trailing newline.
- Top-level keys in fixed order: ``instanceId``, ``displayElements``,
  ``gatherElements``, ``constraints``, ``value`` (responses:
  ``instanceId``, ``response``).
- Element descriptors carry ``name``, ``label``, ``set``, then either
  ``type`` (a primitive name) or ``subElements``.  ``set`` defaults to
  false when absent on decode.
- Constraints encode as ``{"name": target, "valueFrom": source}`` or
  ``{"name": target, "required": true}``.
- ``value`` and ``response`` are lists of single-key objects, in element
  order; decode also accepts a plain object.
- Unknown top-level keys are ignored on decode, which is what lets old
  clients survive server evolution.

A gather element whose value must come from a displayed set (``valueFrom``)
is typed ``String`` on the wire: the client hands back the chosen member
verbatim, and the server validates it by membership, not by scalar type.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .domain import ActivityDef, Constraint, DomainModel, FieldDef
from .values import RECORD_ID_KEY, Value, is_primitive

_MARKUP_RE = re.compile(r"<[A-Za-z]")


class WireError(Exception):
    """Malformed wire document."""


class PayloadError(Exception):
    """An interaction payload could not be built (missing input value)."""


@dataclass(frozen=True)
class ElementDescriptor:
    name: str
    label: str
    set: bool = False
    type: str | None = None
    sub_elements: tuple["ElementDescriptor", ...] | None = None


@dataclass(frozen=True)
class InteractionPayload:
    instance_id: int
    display_elements: tuple[ElementDescriptor, ...]
    gather_elements: tuple[ElementDescriptor, ...]
    constraints: tuple[Constraint, ...]
    value: dict = field(default_factory=dict)  # display-element name -> JSON value


@dataclass(frozen=True)
class InteractionResponse:
    instance_id: int
    response: dict = field(default_factory=dict)  # gather-element name -> JSON value


@dataclass(frozen=True)
class Violation:
    constraint: str
    message: str


# ------------------------------------------------------------ descriptors

def _descriptor(f: FieldDef, domain: DomainModel, value_from: bool) -> ElementDescriptor:
    if value_from:
        # Selection elements are opaque picks out of a displayed set.
        return ElementDescriptor(name=f.name, label=f.label, set=False, type="String")
    base = f.type.base
    if is_primitive(base):
        return ElementDescriptor(name=f.name, label=f.label, set=f.type.is_set, type=base)
    type_def = domain.type_def(base)
    if type_def is None:
        raise PayloadError(f"unknown record type {base!r}")
    subs = tuple(_descriptor(sub, domain, False) for sub in type_def.fields)
    return ElementDescriptor(name=f.name, label=f.label, set=f.type.is_set, sub_elements=subs)


def build_payload(
    instance_id: int,
    activity: ActivityDef,
    domain: DomainModel,
    inputs: dict[str, Value],
) -> InteractionPayload:
    """Serialize a user-facing activity's state for the client coordinator.

    Descriptors are derived mechanically from the activity's display spec and
    the domain's data-type definitions; values come from the activity's
    resolved inputs.
    """
    spec = activity.display_spec
    if spec is None:
        raise PayloadError(f"activity {activity.name!r} is not user-facing")
    value_from_targets = {c.target for c in spec.constraints if c.kind == "valueFrom"}

    display = []
    value: dict = {}
    for name in spec.display_elements:
        f = activity.input(name)
        if f is None:
            raise PayloadError(f"displayed element {name!r} is not an input")
        if name not in inputs:
            raise PayloadError(f"no value for displayed element {name!r}")
        display.append(_descriptor(f, domain, False))
        value[name] = inputs[name]

    gather = []
    for name in spec.gather_elements:
        f = activity.output(name)
        if f is None:
            raise PayloadError(f"gathered element {name!r} is not an output")
        gather.append(_descriptor(f, domain, name in value_from_targets))

    payload = InteractionPayload(
        instance_id=instance_id,
        display_elements=tuple(display),
        gather_elements=tuple(gather),
        constraints=tuple(spec.constraints),
        value=value,
    )
    problems = markup_violations(payload)
    if problems:
        raise PayloadError("; ".join(problems))
    return payload


def _descriptor_strings(d: ElementDescriptor) -> list[str]:
    out = [d.name, d.label]
    for sub in d.sub_elements or ():
        out.extend(_descriptor_strings(sub))
    return out


def markup_violations(p: InteractionPayload) -> list[str]:
    """Strings originating from descriptors must never smuggle markup."""
    out = []
    for d in list(p.display_elements) + list(p.gather_elements):
        for text in _descriptor_strings(d):
            if _MARKUP_RE.search(text):
                out.append(f"descriptor string {text!r} contains markup")
    return out


# -------------------------------------------------------------- validation

def _json_conforms(value, d: ElementDescriptor) -> bool:
    if d.set:
        scalar = ElementDescriptor(d.name, d.label, False, d.type, d.sub_elements)
        return isinstance(value, list) and all(_json_conforms(v, scalar) for v in value)
    if d.sub_elements is not None:
        if not isinstance(value, dict):
            return False
        names = {sub.name for sub in d.sub_elements}
        if set(value.keys()) - names - {RECORD_ID_KEY}:
            return False
        return all(sub.name in value and _json_conforms(value[sub.name], sub) for sub in d.sub_elements)
    if d.type in ("String", "Image", "Markdown"):
        return isinstance(value, str)
    if d.type == "Boolean":
        return isinstance(value, bool)
    if d.type == "Integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if d.type == "Float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return False


def validate_response(p: InteractionPayload, r: InteractionResponse) -> list[Violation]:
    """Check a client response against the payload it answers; the server
    never trusts clients to have enforced constraints locally."""
    out: list[Violation] = []
    if r.instance_id != p.instance_id:
        out.append(Violation("instanceId", "response targets a different instance"))
        return out

    gather_by_name = {d.name: d for d in p.gather_elements}
    value_from = {c.target: c for c in p.constraints if c.kind == "valueFrom"}

    for name in r.response:
        if name not in gather_by_name:
            out.append(Violation(name, f"{name!r} is not a gathered element"))

    for c in p.constraints:
        if c.kind == "required" and r.response.get(c.target) is None:
            out.append(Violation(c.target, f"{c.target!r} is required"))

    for name, value in r.response.items():
        d = gather_by_name.get(name)
        if d is None or value is None:
            continue
        c = value_from.get(name)
        if c is not None:
            members = p.value.get(c.source or "", [])
            if not isinstance(members, list) or not any(value == m for m in members):
                out.append(Violation(name, f"{name!r} must be a value from {c.source!r}"))
        elif not _json_conforms(value, d):
            out.append(Violation(name, f"{name!r} does not fit its declared shape"))
    return out


# ------------------------------------------------------------- wire codec

def _encode_descriptor(d: ElementDescriptor) -> dict:
    doc: dict = {"name": d.name, "label": d.label, "set": d.set}
    if d.sub_elements is not None:
        doc["subElements"] = [_encode_descriptor(sub) for sub in d.sub_elements]
    else:
        doc["type"] = d.type
    return doc


def _encode_constraint(c: Constraint) -> dict:
    if c.kind == "valueFrom":
        return {"name": c.target, "valueFrom": c.source}
    return {"name": c.target, "required": True}


def payload_document(p: InteractionPayload) -> dict:
    """Wire document with keys in the canonical order."""
    return {
        "instanceId": p.instance_id,
        "displayElements": [_encode_descriptor(d) for d in p.display_elements],
        "gatherElements": [_encode_descriptor(d) for d in p.gather_elements],
        "constraints": [_encode_constraint(c) for c in p.constraints],
        "value": [{d.name: p.value[d.name]} for d in p.display_elements],
    }


def response_document(r: InteractionResponse) -> dict:
    return {
        "instanceId": r.instance_id,
        "response": [{name: value} for name, value in r.response.items()],
    }


def canonical_bytes(doc: dict) -> bytes:
    return (json.dumps(doc, indent=1, ensure_ascii=False) + "\n").encode("utf-8")


def encode(message: InteractionPayload | InteractionResponse) -> bytes:
    if isinstance(message, InteractionResponse):
        return canonical_bytes(response_document(message))
    return canonical_bytes(payload_document(message))


def _decode_descriptor(doc) -> ElementDescriptor:
    if not isinstance(doc, dict) or "name" not in doc:
        raise WireError("element descriptor needs a name")
    name = doc["name"]
    label = doc.get("label", name)
    is_set = bool(doc.get("set", False))
    subs = doc.get("subElements")
    if subs is not None:
        return ElementDescriptor(
            name=name, label=label, set=is_set,
            sub_elements=tuple(_decode_descriptor(s) for s in subs),
        )
    raw = doc.get("type")
    if not isinstance(raw, str):
        raise WireError(f"element {name!r} needs a type or subElements")
    folded = next((p for p in ("String", "Boolean", "Integer", "Float", "Image", "Markdown")
                   if p.lower() == raw.lower()), None)
    if folded is None:
        raise WireError(f"unknown primitive {raw!r}")
    return ElementDescriptor(name=name, label=label, set=is_set, type=folded)


def _decode_constraint(doc) -> Constraint:
    if not isinstance(doc, dict) or "name" not in doc:
        raise WireError("constraint needs a name")
    if "valueFrom" in doc:
        return Constraint(kind="valueFrom", target=doc["name"], source=doc["valueFrom"])
    if doc.get("required"):
        return Constraint(kind="required", target=doc["name"])
    raise WireError(f"constraint on {doc['name']!r} has no known kind")


def _decode_single_key_list(data, what: str) -> dict:
    if isinstance(data, dict):
        return dict(data)
    out: dict = {}
    if not isinstance(data, list):
        raise WireError(f"{what} must be a list of single-key objects")
    for entry in data:
        if not isinstance(entry, dict) or len(entry) != 1:
            raise WireError(f"{what} entries must have exactly one key")
        out.update(entry)
    return out


def decode(data: bytes | str) -> InteractionPayload | InteractionResponse:
    """Decode a wire document, dispatching on its keys.  Unknown top-level
    keys are dropped; a missing ``instanceId`` is an error."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as err:
        raise WireError(f"malformed document: {err}") from err
    if not isinstance(doc, dict):
        raise WireError("document root must be an object")
    if "instanceId" not in doc:
        raise WireError("missing instanceId")
    instance_id = doc["instanceId"]
    if not isinstance(instance_id, int) or isinstance(instance_id, bool):
        raise WireError("instanceId must be an integer")

    if "response" in doc:
        return InteractionResponse(
            instance_id=instance_id,
            response=_decode_single_key_list(doc["response"], "response"),
        )
    return InteractionPayload(
        instance_id=instance_id,
        display_elements=tuple(_decode_descriptor(d) for d in doc.get("displayElements", [])),
        gather_elements=tuple(_decode_descriptor(d) for d in doc.get("gatherElements", [])),
        constraints=tuple(_decode_constraint(c) for c in doc.get("constraints", [])),
        value=_decode_single_key_list(doc.get("value", []), "value"),
    )


def violations_document(instance_id: int, violations: list[Violation]) -> dict:
    """Structured error payload returned to the client on constraint failure."""
    return {
        "instanceId": instance_id,
        "violations": [{"constraint": v.constraint, "message": v.message} for v in violations],
    }
