"""Runtime values and the type descriptors they are checked against.

Values are plain Python data so they serialize to the wire format directly:
scalars (``str``/``bool``/``int``/``float``), records as dicts, and
homogeneous collections as lists.  Type information lives in declarations
(:class:`ValueType` plus the domain's data-type definitions); every boundary
that accepts foreign data (instance creation, stores, client responses)
checks conformance against those declarations.

Records always carry an engine-assigned integer identity under the reserved
key ``id``; it is not part of any data-type definition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Union

if TYPE_CHECKING:
    from .domain import DomainModel

PRIMITIVES = ("String", "Boolean", "Integer", "Float", "Image", "Markdown")

# Image and Markdown are presentation refinements of String: their runtime
# representation is a string, so String expressions may feed them.
STRING_KINDED = {"String", "Image", "Markdown"}

RECORD_ID_KEY = "id"

Value = Union[str, bool, int, float, dict, list]


class ValueError_(Exception):
    """A value failed a conformance check against its declared type."""


@dataclass(frozen=True)
class ValueType:
    """Declared type of a field, variable, or expression: a primitive name or
    a record type name, optionally set-valued (one level, never nested)."""

    base: str
    is_set: bool = False

    def element(self) -> "ValueType":
        return ValueType(self.base)

    def __str__(self) -> str:
        return f"set {self.base}" if self.is_set else self.base


def is_primitive(name: str) -> bool:
    return name in PRIMITIVES


def assignable(source: ValueType, target: ValueType) -> bool:
    """Whether a value of ``source`` type may flow into a ``target`` slot."""
    if source.is_set != target.is_set:
        return False
    if source.base == target.base:
        return True
    # String literals and values satisfy the string-kinded refinements.
    return source.base == "String" and target.base in STRING_KINDED


def default_value(vtype: ValueType, domain: "DomainModel | None" = None) -> Value:
    """Zero value for a declared type: "" / false / 0 / 0.0, empty set, or a
    record with defaulted fields and id 0."""
    if vtype.is_set:
        return []
    base = vtype.base
    if base in STRING_KINDED:
        return ""
    if base == "Boolean":
        return False
    if base == "Integer":
        return 0
    if base == "Float":
        return 0.0
    if domain is None:
        raise ValueError_(f"no domain to resolve record type {base!r}")
    type_def = domain.type_def(base)
    if type_def is None:
        raise ValueError_(f"unknown record type {base!r}")
    record: dict = {RECORD_ID_KEY: 0}
    for field in type_def.fields:
        record[field.name] = default_value(field.type, domain)
    return record


def conforms(value: Value, vtype: ValueType, domain: "DomainModel | None" = None) -> bool:
    if vtype.is_set:
        return isinstance(value, list) and all(
            conforms(item, vtype.element(), domain) for item in value
        )
    base = vtype.base
    if base in STRING_KINDED:
        return isinstance(value, str)
    if base == "Boolean":
        return isinstance(value, bool)
    if base == "Integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if base == "Float":
        return isinstance(value, float)
    if domain is None or not isinstance(value, dict):
        return False
    type_def = domain.type_def(base)
    if type_def is None:
        return False
    rid = value.get(RECORD_ID_KEY)
    if not isinstance(rid, int) or isinstance(rid, bool):
        return False
    declared = {f.name for f in type_def.fields}
    if set(value.keys()) - declared - {RECORD_ID_KEY}:
        return False
    return all(
        f.name in value and conforms(value[f.name], f.type, domain)
        for f in type_def.fields
    )


def from_json(data: Any, vtype: ValueType, domain: "DomainModel | None" = None) -> Value:
    """Turn decoded JSON into a conforming value, or raise :class:`ValueError_`.

    Integers are accepted where a Float is declared; records may omit fields
    added to the type after the value was written (they are default-filled),
    which is what lets stored data survive domain evolution.
    """
    if vtype.is_set:
        if not isinstance(data, list):
            raise ValueError_(f"expected a collection for {vtype}")
        return [from_json(item, vtype.element(), domain) for item in data]
    base = vtype.base
    if base in STRING_KINDED:
        if not isinstance(data, str):
            raise ValueError_(f"expected a string for {base}")
        return data
    if base == "Boolean":
        if not isinstance(data, bool):
            raise ValueError_("expected a boolean")
        return data
    if base == "Integer":
        if isinstance(data, bool) or not isinstance(data, int):
            raise ValueError_("expected an integer")
        return data
    if base == "Float":
        if isinstance(data, bool) or not isinstance(data, (int, float)):
            raise ValueError_("expected a number")
        return float(data)
    if domain is None:
        raise ValueError_(f"no domain to resolve record type {base!r}")
    type_def = domain.type_def(base)
    if type_def is None:
        raise ValueError_(f"unknown record type {base!r}")
    if not isinstance(data, dict):
        raise ValueError_(f"expected a record for {base}")
    rid = data.get(RECORD_ID_KEY, 0)
    if isinstance(rid, bool) or not isinstance(rid, int):
        raise ValueError_(f"record {base} has a non-integer id")
    declared = {f.name for f in type_def.fields}
    unknown = set(data.keys()) - declared - {RECORD_ID_KEY}
    if unknown:
        raise ValueError_(f"record {base} has unknown fields {sorted(unknown)}")
    record: dict = {RECORD_ID_KEY: rid}
    for field in type_def.fields:
        if field.name in data:
            record[field.name] = from_json(data[field.name], field.type, domain)
        else:
            record[field.name] = default_value(field.type, domain)
    return record


def clone(value: Value) -> Value:
    """Deep copy; instances must never share mutable structure."""
    if isinstance(value, dict):
        return {k: clone(v) for k, v in value.items()}
    if isinstance(value, list):
        return [clone(v) for v in value]
    return value
