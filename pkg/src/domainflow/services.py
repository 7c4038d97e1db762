"""Non-user-facing activity execution: built-in persistence over typed
records, local functions, and external HTTP calls.

The record store is an append-only JSON-lines log per data type (one file
under ``data/<domain>/<type>.log``) with an in-memory index rebuilt on
startup.  Records read back through a newer type definition are
default-filled for fields added since they were written, which is what
makes domain evolution safe for stored data.
"""

from __future__ import annotations

import json
import re
import threading
import urllib.request
from pathlib import Path

from .domain import ActivityDef, DataTypeDef, DomainModel, ServiceBinding
from .values import RECORD_ID_KEY, Value, clone, conforms, from_json

_PAGING_INPUTS = ("offset", "limit")


class ServiceError(Exception):
    """A service invocation failed; the engine fails the whole instance."""


class TypeTable:
    """One type's records: append-log on disk, id-indexed map in memory.
    Writes are serialized per table; reads return deep copies."""

    def __init__(self, domain: DomainModel, type_def: DataTypeDef, path: Path | None):
        self._domain = domain
        self._type = type_def
        self._path = path
        self._lock = threading.Lock()
        self._records: dict[int, dict] = {}
        self._next_id = 1
        if path is not None and path.exists():
            self._replay(path)

    def _replay(self, path: Path) -> None:
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            if entry["op"] == "put":
                record = from_json(entry["record"], _record_type(self._type), self._domain)
                self._records[record[RECORD_ID_KEY]] = record
                self._next_id = max(self._next_id, record[RECORD_ID_KEY] + 1)
            elif entry["op"] == "delete":
                self._records.pop(entry["id"], None)

    def _append(self, entry: dict) -> None:
        if self._path is None:
            return
        self._path.parent.mkdir(parents=True, exist_ok=True)
        with self._path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def store(self, fields: dict[str, Value]) -> dict:
        with self._lock:
            record: dict = {RECORD_ID_KEY: self._next_id}
            for f in self._type.fields:
                if f.name not in fields:
                    raise ServiceError(f"record {self._type.name!r} is missing field {f.name!r}")
                record[f.name] = clone(fields[f.name])
            unknown = set(fields) - {f.name for f in self._type.fields}
            if unknown:
                raise ServiceError(f"record {self._type.name!r} has unknown fields {sorted(unknown)}")
            if not conforms(record, _record_type(self._type), self._domain):
                raise ServiceError(f"record does not validate against type {self._type.name!r}")
            self._next_id += 1
            self._records[record[RECORD_ID_KEY]] = record
            self._append({"op": "put", "record": record})
            return clone(record)

    def by_id(self, record_id: int) -> dict | None:
        with self._lock:
            record = self._records.get(record_id)
            return clone(record) if record is not None else None

    def query(self, filters: dict[str, Value], offset: int = 0, limit: int | None = None) -> list[dict]:
        """Records matching every filter by field equality, in id order,
        paged by offset/limit."""
        with self._lock:
            rows = [r for _, r in sorted(self._records.items())]
        rows = [r for r in rows if all(r.get(k) == v for k, v in filters.items())]
        if offset:
            rows = rows[offset:]
        if limit is not None:
            rows = rows[: max(limit, 0)]
        return [clone(r) for r in rows]

    def delete(self, record_id: int) -> bool:
        with self._lock:
            if record_id not in self._records:
                return False
            del self._records[record_id]
            self._append({"op": "delete", "id": record_id})
            return True


def _record_type(type_def: DataTypeDef):
    from .values import ValueType

    return ValueType(type_def.name)


class RecordStore:
    """All type tables for all deployed domains, keyed (domain, type)."""

    def __init__(self, data_dir: Path | None = None):
        self._data_dir = data_dir
        self._tables: dict[tuple[str, str], TypeTable] = {}
        self._lock = threading.Lock()

    def table(self, domain: DomainModel, type_name: str) -> TypeTable:
        key = (domain.name, type_name)
        with self._lock:
            table = self._tables.get(key)
            if table is None:
                type_def = domain.type_def(type_name)
                if type_def is None:
                    raise ServiceError(f"domain {domain.name!r} has no type {type_name!r}")
                path = None
                if self._data_dir is not None:
                    path = self._data_dir / domain.name / f"{type_name}.log"
                table = TypeTable(domain, type_def, path)
                self._tables[key] = table
            return table

    def refresh_domain(self, domain: DomainModel) -> None:
        """Drop cached tables after a domain redeploy so records re-read
        through the new type definitions."""
        with self._lock:
            for key in [k for k in self._tables if k[0] == domain.name]:
                del self._tables[key]


# ---------------------------------------------------------- local functions

def render_markdown(text: str) -> str:
    """Deterministic rendering of a small Markdown subset: ATX headings,
    ``**strong**`` and ``*emphasis*``, and blank-line-separated paragraphs.
    Anything else passes through as paragraph text."""
    blocks: list[str] = []
    current: list[str] = []
    for line in text.replace("\r\n", "\n").split("\n"):
        if line.strip():
            current.append(line)
        elif current:
            blocks.append("\n".join(current))
            current = []
    if current:
        blocks.append("\n".join(current))

    rendered = []
    for block in blocks:
        first = block.split("\n", 1)[0]
        level = len(first) - len(first.lstrip("#"))
        if 1 <= level <= 6 and first[level:].startswith(" ") and "\n" not in block:
            rendered.append(f"<h{level}>{_inline(first[level + 1:].strip())}</h{level}>")
        else:
            rendered.append(f"<p>{_inline(block)}</p>")
    return "\n".join(rendered)


_STRONG_RE = re.compile(r"\*\*(.+?)\*\*")
_EM_RE = re.compile(r"\*(.+?)\*")


def _inline(text: str) -> str:
    text = text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    text = _STRONG_RE.sub(r"<strong>\1</strong>", text)
    return _EM_RE.sub(r"<em>\1</em>", text)


def _fn_markdown(inputs: dict[str, Value], activity: ActivityDef) -> dict[str, Value]:
    if not inputs or not activity.outputs:
        raise ServiceError("markdown function needs one input and one output")
    source = next(iter(inputs.values()))
    if not isinstance(source, str):
        raise ServiceError("markdown function needs a string input")
    return {activity.outputs[0].name: render_markdown(source)}


LOCAL_FUNCTIONS = {
    "markdown": _fn_markdown,
}


# ------------------------------------------------------------------ invoke

def invoke(
    binding: ServiceBinding,
    inputs: dict[str, Value],
    activity: ActivityDef,
    domain: DomainModel,
    store: RecordStore,
) -> dict[str, Value]:
    """Execute one service call and shape its result onto the activity's
    declared outputs.

    - ``builtin-store`` persists a record assembled from the inputs that
      match the stored type's fields and returns it (with its fresh id)
      under the first record-typed output.
    - ``builtin-query`` with an ``id`` input resolves a single record onto
      the first record-typed scalar output; otherwise it filters by field
      equality and pages with ``offset``/``limit`` onto the first set-valued
      output.
    - ``builtin-delete`` removes by ``id`` and reports success on a Boolean
      output when one is declared.
    - ``local-function`` and ``external-http`` run exactly one call per
      invocation.
    """
    kind = binding.kind
    if kind in ("builtin-store", "builtin-query", "builtin-delete"):
        type_name = binding.config.get("type", "")
        type_def = domain.type_def(type_name)
        if type_def is None:
            raise ServiceError(f"service {binding.name!r} stores unknown type {type_name!r}")
        table = store.table(domain, type_name)
        field_names = {f.name for f in type_def.fields}

        if kind == "builtin-store":
            record = table.store({k: v for k, v in inputs.items() if k in field_names})
            out = _first_output(activity, lambda t: not t.is_set and t.base == type_name)
            return {out: record} if out else {}

        if kind == "builtin-delete":
            ok = table.delete(_int_input(inputs, "id"))
            out = _first_output(activity, lambda t: not t.is_set and t.base == "Boolean")
            return {out: ok} if out else {}

        scalar_out = _first_output(activity, lambda t: not t.is_set and t.base == type_name)
        if "id" in inputs and scalar_out:
            record = table.by_id(_int_input(inputs, "id"))
            if record is None:
                raise ServiceError(f"no {type_name} with id {inputs['id']!r}")
            return {scalar_out: record}
        filters = {k: v for k, v in inputs.items() if k in field_names and k not in _PAGING_INPUTS}
        offset = _int_input(inputs, "offset") if "offset" in inputs else 0
        limit = _int_input(inputs, "limit") if "limit" in inputs else None
        out = _first_output(activity, lambda t: t.is_set and t.base == type_name)
        if not out:
            raise ServiceError(f"activity {activity.name!r} declares no set of {type_name}")
        return {out: table.query(filters, offset, limit)}

    if kind == "local-function":
        name = binding.config.get("function", "")
        fn = LOCAL_FUNCTIONS.get(name)
        if fn is None:
            raise ServiceError(f"unknown local function {name!r}")
        return fn(inputs, activity)

    if kind == "external-http":
        return _invoke_http(binding, inputs, activity, domain)

    raise ServiceError(f"unknown service kind {kind!r}")


def _first_output(activity: ActivityDef, predicate) -> str | None:
    for f in activity.outputs:
        if predicate(f.type):
            return f.name
    return None


def _int_input(inputs: dict, name: str) -> int:
    value = inputs.get(name)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ServiceError(f"service input {name!r} must be an integer")
    return value


def _invoke_http(
    binding: ServiceBinding, inputs: dict, activity: ActivityDef, domain: DomainModel
) -> dict[str, Value]:
    url = binding.config.get("url", "")
    for name, value in inputs.items():
        url = url.replace("{" + name + "}", str(value))
    method = binding.config.get("method", "GET").upper()
    timeout = float(binding.config.get("timeout", "10"))
    body = None
    headers = {"Accept": "application/json"}
    if method in ("POST", "PUT", "PATCH"):
        body = json.dumps(inputs, ensure_ascii=False).encode("utf-8")
        headers["Content-Type"] = "application/json"
    request = urllib.request.Request(url, data=body, method=method, headers=headers)
    try:
        with urllib.request.urlopen(request, timeout=timeout) as reply:
            status = reply.status
            raw = reply.read()
    except Exception as err:  # timeout, refused, non-2xx
        raise ServiceError(f"external call to {url} failed: {err}") from err
    if not 200 <= status < 300:
        raise ServiceError(f"external call to {url} returned {status}")
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ServiceError(f"external call to {url} returned malformed JSON") from err
    if not isinstance(doc, dict):
        raise ServiceError("external service must return a JSON object")
    outputs: dict[str, Value] = {}
    for f in activity.outputs:
        if f.name in doc:
            try:
                outputs[f.name] = from_json(doc[f.name], f.type, domain)
            except Exception as err:
                raise ServiceError(f"external output {f.name!r} does not fit {f.type}: {err}") from err
    return outputs
