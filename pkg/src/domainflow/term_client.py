"""Generic terminal client coordinator.

Everything printed here comes out of the interaction payload itself: labeled
text for displayed elements (collections as numbered lists), one prompt per
element to gather, chosen by declared type.  Selection constraints become
pick-by-number prompts over the displayed collection.  The module knows
nothing about any deployed logic, which is the point.
"""

from __future__ import annotations

import json
import sys
import urllib.error
import urllib.request

from .coordination import (
    ElementDescriptor,
    InteractionPayload,
    InteractionResponse,
    canonical_bytes,
    decode,
    response_document,
)


class ClientError(Exception):
    pass


def _http(method: str, url: str, data: bytes | None = None) -> tuple[int, bytes]:
    request = urllib.request.Request(
        url, data=data, method=method, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(request) as reply:
            return reply.status, reply.read()
    except urllib.error.HTTPError as err:
        return err.code, err.read()
    except urllib.error.URLError as err:
        raise ClientError(f"cannot reach server: {err}") from err


def _scalar_text(value) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    return str(value)


def _write_record(out, descriptor: ElementDescriptor, record: dict, indent: str) -> None:
    for sub in descriptor.sub_elements or ():
        out.write(f"{indent}{sub.label}: {_element_text(sub, record.get(sub.name))}\n")


def _element_text(descriptor: ElementDescriptor, value) -> str:
    if descriptor.set:
        scalar = ElementDescriptor(descriptor.name, descriptor.label, False,
                                   descriptor.type, descriptor.sub_elements)
        return ", ".join(_element_text(scalar, v) for v in (value or []))
    if descriptor.sub_elements is not None:
        return json.dumps(value, ensure_ascii=False)
    return _scalar_text(value)


def _render(out, payload: InteractionPayload) -> None:
    for descriptor in payload.display_elements:
        value = payload.value.get(descriptor.name)
        if descriptor.set:
            out.write(f"{descriptor.label}:\n")
            for index, member in enumerate(value or [], start=1):
                if descriptor.sub_elements is not None:
                    subs = list(descriptor.sub_elements)
                    first = subs[0] if subs else None
                    head = _element_text(first, member.get(first.name)) if first else ""
                    out.write(f"  {index}. {head}\n")
                    for sub in subs[1:]:
                        out.write(f"     {sub.label}: {_element_text(sub, member.get(sub.name))}\n")
                else:
                    out.write(f"  {index}. {_scalar_text(member)}\n")
        elif descriptor.sub_elements is not None:
            out.write(f"{descriptor.label}:\n")
            _write_record(out, descriptor, value or {}, "  ")
        else:
            out.write(f"{descriptor.label}: {_scalar_text(value)}\n")


def _ask(inp, out, prompt: str) -> str | None:
    out.write(prompt)
    out.flush()
    line = inp.readline()
    if line == "":
        return None  # input exhausted
    return line.strip()


def _parse_scalar(descriptor: ElementDescriptor, line: str):
    kind = descriptor.type
    if kind == "Integer":
        return int(line)
    if kind == "Float":
        return float(line)
    if kind == "Boolean":
        lowered = line.lower()
        if lowered in ("y", "yes", "true"):
            return True
        if lowered in ("n", "no", "false"):
            return False
        raise ValueError(line)
    return line


def _gather(inp, out, payload: InteractionPayload) -> dict | None:
    """One value per gathered element; None means the input ran dry."""
    answers: dict = {}
    pick_from = {c.target: c.source for c in payload.constraints if c.kind == "valueFrom"}
    required = {c.target for c in payload.constraints if c.kind == "required"}

    for descriptor in payload.gather_elements:
        name = descriptor.name
        while True:
            if name in pick_from:
                members = payload.value.get(pick_from[name] or "") or []
                line = _ask(inp, out, f"{descriptor.label} (number 1-{len(members)}, blank to skip): ")
            elif descriptor.set:
                line = _ask(inp, out, f"{descriptor.label} (comma-separated): ")
            elif descriptor.type == "Boolean":
                line = _ask(inp, out, f"{descriptor.label} [y/n]: ")
            elif descriptor.type in ("Integer", "Float"):
                line = _ask(inp, out, f"{descriptor.label} (number): ")
            elif descriptor.sub_elements is not None:
                out.write(f"(cannot gather composite element {name} on a terminal, skipping)\n")
                break
            else:
                line = _ask(inp, out, f"{descriptor.label}: ")

            if line is None:
                return None
            if line == "":
                if name in required:
                    out.write("  ! a value is needed here\n")
                    continue
                break
            try:
                if name in pick_from:
                    members = payload.value.get(pick_from[name] or "") or []
                    index = int(line)
                    if not 1 <= index <= len(members):
                        raise ValueError(line)
                    answers[name] = members[index - 1]
                elif descriptor.set:
                    items = [part.strip() for part in line.split(",") if part.strip()]
                    answers[name] = [_parse_scalar(descriptor, item) for item in items]
                else:
                    answers[name] = _parse_scalar(descriptor, line)
                break
            except ValueError:
                out.write("  ! that does not fit, try again\n")
    return answers


def run(server: str, flow: str, inp=None, out=None) -> int:
    """Interaction loop: launch the flow, render payloads, prompt, respond,
    until the instance finishes.  Returns a process exit code."""
    inp = inp if inp is not None else sys.stdin
    out = out if out is not None else sys.stdout
    server = server.rstrip("/")

    status, data = _http("POST", f"{server}/flows/{flow}/instances")
    while True:
        if status >= 400:
            out.write(f"server said {status}: {data.decode('utf-8', 'replace')}\n")
            return 1
        doc = json.loads(data)
        if "displayElements" not in doc:
            state = doc.get("status", "unknown")
            if state == "finished":
                out.write("Flow finished.\n")
                return 0
            out.write(f"flow is {state}: {doc.get('failure', '')}\n")
            return 1

        payload = decode(data)
        assert isinstance(payload, InteractionPayload)
        out.write("\n")
        _render(out, payload)
        answers = _gather(inp, out, payload) if payload.gather_elements else {}
        if answers is None:
            out.write("input ended before the flow finished\n")
            return 1

        reply = InteractionResponse(payload.instance_id, answers)
        status, data = _http(
            "POST",
            f"{server}/instances/{payload.instance_id}/response",
            canonical_bytes(response_document(reply)),
        )
        while status == 422:
            problem_doc = json.loads(data)
            for violation in problem_doc.get("violations", []):
                out.write(f"  ! {violation.get('message', 'rejected')}\n")
            answers = _gather(inp, out, payload)
            if answers is None:
                out.write("input ended before the flow finished\n")
                return 1
            reply = InteractionResponse(payload.instance_id, answers)
            status, data = _http(
                "POST",
                f"{server}/instances/{payload.instance_id}/response",
                canonical_bytes(response_document(reply)),
            )
