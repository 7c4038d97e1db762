"""Textual form of behavioral models.

::

    flow guessing
    import guessing

    var secret: Integer = 5

    start begin
    end done
    decision judge

    activity ask = guessing.take-a-guess {
      input hint = "Guess a number"
      set tries = tries + 1
    }

    begin -> ask
    ask -> judge
    judge -> praise when ask.guess == secret label "equal"
    judge -> tooLow otherwise

Guards and bindings use the expression language; ``otherwise`` marks the
mandatory fall-through branch of a decision.
"""

from __future__ import annotations

import re

from .diagnostics import Diagnostic, DslError
from .domain import DomainModel, FieldDef
from .expr import Env, EvalError, ExprError, parse_expr
from .flow import Binding, Flow, Node, Transition, Update, VarDecl, validate_flow
from .values import ValueType

_VAR_RE = re.compile(
    r"^var\s+(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*:\s*(?P<set>set\s+)?(?P<type>[A-Za-z_][A-Za-z0-9_-]*)"
    r"(?:\s+label\s+\"(?P<label>[^\"]*)\")?(?:\s*=\s*(?P<init>.+))?$"
)
_NODE_RE = re.compile(r"^(?P<kind>start|end|decision)\s+(?P<id>\S+)$")
_ACTIVITY_RE = re.compile(
    r"^activity\s+(?P<id>\S+)\s*=\s*(?P<domain>[A-Za-z_][A-Za-z0-9_-]*)\.(?P<activity>[A-Za-z_][A-Za-z0-9_-]*)\s*(?P<brace>\{)?$"
)
_TRANSITION_RE = re.compile(r"^(?P<src>[A-Za-z_][A-Za-z0-9_]*)\s*->\s*(?P<dst>[A-Za-z_][A-Za-z0-9_]*)(?P<rest>\s.*)?$")
_LABEL_TAIL_RE = re.compile(r"\s+label\s+\"(?P<label>[^\"]*)\"$")
_BIND_RE = re.compile(r"^(?P<kw>input|set)\s+(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*=\s*(?P<expr>.+)$")


def _strip_comment(line: str) -> str:
    quoted = False
    for i, ch in enumerate(line):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def _parse_embedded_expr(text: str, line_no: int, diags: list[Diagnostic]):
    try:
        return parse_expr(text)
    except ExprError as err:
        diags.append(Diagnostic(str(err), line=line_no, col=err.col))
        return None


def parse_flow(text: str, domains: list[DomainModel]) -> Flow:
    """Parse and validate a flow against already-validated domains; raises
    :class:`DslError` with positional diagnostics on any problem."""
    diags: list[Diagnostic] = []
    lines = text.splitlines()
    domain_map = {d.name: d for d in domains}

    flow_name: str | None = None
    imports: list[str] = []
    variables: list[VarDecl] = []
    nodes: list[Node] = []
    transitions: list[Transition] = []

    current: dict | None = None  # open activity block

    def close_activity() -> None:
        nonlocal current
        assert current is not None
        nodes.append(
            Node(
                id=current["id"],
                kind="activity",
                activity_ref=current["ref"],
                bindings=tuple(current["bindings"]),
                updates=tuple(current["updates"]),
            )
        )
        current = None

    for idx, raw in enumerate(lines, start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue

        if current is not None:
            if line == "}":
                close_activity()
                continue
            m = _BIND_RE.match(line)
            if not m:
                diags.append(Diagnostic(f"unexpected line in activity block: {line!r}", line=idx))
                continue
            expr = _parse_embedded_expr(m.group("expr"), idx, diags)
            if expr is None:
                continue
            if m.group("kw") == "input":
                current["bindings"].append(Binding(target_input=m.group("name"), source=expr))
            else:
                current["updates"].append(Update(variable=m.group("name"), source=expr))
            continue

        if line.startswith("flow "):
            if flow_name is not None:
                diags.append(Diagnostic("duplicate flow header", line=idx))
            flow_name = line.split(None, 1)[1].strip()
            continue
        if line.startswith("import "):
            imports.append(line.split(None, 1)[1].strip())
            continue

        m = _VAR_RE.match(line)
        if m:
            vtype = ValueType(m.group("type"), bool(m.group("set")))
            label = m.group("label") or m.group("name")
            initial = None
            if m.group("init"):
                expr = _parse_embedded_expr(m.group("init").strip(), idx, diags)
                if expr is not None:
                    try:
                        initial = parse_literal(expr)
                    except EvalError:
                        diags.append(Diagnostic("initial value must be a literal", line=idx))
            variables.append(
                VarDecl(field=FieldDef(name=m.group("name"), label=label, type=vtype), initial=initial)
            )
            continue

        m = _NODE_RE.match(line)
        if m:
            nodes.append(Node(id=m.group("id"), kind=m.group("kind")))
            continue

        m = _ACTIVITY_RE.match(line)
        if m:
            current = {
                "id": m.group("id"),
                "ref": (m.group("domain"), m.group("activity")),
                "bindings": [],
                "updates": [],
            }
            if not m.group("brace"):
                close_activity()
            continue

        m = _TRANSITION_RE.match(line)
        if m:
            padded = " " + (m.group("rest") or "").strip()
            label = None
            lm = _LABEL_TAIL_RE.search(padded)
            if lm:
                label = lm.group("label")
                padded = padded[: lm.start()]
            rest = padded.strip()
            guard = None
            otherwise = False
            if rest == "otherwise":
                otherwise = True
            elif rest.startswith("when "):
                guard = _parse_embedded_expr(rest[len("when "):].strip(), idx, diags)
            elif rest:
                diags.append(Diagnostic(f"unexpected transition clause: {rest!r}", line=idx))
            transitions.append(
                Transition(src=m.group("src"), dst=m.group("dst"), guard=guard, otherwise=otherwise, label=label)
            )
            continue

        diags.append(Diagnostic(f"unexpected line: {line!r}", line=idx))

    if current is not None:
        diags.append(Diagnostic(f"unclosed activity block {current['id']!r}", line=len(lines)))
    if flow_name is None and not diags:
        diags.append(Diagnostic("empty flow"))
    if diags:
        raise DslError(diags)

    flow = Flow(
        name=flow_name or "",
        imports=tuple(imports),
        variables=tuple(variables),
        nodes=tuple(nodes),
        transitions=tuple(transitions),
    )
    problems = validate_flow(flow, domain_map)
    if problems:
        raise DslError(problems)
    return flow


def parse_literal(expr):
    """Constant-fold a literal initializer (handles negated numbers); raises
    :class:`EvalError` when the expression references anything."""
    from .expr import free_refs, evaluate

    if free_refs(expr):
        raise EvalError("not a literal")
    return evaluate(expr, Env({}))


def print_flow(flow: Flow) -> str:
    """Canonical text for a flow; ``parse_flow`` round-trips it."""
    from .expr import print_expr

    out: list[str] = [f"flow {flow.name}", ""]
    for name in flow.imports:
        out.append(f"import {name}")
    if flow.imports:
        out.append("")
    for v in flow.variables:
        line = f'var {v.field.name}: {v.field.type} label "{v.field.label}"'
        if v.initial is not None:
            line += f" = {_print_literal(v.initial)}"
        out.append(line)
    if flow.variables:
        out.append("")
    for node in flow.nodes:
        if node.kind != "activity":
            out.append(f"{node.kind} {node.id}")
            continue
        assert node.activity_ref is not None
        header = f"activity {node.id} = {node.activity_ref[0]}.{node.activity_ref[1]}"
        if not node.bindings and not node.updates:
            out.append(header)
            continue
        out.append(header + " {")
        for b in node.bindings:
            out.append(f"  input {b.target_input} = {print_expr(b.source)}")
        for u in node.updates:
            out.append(f"  set {u.variable} = {print_expr(u.source)}")
        out.append("}")
    out.append("")
    for t in flow.transitions:
        line = f"{t.src} -> {t.dst}"
        if t.otherwise:
            line += " otherwise"
        elif t.guard is not None:
            line += f" when {print_expr(t.guard)}"
        if t.label is not None:
            line += f' label "{t.label}"'
        out.append(line)
    while out and out[-1] == "":
        out.pop()
    return "\n".join(out) + "\n"


def _print_literal(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        body = value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{body}"'
    return repr(value)
