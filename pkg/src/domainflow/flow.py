"""Behavioral models: directed graphs of activity nodes with guarded
transitions, start/end points, decisions, and loop back-edges.

Semantics decided here and relied on by the engine:

- On a plain node, every outgoing transition whose guard evaluates true
  fires (fan-out parallelism); an unguarded transition is always true.
- On a decision node, the first guard that evaluates true wins, in the
  declaration order of its transitions; a mandatory ``otherwise`` branch
  makes decisions exhaustive.
- Loops are plain back-edges, not a node kind.
- A node whose input bindings reference an output that no node has produced
  yet is withheld from dispatch until the producing node completes.
"""

from __future__ import annotations

from dataclasses import dataclass

from .diagnostics import Diagnostic
from .domain import EXPR_NAME_RE, ActivityDef, DataTypeDef, DomainModel, FieldDef
from .expr import Env, Expr, Scope, TypeErr, evaluate, free_refs, type_of
from .values import Value, ValueType, assignable, conforms, is_primitive

NODE_KINDS = ("start", "end", "activity", "decision")


@dataclass(frozen=True)
class Binding:
    target_input: str
    source: Expr


@dataclass(frozen=True)
class Update:
    """``set variable = expr`` applied when the node completes; the node's
    fresh outputs are visible to the expression by bare name."""

    variable: str
    source: Expr


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    activity_ref: tuple[str, str] | None = None  # (domain, activity)
    bindings: tuple[Binding, ...] = ()
    updates: tuple[Update, ...] = ()


@dataclass(frozen=True)
class Transition:
    src: str
    dst: str
    guard: Expr | None = None  # None with otherwise=False means "always"
    otherwise: bool = False
    label: str | None = None


@dataclass(frozen=True)
class VarDecl:
    field: FieldDef
    initial: Value | None = None


@dataclass(frozen=True)
class Flow:
    name: str
    imports: tuple[str, ...]
    variables: tuple[VarDecl, ...]
    nodes: tuple[Node, ...]
    transitions: tuple[Transition, ...]

    def node(self, node_id: str) -> Node | None:
        for n in self.nodes:
            if n.id == node_id:
                return n
        return None

    def outgoing(self, node_id: str) -> list[Transition]:
        return [t for t in self.transitions if t.src == node_id]

    def variable(self, name: str) -> VarDecl | None:
        for v in self.variables:
            if v.field.name == name:
                return v
        return None


class FlowContext:
    """A flow together with its imported domains; resolves activities, builds
    the static scope, and answers data-dependency questions."""

    def __init__(self, flow: Flow, domains: dict[str, DomainModel]):
        self.flow = flow
        self.domains = domains

    def resolve_activity(self, node: Node) -> tuple[DomainModel, ActivityDef] | None:
        if node.activity_ref is None:
            return None
        domain_name, activity_name = node.activity_ref
        domain = self.domains.get(domain_name)
        if domain is None:
            return None
        activity = domain.activity(activity_name)
        if activity is None:
            return None
        return domain, activity

    def resolve_type(self, name: str) -> DataTypeDef | None:
        for domain_name in self.flow.imports:
            domain = self.domains.get(domain_name)
            if domain is not None:
                found = domain.type_def(name)
                if found is not None:
                    return found
        return None

    def record_domain(self, type_name: str) -> DomainModel | None:
        for domain_name in self.flow.imports:
            domain = self.domains.get(domain_name)
            if domain is not None and domain.type_def(type_name) is not None:
                return domain
        return None

    def scope(self, locals_: dict[str, ValueType] | None = None) -> Scope:
        variables = {v.field.name: v.field.type for v in self.flow.variables}
        node_outputs: dict[str, dict[str, ValueType]] = {}
        for node in self.flow.nodes:
            resolved = self.resolve_activity(node)
            if resolved is not None:
                _, activity = resolved
                node_outputs[node.id] = {f.name: f.type for f in activity.outputs}
        return Scope(variables, node_outputs, self.resolve_type, locals_)

    def binding_dependencies(self, node: Node) -> list[tuple[str, str]]:
        """(node id, output field) pairs the node's bindings read."""
        node_ids = {n.id for n in self.flow.nodes}
        deps = []
        for binding in node.bindings:
            for path in free_refs(binding.source):
                if path[0] in node_ids and len(path) >= 2:
                    deps.append((path[0], path[1]))
        return deps

    def unmet_dependencies(self, node: Node, produced: dict) -> list[tuple[str, str]]:
        return [dep for dep in self.binding_dependencies(node) if dep not in produced]


def validate_flow(flow: Flow, domains: dict[str, DomainModel]) -> list[Diagnostic]:
    """Reachability, guard typing, binding typing, and decision exhaustiveness;
    empty list means the flow is executable."""
    out: list[Diagnostic] = []
    ctx = FlowContext(flow, domains)
    fpath = flow.name

    for name in flow.imports:
        if name not in domains:
            out.append(Diagnostic(f"unknown domain {name!r}", path=fpath))

    # Type names must be unambiguous across the imported domains.
    seen_types: dict[str, str] = {}
    for domain_name in flow.imports:
        domain = domains.get(domain_name)
        if domain is None:
            continue
        for t in domain.types:
            if t.name in seen_types and seen_types[t.name] != domain_name:
                out.append(
                    Diagnostic(
                        f"type {t.name!r} is defined by both {seen_types[t.name]!r} and {domain_name!r}",
                        path=fpath,
                    )
                )
            seen_types.setdefault(t.name, domain_name)

    node_ids: set[str] = set()
    var_names = {v.field.name for v in flow.variables}
    for node in flow.nodes:
        npath = f"{fpath}/node/{node.id}"
        if node.id in node_ids:
            out.append(Diagnostic(f"duplicate node id {node.id!r}", path=npath))
        node_ids.add(node.id)
        if not EXPR_NAME_RE.match(node.id):
            out.append(Diagnostic(f"node id {node.id!r} is not a plain identifier", path=npath))
        if node.id in var_names:
            out.append(Diagnostic(f"node id {node.id!r} collides with a variable", path=npath))
        if node.kind not in NODE_KINDS:
            out.append(Diagnostic(f"unknown node kind {node.kind!r}", path=npath))
        if node.kind == "activity" and node.activity_ref is None:
            out.append(Diagnostic(f"activity node {node.id!r} references no activity", path=npath))
        if node.kind != "activity" and node.activity_ref is not None:
            out.append(Diagnostic(f"{node.kind} node {node.id!r} cannot reference an activity", path=npath))
        if node.kind != "activity" and (node.bindings or node.updates):
            out.append(Diagnostic(f"{node.kind} node {node.id!r} cannot bind or set", path=npath))

    starts = [n for n in flow.nodes if n.kind == "start"]
    ends = [n for n in flow.nodes if n.kind == "end"]
    if not starts:
        out.append(Diagnostic("flow has no start node", path=fpath))
    if not ends:
        out.append(Diagnostic("flow has no end node", path=fpath))

    for v in flow.variables:
        vpath = f"{fpath}/var/{v.field.name}"
        if not EXPR_NAME_RE.match(v.field.name):
            out.append(Diagnostic(f"variable {v.field.name!r} is not a plain identifier", path=vpath))
        base = v.field.type.base
        if not is_primitive(base) and ctx.resolve_type(base) is None:
            out.append(Diagnostic(f"unresolved type {base}", path=vpath))
        if v.initial is not None:
            domain = ctx.record_domain(base)
            if not conforms(v.initial, v.field.type, domain):
                out.append(Diagnostic(f"initial value does not fit {v.field.type}", path=vpath))

    for t in flow.transitions:
        tpath = f"{fpath}/transition/{t.src}->{t.dst}"
        if t.src not in node_ids:
            out.append(Diagnostic(f"transition from unknown node {t.src!r}", path=tpath))
        if t.dst not in node_ids:
            out.append(Diagnostic(f"transition to unknown node {t.dst!r}", path=tpath))

    if out:
        return out  # structural problems make the checks below unreliable

    scope = ctx.scope()
    for node in flow.nodes:
        npath = f"{fpath}/node/{node.id}"
        resolved = ctx.resolve_activity(node)
        if node.kind == "activity":
            if resolved is None:
                out.append(Diagnostic(f"unresolved activity {node.activity_ref!r}", path=npath))
                continue
            _, activity = resolved
            bound = set()
            for binding in node.bindings:
                bpath = f"{npath}/input/{binding.target_input}"
                target = activity.input(binding.target_input)
                if target is None:
                    out.append(Diagnostic(f"activity has no input {binding.target_input!r}", path=bpath))
                    continue
                if binding.target_input in bound:
                    out.append(Diagnostic(f"input {binding.target_input!r} bound twice", path=bpath))
                bound.add(binding.target_input)
                try:
                    source_type = type_of(binding.source, scope)
                except TypeErr as err:
                    out.append(Diagnostic(str(err), path=bpath))
                    continue
                if not assignable(source_type, target.type):
                    out.append(
                        Diagnostic(
                            f"binding of {binding.target_input!r} has type {source_type}, needs {target.type}",
                            path=bpath,
                        )
                    )
            for f in activity.inputs:
                if f.name not in bound:
                    out.append(Diagnostic(f"input {f.name!r} is not bound", path=npath))
            own_outputs = {f.name: f.type for f in activity.outputs}
            update_scope = ctx.scope(locals_=own_outputs)
            for update in node.updates:
                upath = f"{npath}/set/{update.variable}"
                decl = flow.variable(update.variable)
                if decl is None:
                    out.append(Diagnostic(f"set targets unknown variable {update.variable!r}", path=upath))
                    continue
                try:
                    source_type = type_of(update.source, update_scope)
                except TypeErr as err:
                    out.append(Diagnostic(str(err), path=upath))
                    continue
                if not assignable(source_type, decl.field.type):
                    out.append(
                        Diagnostic(
                            f"set {update.variable!r} has type {source_type}, needs {decl.field.type}",
                            path=upath,
                        )
                    )

    for t in flow.transitions:
        tpath = f"{fpath}/transition/{t.src}->{t.dst}"
        if t.guard is not None:
            try:
                guard_type = type_of(t.guard, scope)
            except TypeErr as err:
                out.append(Diagnostic(str(err), path=tpath))
                continue
            if guard_type != ValueType("Boolean"):
                out.append(Diagnostic(f"guard has type {guard_type}, needs Boolean", path=tpath))

    for node in flow.nodes:
        npath = f"{fpath}/node/{node.id}"
        outgoing = flow.outgoing(node.id)
        if node.kind == "end" and outgoing:
            out.append(Diagnostic(f"end node {node.id!r} has outgoing transitions", path=npath))
        incoming = [t for t in flow.transitions if t.dst == node.id]
        if node.kind == "start" and incoming:
            out.append(Diagnostic(f"start node {node.id!r} has incoming transitions", path=npath))
        if node.kind == "decision":
            if len(outgoing) < 2:
                out.append(Diagnostic(f"decision {node.id!r} needs at least 2 outgoing transitions", path=npath))
            others = [t for t in outgoing if t.otherwise]
            if len(others) != 1:
                out.append(Diagnostic(f"decision {node.id!r} needs exactly one otherwise branch", path=npath))
            for t in outgoing:
                if t.guard is None and not t.otherwise:
                    out.append(Diagnostic(f"decision {node.id!r} has an unguarded branch", path=npath))
        else:
            for t in outgoing:
                if t.otherwise:
                    out.append(
                        Diagnostic(f"otherwise is only allowed on decision nodes, found on {node.id!r}", path=npath)
                    )

    # Reachability from the start nodes over all transitions.
    reached = {n.id for n in starts}
    frontier = list(reached)
    while frontier:
        current = frontier.pop()
        for t in flow.outgoing(current):
            if t.dst not in reached:
                reached.add(t.dst)
                frontier.append(t.dst)
    for node in flow.nodes:
        if node.id not in reached:
            out.append(Diagnostic(f"node {node.id!r} is unreachable", path=f"{fpath}/node/{node.id}"))

    return out


def start_nodes(flow: Flow) -> list[str]:
    return [n.id for n in flow.nodes if n.kind == "start"]


def ready_successors(flow: Flow, completed: str, env: Env) -> list[str]:
    """Targets that become ready when ``completed`` finishes: every
    true-guarded transition for plain nodes, exactly one branch for
    decisions.  Guard evaluation errors propagate.

    Data-dependency withholding is the scheduler's job; see
    :meth:`FlowContext.unmet_dependencies`.
    """
    node = flow.node(completed)
    outgoing = flow.outgoing(completed)
    if node is not None and node.kind == "decision":
        otherwise = None
        for t in outgoing:
            if t.otherwise:
                otherwise = t
                continue
            if t.guard is not None and evaluate(t.guard, env):
                return [t.dst]
        return [otherwise.dst] if otherwise is not None else []
    targets = []
    for t in outgoing:
        if t.guard is None or evaluate(t.guard, env):
            targets.append(t.dst)
    return targets
