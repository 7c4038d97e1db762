"""Server-side flow execution: instance lifecycle, the main dispatch loop,
dependency-aware scheduling, coordination exchanges, and sandbox debugging.

Scheduling is a deterministic FIFO queue of ready node ids.  A node whose
bindings read an output nobody has produced yet waits in a withheld list
that is re-checked after every completion.  A user-facing activity blocks
only its own branch: other ready branches keep running until they block or
finish, and their interaction payloads queue up in completion order, one
visible to the client at a time.

Every state change appends events to a per-instance JSON-lines log and
rewrites a snapshot file, so instances survive restarts and the sandbox can
inspect finished flows.  Many instances may progress concurrently; a single
instance's transitions are serialized by a per-instance lock.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

from .coordination import (
    InteractionPayload,
    InteractionResponse,
    Violation,
    build_payload,
    decode,
    payload_document,
    validate_response,
)
from .deployment import Deployment
from .expr import Env, EvalError, evaluate
from .flow import FlowContext, Node, ready_successors, start_nodes
from .services import RecordStore, ServiceError, invoke
from .values import Value, ValueError_, clone, default_value, from_json

STATUSES = ("running", "awaiting-client", "finished", "failed")

Picker = Callable[[list[str]], int]


class EngineError(Exception):
    """Engine-level failure surfaced to callers (bad id, wrong status, ...)."""


class UnknownInstance(EngineError):
    pass


class NotAwaiting(EngineError):
    pass


@dataclass
class StateEvent:
    seq: int
    kind: str
    detail: dict = dc_field(default_factory=dict)

    def document(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "detail": self.detail}


@dataclass
class PendingInteraction:
    """A user-facing exchange in flight: the payload queued for the client
    and enough provenance to record the response when it arrives."""

    node_id: str
    activity_ref: tuple[str, str]
    inputs: dict
    payload: InteractionPayload


@dataclass
class FlowInstance:
    instance_id: int
    flow_name: str
    sandbox: bool
    status: str = "running"
    variables: dict = dc_field(default_factory=dict)
    produced: dict = dc_field(default_factory=dict)  # (node id, field) -> Value
    ready: list = dc_field(default_factory=list)
    withheld: list = dc_field(default_factory=list)
    end_reached: bool = False
    pending: list = dc_field(default_factory=list)  # of PendingInteraction
    history: list = dc_field(default_factory=list)  # of StateEvent
    executing: int = 0  # live activity instances; 0 whenever blocked
    failure: str | None = None

    @property
    def pending_payload(self) -> InteractionPayload | None:
        return self.pending[0].payload if self.pending else None

    def current_activities(self) -> list[str]:
        return list(dict.fromkeys(self.ready + self.withheld + [p.node_id for p in self.pending]))


class Engine:
    """Executes instances of the deployed flows against one record store."""

    def __init__(self, deployment: Deployment, data_dir: Path | None = None):
        self.deployment = deployment
        self.store = RecordStore(data_dir)
        self._data_dir = data_dir
        self._instances: dict[int, FlowInstance] = {}
        self._locks: dict[int, threading.RLock] = {}
        self._registry_lock = threading.Lock()
        self._next_id = 1
        if data_dir is not None:
            self._load_instances(data_dir / "instances")

    # ------------------------------------------------------------ registry

    def _instances_dir(self) -> Path | None:
        return self._data_dir / "instances" if self._data_dir is not None else None

    def _load_instances(self, directory: Path) -> None:
        if not directory.exists():
            return
        high = 0
        for snap in sorted(directory.glob("*.snapshot.json")):
            inst = _instance_from_snapshot(json.loads(snap.read_text(encoding="utf-8")))
            events = directory / f"{inst.instance_id}.events.jsonl"
            if events.exists():
                for line in events.read_text(encoding="utf-8").splitlines():
                    if line.strip():
                        doc = json.loads(line)
                        inst.history.append(StateEvent(doc["seq"], doc["kind"], doc.get("detail", {})))
            inst._persisted_events = len(inst.history)  # type: ignore[attr-defined]
            self._instances[inst.instance_id] = inst
            self._locks[inst.instance_id] = threading.RLock()
            high = max(high, inst.instance_id)
        counter = directory / "next_id"
        if counter.exists():
            high = max(high, int(counter.read_text().strip()) - 1)
        self._next_id = high + 1

    def _allocate_id(self) -> int:
        with self._registry_lock:
            instance_id = self._next_id
            self._next_id += 1
            directory = self._instances_dir()
            if directory is not None:
                directory.mkdir(parents=True, exist_ok=True)
                (directory / "next_id").write_text(str(self._next_id), encoding="utf-8")
            return instance_id

    def _lock(self, instance_id: int) -> threading.RLock:
        with self._registry_lock:
            lock = self._locks.get(instance_id)
            if lock is None:
                raise UnknownInstance(f"unknown instance {instance_id}")
            return lock

    def instance(self, instance_id: int) -> FlowInstance:
        inst = self._instances.get(instance_id)
        if inst is None:
            raise UnknownInstance(f"unknown instance {instance_id}")
        return inst

    def _context(self, inst: FlowInstance) -> FlowContext:
        flow = self.deployment.flows.get(inst.flow_name)
        if flow is None:
            raise EngineError(f"flow {inst.flow_name!r} is no longer deployed")
        return FlowContext(flow, self.deployment.domains)

    # ----------------------------------------------------------- lifecycle

    def create_instance(self, flow_name: str, initial: dict | None = None) -> FlowInstance:
        """New instance with defaulted variables and the start-node
        successors queued; does not execute anything yet."""
        flow = self.deployment.flows.get(flow_name)
        if flow is None:
            raise UnknownInstance(f"unknown flow {flow_name!r}")
        ctx = FlowContext(flow, self.deployment.domains)
        mode = self.deployment.flow_modes.get(flow_name, "production")

        variables: dict = {}
        for decl in flow.variables:
            name = decl.field.name
            domain = ctx.record_domain(decl.field.type.base)
            if initial is not None and name in initial:
                try:
                    variables[name] = from_json(initial[name], decl.field.type, domain)
                except ValueError_ as err:
                    raise EngineError(f"initial value for {name!r}: {err}") from err
            elif decl.initial is not None:
                variables[name] = clone(decl.initial)
            else:
                variables[name] = default_value(decl.field.type, domain)
        if initial:
            unknown = set(initial) - {v.field.name for v in flow.variables}
            if unknown:
                raise EngineError(f"unknown initial variables {sorted(unknown)}")

        inst = FlowInstance(
            instance_id=self._allocate_id(),
            flow_name=flow_name,
            sandbox=(mode == "sandbox"),
            variables=variables,
        )
        with self._registry_lock:
            self._instances[inst.instance_id] = inst
            self._locks[inst.instance_id] = threading.RLock()
        self._event(inst, "created", {"flow": flow_name, "sandbox": inst.sandbox})

        env = self._env(inst)
        for start in start_nodes(flow):
            for target in ready_successors(flow, start, env):
                self._enqueue(inst, ctx, target)
        self._persist(inst)
        return inst

    def run_until_blocked(self, inst: FlowInstance, pick: Picker | None = None) -> FlowInstance:
        """Dispatch ready activities until the instance needs a client, ends,
        or fails.  ``pick`` chooses among ready nodes (tests exercise every
        ordering with it); the default is FIFO."""
        with self._lock(inst.instance_id):
            if inst.status != "running":
                raise EngineError(f"instance {inst.instance_id} is {inst.status}, not running")
            self._run_locked(inst, pick)
        return inst

    def _run_locked(self, inst: FlowInstance, pick: Picker | None) -> None:
        ctx = self._context(inst)
        while inst.status == "running":
            if not inst.ready:
                if inst.pending:
                    inst.status = "awaiting-client"
                    self._event(inst, "blocked", {"pending": [p.node_id for p in inst.pending]})
                elif inst.end_reached:
                    inst.status = "finished"
                    self._event(inst, "finished", {})
                else:
                    self._fail(inst, "stalled: no ready activities and no end reached")
                break
            index = pick(list(inst.ready)) if pick is not None else 0
            node_id = inst.ready.pop(index)
            node = ctx.flow.node(node_id)
            if node is None:
                self._fail(inst, f"unknown node {node_id!r}")
                break
            try:
                self._execute_node(inst, ctx, node)
            except (EvalError, ServiceError, ValueError_) as err:
                inst.executing = 0
                self._fail(inst, str(err))
                break
        self._persist(inst)

    def _execute_node(self, inst: FlowInstance, ctx: FlowContext, node: Node) -> None:
        if node.kind == "end":
            inst.end_reached = True
            self._event(inst, "end-reached", {"node": node.id})
            return
        if node.kind == "decision":
            env = self._env(inst)
            targets = ready_successors(ctx.flow, node.id, env)
            self._event(inst, "decision", {"node": node.id, "selected": targets})
            for target in targets:
                self._enqueue(inst, ctx, target)
            self._recheck_withheld(inst, ctx)
            return
        if node.kind != "activity":
            return  # start nodes are never queued

        resolved = ctx.resolve_activity(node)
        if resolved is None:
            raise ServiceError(f"unresolved activity for node {node.id!r}")
        domain, activity = resolved

        env = self._env(inst)
        inputs: dict = {}
        for binding in node.bindings:
            inputs[binding.target_input] = clone(evaluate(binding.source, env))

        # The activity instance exists from dispatch to completion; building
        # an interaction payload *is* the user-facing activity's execution.
        inst.executing += 1
        self._event(inst, "dispatched", {"node": node.id, "activity": list(node.activity_ref or ())})
        if activity.kind == "user-facing":
            payload = build_payload(inst.instance_id, activity, domain, {k: clone(v) for k, v in inputs.items()})
            inst.executing -= 1
            inst.pending.append(
                PendingInteraction(node_id=node.id, activity_ref=node.activity_ref, inputs=inputs, payload=payload)
            )
            self._event(inst, "payload-queued", {"node": node.id})
            return  # successors fire once the response arrives

        if activity.kind == "service":
            binding = domain.service(activity.service_ref or "")
            if binding is None:
                raise ServiceError(f"unresolved service {activity.service_ref!r}")
            outputs = invoke(binding, inputs, activity, domain, self.store)
        else:  # compute: positional relay, transformation lives in bindings
            outputs = {
                out.name: clone(inputs.get(inp.name))
                for inp, out in zip(activity.inputs, activity.outputs)
            }
        inst.executing -= 1
        self._complete(inst, ctx, node, outputs)

    def _complete(self, inst: FlowInstance, ctx: FlowContext, node: Node, outputs: dict) -> None:
        resolved = ctx.resolve_activity(node)
        assert resolved is not None
        domain, activity = resolved
        recorded: dict = {}
        for f in activity.outputs:
            if f.name in outputs:
                value = outputs[f.name]
            else:
                value = default_value(f.type, ctx.record_domain(f.type.base) or domain)
            inst.produced[(node.id, f.name)] = clone(value)
            recorded[f.name] = value
        self._event(inst, "completed", {"node": node.id})

        if node.updates:
            env = self._env(inst, locals_=recorded)
            for update in node.updates:
                value = clone(evaluate(update.source, env))
                inst.variables[update.variable] = value
                self._event(inst, "var-updated", {"variable": update.variable, "value": value})

        env = self._env(inst)
        for target in ready_successors(ctx.flow, node.id, env):
            self._enqueue(inst, ctx, target)
        self._recheck_withheld(inst, ctx)

    def _enqueue(self, inst: FlowInstance, ctx: FlowContext, node_id: str) -> None:
        if node_id in inst.ready or node_id in inst.withheld:
            return
        if any(p.node_id == node_id for p in inst.pending):
            return
        node = ctx.flow.node(node_id)
        if node is not None and ctx.unmet_dependencies(node, inst.produced):
            inst.withheld.append(node_id)
        else:
            inst.ready.append(node_id)

    def _recheck_withheld(self, inst: FlowInstance, ctx: FlowContext) -> None:
        still = []
        for node_id in inst.withheld:
            node = ctx.flow.node(node_id)
            if node is not None and ctx.unmet_dependencies(node, inst.produced):
                still.append(node_id)
            else:
                inst.ready.append(node_id)
        inst.withheld = still

    # ---------------------------------------------------------- responses

    def apply_response(self, instance_id: int, response: InteractionResponse) -> list[Violation]:
        """Validate and record a client response against the head pending
        payload, then resume execution.  Violations are returned, never
        raised, and leave the instance awaiting the client."""
        inst = self.instance(instance_id)
        with self._lock(instance_id):
            if inst.status != "awaiting-client":
                raise NotAwaiting(f"instance {instance_id} is {inst.status}")
            if response.instance_id != instance_id:
                raise EngineError("response targets a different instance")
            head = inst.pending[0]
            violations = validate_response(head.payload, response)
            if violations:
                self._event(inst, "response-rejected",
                            {"node": head.node_id, "violations": [v.message for v in violations]})
                self._persist(inst)
                return violations

            ctx = self._context(inst)
            domain = self.deployment.domains[head.activity_ref[0]]
            activity = domain.activity(head.activity_ref[1])
            assert activity is not None
            outputs: dict = {}
            try:
                for f in activity.outputs:
                    if f.name in response.response and response.response[f.name] is not None:
                        rdomain = ctx.record_domain(f.type.base) or domain
                        outputs[f.name] = from_json(response.response[f.name], f.type, rdomain)
            except ValueError_ as err:
                violation = Violation(constraint="type", message=str(err))
                self._event(inst, "response-rejected", {"node": head.node_id, "violations": [str(err)]})
                self._persist(inst)
                return [violation]

            inst.pending.pop(0)
            self._event(inst, "response-applied", {"node": head.node_id})
            node = ctx.flow.node(head.node_id)
            assert node is not None
            inst.status = "running"
            try:
                self._complete(inst, ctx, node, outputs)
            except (EvalError, ServiceError, ValueError_) as err:
                self._fail(inst, str(err))
                self._persist(inst)
                return []
            self._run_locked(inst, None)
            return []

    # ------------------------------------------------------------- sandbox

    def list_instances(self, status: str | None = None) -> list[dict]:
        """Summaries of every instance, newest last; ``status`` filters on
        the lifecycle states or the literal ``sandbox``."""
        out = []
        for instance_id in sorted(self._instances):
            inst = self._instances[instance_id]
            if status == "sandbox" and not inst.sandbox:
                continue
            if status not in (None, "sandbox") and inst.status != status:
                continue
            out.append(
                {
                    "instanceId": inst.instance_id,
                    "flow": inst.flow_name,
                    "status": inst.status,
                    "sandbox": inst.sandbox,
                }
            )
        return out

    def inspect_instance(self, instance_id: int) -> dict:
        inst = self.instance(instance_id)
        with self._lock(instance_id):
            doc = self.snapshot_document(inst)
            doc["history"] = [e.document() for e in inst.history]
            doc["currentActivities"] = inst.current_activities()
            return doc

    def sandbox_patch(self, instance_id: int, path: str, value) -> None:
        """Replace a variable (``variables.name``) or a produced output
        (``outputs.node.field``) in place; only sandbox-mode instances."""
        inst = self.instance(instance_id)
        with self._lock(instance_id):
            if not inst.sandbox:
                raise EngineError(f"instance {instance_id} is not in sandbox")
            ctx = self._context(inst)
            parts = path.split(".")
            if len(parts) == 2 and parts[0] == "variables":
                decl = ctx.flow.variable(parts[1])
                if decl is None:
                    raise EngineError(f"flow has no variable {parts[1]!r}")
                domain = ctx.record_domain(decl.field.type.base)
                try:
                    inst.variables[parts[1]] = from_json(value, decl.field.type, domain)
                except ValueError_ as err:
                    raise EngineError(f"patch value for {path!r}: {err}") from err
            elif len(parts) == 3 and parts[0] == "outputs":
                node = ctx.flow.node(parts[1])
                resolved = ctx.resolve_activity(node) if node else None
                if resolved is None:
                    raise EngineError(f"flow has no activity node {parts[1]!r}")
                domain, activity = resolved
                field = activity.output(parts[2])
                if field is None:
                    raise EngineError(f"activity has no output {parts[2]!r}")
                if (parts[1], parts[2]) not in inst.produced:
                    raise EngineError(f"node {parts[1]!r} has not produced {parts[2]!r}")
                rdomain = ctx.record_domain(field.type.base) or domain
                try:
                    inst.produced[(parts[1], parts[2])] = from_json(value, field.type, rdomain)
                except ValueError_ as err:
                    raise EngineError(f"patch value for {path!r}: {err}") from err
            else:
                raise EngineError(f"unsupported patch path {path!r}")
            self._event(inst, "patched", {"path": path, "value": value})
            self._persist(inst)

    # ------------------------------------------------------------ plumbing

    def _env(self, inst: FlowInstance, locals_: dict | None = None) -> Env:
        node_outputs: dict = {}
        for (node_id, field), value in inst.produced.items():
            node_outputs.setdefault(node_id, {})[field] = value
        return Env(inst.variables, node_outputs, locals_)

    def _fail(self, inst: FlowInstance, message: str) -> None:
        inst.status = "failed"
        inst.failure = message
        self._event(inst, "failed", {"message": message})

    def _event(self, inst: FlowInstance, kind: str, detail: dict) -> None:
        inst.history.append(StateEvent(seq=len(inst.history) + 1, kind=kind, detail=detail))

    def snapshot_document(self, inst: FlowInstance) -> dict:
        return {
            "instanceId": inst.instance_id,
            "flow": inst.flow_name,
            "sandbox": inst.sandbox,
            "status": inst.status,
            "variables": clone(inst.variables),
            "produced": [[node_id, field, clone(value)] for (node_id, field), value in inst.produced.items()],
            "ready": list(inst.ready),
            "withheld": list(inst.withheld),
            "endReached": inst.end_reached,
            "pending": [
                {
                    "node": p.node_id,
                    "activity": list(p.activity_ref),
                    "inputs": clone(p.inputs),
                    "payload": payload_document(p.payload),
                }
                for p in inst.pending
            ],
            "executing": inst.executing,
            "failure": inst.failure,
        }

    def _persist(self, inst: FlowInstance) -> None:
        directory = self._instances_dir()
        if directory is None:
            return
        directory.mkdir(parents=True, exist_ok=True)
        snapshot = directory / f"{inst.instance_id}.snapshot.json"
        tmp = snapshot.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.snapshot_document(inst), ensure_ascii=False, indent=1), encoding="utf-8")
        tmp.replace(snapshot)
        events = directory / f"{inst.instance_id}.events.jsonl"
        persisted = getattr(inst, "_persisted_events", 0)
        if persisted < len(inst.history):
            with events.open("a", encoding="utf-8") as fh:
                for event in inst.history[persisted:]:
                    fh.write(json.dumps(event.document(), ensure_ascii=False) + "\n")
            inst._persisted_events = len(inst.history)  # type: ignore[attr-defined]


def _instance_from_snapshot(doc: dict) -> FlowInstance:
    pending = []
    for entry in doc.get("pending", []):
        payload = decode(json.dumps(entry["payload"]))
        assert isinstance(payload, InteractionPayload)
        pending.append(
            PendingInteraction(
                node_id=entry["node"],
                activity_ref=tuple(entry["activity"]),
                inputs=entry["inputs"],
                payload=payload,
            )
        )
    inst = FlowInstance(
        instance_id=doc["instanceId"],
        flow_name=doc["flow"],
        sandbox=doc.get("sandbox", False),
        status=doc["status"],
        variables=doc.get("variables", {}),
        produced={(n, f): v for n, f, v in doc.get("produced", [])},
        ready=list(doc.get("ready", [])),
        withheld=list(doc.get("withheld", [])),
        end_reached=doc.get("endReached", False),
        pending=pending,
        executing=doc.get("executing", 0),
        failure=doc.get("failure"),
    )
    inst._persisted_events = 0  # recount below once history is loaded  # type: ignore[attr-defined]
    return inst
