"""HTTP facade over deployment, instance lifecycle, and the coordination
exchanges.

Interaction is pull-based: clients launch a flow, receive the pending
payload, and post responses until the instance finishes.  Payload bodies
are the canonical wire encoding and nothing else; the current activity's
name travels in the ``X-Activity`` response header so client-side
customization lookup never leaks into the wire document.

Endpoints (JSON in, JSON out):

- ``POST /deploy/domain``           body is domain-DSL text
- ``POST /deploy/flow?mode=``       body is flow-DSL text, mode defaults to production
- ``GET  /flows``                   deployed flows with their modes
- ``POST /flows/{name}/instances``  launch; body may carry ``{"initial": {...}}``
- ``GET  /instances/{id}/pending``  current payload, or the instance status
- ``POST /instances/{id}/response`` wire-format response
- ``GET  /instances?status=``       summaries (sandbox tooling)
- ``GET  /instances/{id}``          full state including history
- ``PATCH /instances/{id}/state``   body ``{"path": ..., "value": ...}``

Errors: 404 unknown instance/flow, 409 response when not awaiting a client
(or patching outside sandbox), 422 for validation and constraint problems.
Binds to localhost by default; there is no authentication in v1.
"""

from __future__ import annotations

import json
import mimetypes
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .coordination import (
    InteractionResponse,
    WireError,
    canonical_bytes,
    decode,
    encode,
    violations_document,
)
from .deployment import Deployment
from .engine import Engine, EngineError, FlowInstance, NotAwaiting, UnknownInstance

_INSTANCE_PATH = re.compile(r"^/instances/(\d+)(/pending|/response|/state)?$")
_LAUNCH_PATH = re.compile(r"^/flows/([^/]+)/instances$")


class App:
    """Deployment + engine behind one lock-free facade; the engine serializes
    per instance, the deployment mutates under its own lock here."""

    def __init__(self, data_dir: Path | None = None,
                 ui_dir: Path | None = None, customizations_dir: Path | None = None):
        self.deployment = Deployment(data_dir)
        self.engine = Engine(self.deployment, data_dir)
        self.ui_dir = ui_dir
        self.customizations_dir = customizations_dir
        self._deploy_lock = threading.Lock()

    # Each handler returns (http status, body bytes or doc, extra headers).

    def deploy_domain(self, text: str):
        with self._deploy_lock:
            diagnostics = self.deployment.deploy_domain(text)
        if diagnostics:
            return 422, {"diagnostics": [str(d) for d in diagnostics]}, {}
        # Re-read stored records through the new definitions.
        for domain in self.deployment.domains.values():
            self.engine.store.refresh_domain(domain)
        return 200, {"ok": True}, {}

    def deploy_flow(self, text: str, mode: str):
        with self._deploy_lock:
            diagnostics = self.deployment.deploy_flow(text, mode)
        if diagnostics:
            return 422, {"diagnostics": [str(d) for d in diagnostics]}, {}
        return 200, {"ok": True}, {}

    def launch(self, flow_name: str, body: bytes):
        initial = None
        if body.strip():
            try:
                doc = json.loads(body.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                return 422, {"error": "launch body must be JSON"}, {}
            if not isinstance(doc, dict):
                return 422, {"error": "launch body must be an object"}, {}
            initial = doc.get("initial")
        try:
            inst = self.engine.create_instance(flow_name, initial)
        except UnknownInstance as err:
            return 404, {"error": str(err)}, {}
        except EngineError as err:
            return 422, {"error": str(err)}, {}
        self.engine.run_until_blocked(inst)
        return self._pending_reply(inst)

    def pending(self, instance_id: int):
        try:
            inst = self.engine.instance(instance_id)
        except UnknownInstance as err:
            return 404, {"error": str(err)}, {}
        return self._pending_reply(inst)

    def respond(self, instance_id: int, body: bytes):
        try:
            message = decode(body)
        except WireError as err:
            return 422, {"error": str(err)}, {}
        if not isinstance(message, InteractionResponse):
            return 422, {"error": "expected a response document"}, {}
        try:
            violations = self.engine.apply_response(instance_id, message)
        except UnknownInstance as err:
            return 404, {"error": str(err)}, {}
        except NotAwaiting as err:
            return 409, {"error": str(err)}, {}
        except EngineError as err:
            return 422, {"error": str(err)}, {}
        if violations:
            return 422, violations_document(instance_id, violations), {}
        return self._pending_reply(self.engine.instance(instance_id))

    def list_instances(self, status: str | None):
        return 200, {"instances": self.engine.list_instances(status)}, {}

    def inspect(self, instance_id: int):
        try:
            return 200, self.engine.inspect_instance(instance_id), {}
        except UnknownInstance as err:
            return 404, {"error": str(err)}, {}

    def patch_state(self, instance_id: int, body: bytes):
        try:
            doc = json.loads(body.decode("utf-8"))
            path, value = doc["path"], doc["value"]
        except Exception:
            return 422, {"error": "patch body must be {\"path\": ..., \"value\": ...}"}, {}
        try:
            self.engine.sandbox_patch(instance_id, path, value)
        except UnknownInstance as err:
            return 404, {"error": str(err)}, {}
        except EngineError as err:
            status = 409 if "not in sandbox" in str(err) else 422
            return status, {"error": str(err)}, {}
        return 200, {"ok": True}, {}

    def _pending_reply(self, inst: FlowInstance):
        payload = inst.pending_payload
        if inst.status == "awaiting-client" and payload is not None:
            headers = {"X-Activity": inst.pending[0].activity_ref[1]}
            return 200, encode(payload), headers
        doc = {"instanceId": inst.instance_id, "status": inst.status}
        if inst.failure:
            doc["failure"] = inst.failure
        return 200, doc, {}


class Handler(BaseHTTPRequestHandler):
    app: App  # set by make_server
    protocol_version = "HTTP/1.1"

    def log_message(self, format, *args):  # quiet by default
        pass

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length else b""

    def _send(self, status: int, body, headers: dict) -> None:
        data = body if isinstance(body, bytes) else canonical_bytes(body)
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        for key, value in headers.items():
            self.send_header(key, value)
        self.end_headers()
        self.wfile.write(data)

    def _route(self, method: str) -> None:
        app = self.app
        path, _, query = self.path.partition("?")
        params = dict(p.split("=", 1) for p in query.split("&") if "=" in p)

        if method == "POST" and path == "/deploy/domain":
            self._send(*app.deploy_domain(self._body().decode("utf-8")))
            return
        if method == "POST" and path == "/deploy/flow":
            self._send(*app.deploy_flow(self._body().decode("utf-8"), params.get("mode", "production")))
            return
        if method == "GET" and path == "/flows":
            self._send(200, {"flows": app.deployment.list_flows()}, {})
            return

        m = _LAUNCH_PATH.match(path)
        if m and method == "POST":
            self._send(*app.launch(m.group(1), self._body()))
            return

        if method == "GET" and path == "/instances":
            self._send(*app.list_instances(params.get("status")))
            return

        m = _INSTANCE_PATH.match(path)
        if m:
            instance_id = int(m.group(1))
            tail = m.group(2)
            if method == "GET" and tail == "/pending":
                self._send(*app.pending(instance_id))
                return
            if method == "POST" and tail == "/response":
                self._send(*app.respond(instance_id, self._body()))
                return
            if method == "PATCH" and tail == "/state":
                self._send(*app.patch_state(instance_id, self._body()))
                return
            if method == "GET" and tail is None:
                self._send(*app.inspect(instance_id))
                return

        if method == "GET" and self._static(path):
            return
        self._send(404, {"error": f"no route for {method} {path}"}, {})

    def _static(self, path: str) -> bool:
        """Serve the generic web client and its customization overrides."""
        app = self.app
        root: Path | None = None
        rel = ""
        if path == "/" or path.startswith("/ui"):
            root = app.ui_dir
            rel = path[3:].lstrip("/") if path.startswith("/ui") else ""
            if rel == "":
                rel = "index.html"
        elif path.startswith("/customizations/"):
            root = app.customizations_dir
            rel = path[len("/customizations/"):]
        if root is None:
            return False
        target = (root / rel).resolve()
        try:
            target.relative_to(root.resolve())
        except ValueError:
            return False
        if not target.is_file():
            return False
        data = target.read_bytes()
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)
        return True

    def do_GET(self):
        self._route("GET")

    def do_POST(self):
        self._route("POST")

    def do_PATCH(self):
        self._route("PATCH")


def make_server(app: App, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (Handler,), {"app": app})
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(app: App, host: str = "127.0.0.1", port: int = 8040) -> None:
    server = make_server(app, host, port)
    print(f"domainflow server on http://{host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    finally:
        server.server_close()
