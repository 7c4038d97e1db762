"""Admin command line: validate and deploy models, serve, inspect and patch
instances, and run the generic terminal client.

Exit code 0 on success; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import urllib.error
import urllib.request
from pathlib import Path

from . import term_client
from .diagnostics import DslError
from .domain_dsl import parse_domain
from .flow_dsl import parse_flow
from .server import App, serve_forever

DEFAULT_SERVER = "http://127.0.0.1:8040"


def _call(method: str, url: str, data: bytes | None = None) -> tuple[int, dict]:
    request = urllib.request.Request(
        url, data=data, method=method, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(request) as reply:
            return reply.status, json.loads(reply.read().decode("utf-8"))
    except urllib.error.HTTPError as err:
        try:
            return err.code, json.loads(err.read().decode("utf-8"))
        except json.JSONDecodeError:
            return err.code, {}
    except urllib.error.URLError as err:
        print(f"cannot reach server: {err}", file=sys.stderr)
        raise SystemExit(2)


def _read_sources(paths: list[str]) -> list[tuple[Path, str]]:
    out = []
    for p in paths:
        path = Path(p)
        try:
            out.append((path, path.read_text(encoding="utf-8")))
        except OSError as err:
            print(f"{p}: {err}", file=sys.stderr)
            raise SystemExit(2)
    return out


def cmd_validate(args) -> int:
    """Parse and validate locally; domains first so flows can resolve them."""
    sources = _read_sources(args.paths)
    domains = []
    failures = 0
    for path, text in sources:
        if path.suffix == ".flow":
            continue
        try:
            domains.append(parse_domain(text))
        except DslError as err:
            failures += 1
            for d in err.diagnostics:
                print(f"{path}: {d}", file=sys.stderr)
    for path, text in sources:
        if path.suffix != ".flow":
            continue
        try:
            parse_flow(text, domains)
        except DslError as err:
            failures += 1
            for d in err.diagnostics:
                print(f"{path}: {d}", file=sys.stderr)
    if failures == 0:
        print(f"ok: {len(sources)} file(s) valid")
    return 1 if failures else 0


def cmd_deploy(args) -> int:
    failures = 0
    for path, text in _read_sources(args.paths):
        if path.suffix == ".flow":
            mode = "sandbox" if args.sandbox else "production"
            url = f"{args.server}/deploy/flow?mode={mode}"
        else:
            url = f"{args.server}/deploy/domain"
        status, doc = _call("POST", url, text.encode("utf-8"))
        if status != 200:
            failures += 1
            for d in doc.get("diagnostics", [doc.get("error", "deploy failed")]):
                print(f"{path}: {d}", file=sys.stderr)
        else:
            print(f"deployed {path.name}")
    return 1 if failures else 0


def cmd_flows(args) -> int:
    _, doc = _call("GET", f"{args.server}/flows")
    for entry in doc.get("flows", []):
        print(f"{entry['name']}\t{entry['mode']}")
    return 0


def cmd_instances(args) -> int:
    url = f"{args.server}/instances"
    if args.status:
        url += f"?status={args.status}"
    _, doc = _call("GET", url)
    for entry in doc.get("instances", []):
        mode = "sandbox" if entry.get("sandbox") else "production"
        print(f"{entry['instanceId']}\t{entry['flow']}\t{entry['status']}\t{mode}")
    return 0


def cmd_inspect(args) -> int:
    status, doc = _call("GET", f"{args.server}/instances/{args.instance_id}")
    if status != 200:
        print(doc.get("error", "inspect failed"), file=sys.stderr)
        return 1
    print(json.dumps(doc, indent=1, ensure_ascii=False))
    return 0


def cmd_patch(args) -> int:
    try:
        value = json.loads(args.value)
    except json.JSONDecodeError:
        value = args.value  # bare string convenience
    data = json.dumps({"path": args.path, "value": value}).encode("utf-8")
    status, doc = _call("PATCH", f"{args.server}/instances/{args.instance_id}/state", data)
    if status != 200:
        print(doc.get("error", "patch failed"), file=sys.stderr)
        return 1
    print("patched")
    return 0


def cmd_serve(args) -> int:
    data_dir = Path(args.data_dir) if args.data_dir else None
    app = App(
        data_dir=data_dir,
        ui_dir=Path(args.ui_dir) if args.ui_dir else None,
        customizations_dir=Path(args.customizations_dir) if args.customizations_dir else None,
    )
    failures = 0
    for path, text in _read_sources(args.deploy or []):
        if path.suffix == ".flow":
            diags = app.deployment.deploy_flow(text, "sandbox" if args.sandbox_flows else "production")
        else:
            diags = app.deployment.deploy_domain(text)
        for d in diags:
            failures += 1
            print(f"{path}: {d}", file=sys.stderr)
    if failures:
        return 1
    serve_forever(app, host=args.host, port=args.port)
    return 0


def cmd_run(args) -> int:
    try:
        return term_client.run(args.server, args.flow)
    except term_client.ClientError as err:
        print(err, file=sys.stderr)
        return 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="domainflow")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate model files locally")
    p.add_argument("paths", nargs="+", help=".domain and .flow files")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("deploy", help="deploy model files to a running server")
    p.add_argument("paths", nargs="+")
    p.add_argument("--server", default=DEFAULT_SERVER)
    p.add_argument("--sandbox", action="store_true", help="deploy flows in sandbox mode")
    p.set_defaults(fn=cmd_deploy)

    p = sub.add_parser("flows", help="list deployed flows")
    p.add_argument("--server", default=DEFAULT_SERVER)
    p.set_defaults(fn=cmd_flows)

    p = sub.add_parser("instances", help="list instances")
    p.add_argument("--server", default=DEFAULT_SERVER)
    p.add_argument("--status", help="running | awaiting-client | finished | failed | sandbox")
    p.set_defaults(fn=cmd_instances)

    p = sub.add_parser("inspect", help="full state of one instance")
    p.add_argument("instance_id", type=int)
    p.add_argument("--server", default=DEFAULT_SERVER)
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("patch", help="sandbox-patch a variable or produced output")
    p.add_argument("instance_id", type=int)
    p.add_argument("path", help="variables.<name> or outputs.<node>.<field>")
    p.add_argument("value", help="JSON value")
    p.add_argument("--server", default=DEFAULT_SERVER)
    p.set_defaults(fn=cmd_patch)

    p = sub.add_parser("serve", help="start the HTTP server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8040)
    p.add_argument("--data-dir", help="instance store and record logs; omit for in-memory")
    p.add_argument("--deploy", nargs="*", help="model files to deploy at startup")
    p.add_argument("--sandbox-flows", action="store_true", help="startup flows deploy in sandbox mode")
    p.add_argument("--ui-dir", help="static directory for the web client")
    p.add_argument("--customizations-dir", help="static directory for client overrides")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("run", help="drive a flow from the terminal")
    p.add_argument("--server", default=DEFAULT_SERVER)
    p.add_argument("--flow", required=True)
    p.set_defaults(fn=cmd_run)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
