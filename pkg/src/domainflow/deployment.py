"""What is currently live on a server: domains plus flows with their mode.

Flows deploy only against already-deployed, valid domains.  Redeploying a
domain re-validates every deployed flow against the new definitions and is
rejected if any would break, so a running server can never hold an
inconsistent set.  Deployed sources persist under ``data/deploy/`` and are
reloaded on startup.
"""

from __future__ import annotations

import json
from pathlib import Path

from .diagnostics import Diagnostic, DslError
from .domain import DomainModel
from .domain_dsl import parse_domain
from .flow import Flow, validate_flow
from .flow_dsl import parse_flow

MODES = ("production", "sandbox")

# Top-level data-directory names the record store must not collide with.
RESERVED_DOMAIN_NAMES = {"instances", "deploy"}


class Deployment:
    def __init__(self, data_dir: Path | None = None):
        self._data_dir = data_dir
        self.domains: dict[str, DomainModel] = {}
        self.flows: dict[str, Flow] = {}
        self.flow_modes: dict[str, str] = {}
        self.domain_sources: dict[str, str] = {}
        self.flow_sources: dict[str, str] = {}
        if data_dir is not None:
            self._load(data_dir / "deploy")

    def _load(self, directory: Path) -> None:
        manifest = directory / "manifest.json"
        if not manifest.exists():
            return
        doc = json.loads(manifest.read_text(encoding="utf-8"))
        for name in doc.get("domains", []):
            text = (directory / f"{name}.domain").read_text(encoding="utf-8")
            self.domains[name] = parse_domain(text)
            self.domain_sources[name] = text
        for name, mode in doc.get("flows", {}).items():
            text = (directory / f"{name}.flow").read_text(encoding="utf-8")
            self.flows[name] = parse_flow(text, list(self.domains.values()))
            self.flow_sources[name] = text
            self.flow_modes[name] = mode

    def _save(self) -> None:
        if self._data_dir is None:
            return
        directory = self._data_dir / "deploy"
        directory.mkdir(parents=True, exist_ok=True)
        for name, text in self.domain_sources.items():
            (directory / f"{name}.domain").write_text(text, encoding="utf-8")
        for name, text in self.flow_sources.items():
            (directory / f"{name}.flow").write_text(text, encoding="utf-8")
        manifest = {"domains": sorted(self.domains), "flows": dict(sorted(self.flow_modes.items()))}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")

    def deploy_domain(self, text: str) -> list[Diagnostic]:
        """Parse, validate, and (re)deploy a domain; on redeploy, every
        deployed flow must still validate against the new definitions."""
        try:
            domain = parse_domain(text)
        except DslError as err:
            return err.diagnostics
        if domain.name in RESERVED_DOMAIN_NAMES:
            return [Diagnostic(f"domain name {domain.name!r} is reserved", path=domain.name)]

        candidate = dict(self.domains)
        candidate[domain.name] = domain
        problems: list[Diagnostic] = []
        for flow in self.flows.values():
            for diag in validate_flow(flow, candidate):
                problems.append(
                    Diagnostic(f"deployed flow {flow.name!r} would break: {diag.message}", path=diag.path)
                )
        if problems:
            return problems

        self.domains[domain.name] = domain
        self.domain_sources[domain.name] = text
        self._save()
        return []

    def deploy_flow(self, text: str, mode: str = "production") -> list[Diagnostic]:
        if mode not in MODES:
            return [Diagnostic(f"unknown mode {mode!r}")]
        try:
            flow = parse_flow(text, list(self.domains.values()))
        except DslError as err:
            return err.diagnostics
        self.flows[flow.name] = flow
        self.flow_sources[flow.name] = text
        self.flow_modes[flow.name] = mode
        self._save()
        return []

    def list_flows(self) -> list[dict]:
        return [{"name": name, "mode": self.flow_modes[name]} for name in sorted(self.flows)]
