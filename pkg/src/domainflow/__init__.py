"""domainflow: behavioral models executed server-side, with a coordination
protocol that lets fully generic clients display and gather data without any
knowledge of the application logic."""

from .coordination import (
    ElementDescriptor,
    InteractionPayload,
    InteractionResponse,
    Violation,
    build_payload,
    decode,
    encode,
    validate_response,
)
from .deployment import Deployment
from .diagnostics import Diagnostic, DslError
from .domain import (
    ActivityDef,
    Constraint,
    DataTypeDef,
    DisplaySpec,
    DomainModel,
    FieldDef,
    ServiceBinding,
    validate_domain,
)
from .domain_dsl import parse_domain, print_domain
from .engine import Engine, EngineError, FlowInstance, NotAwaiting, UnknownInstance
from .expr import EvalError, evaluate, parse_expr, print_expr, type_of
from .flow import Flow, Node, Transition, ready_successors, start_nodes, validate_flow
from .flow_dsl import parse_flow, print_flow
from .services import RecordStore, ServiceError, invoke, render_markdown
from .values import ValueType, conforms, default_value, from_json

__version__ = "0.1.0"

__all__ = [
    "ActivityDef",
    "Constraint",
    "DataTypeDef",
    "Deployment",
    "Diagnostic",
    "DisplaySpec",
    "DomainModel",
    "DslError",
    "ElementDescriptor",
    "Engine",
    "EngineError",
    "EvalError",
    "FieldDef",
    "Flow",
    "FlowInstance",
    "InteractionPayload",
    "InteractionResponse",
    "Node",
    "NotAwaiting",
    "RecordStore",
    "ServiceBinding",
    "ServiceError",
    "Transition",
    "UnknownInstance",
    "ValueType",
    "Violation",
    "build_payload",
    "conforms",
    "decode",
    "default_value",
    "encode",
    "evaluate",
    "from_json",
    "invoke",
    "parse_domain",
    "parse_expr",
    "parse_flow",
    "print_domain",
    "print_expr",
    "print_flow",
    "ready_successors",
    "render_markdown",
    "start_nodes",
    "type_of",
    "validate_domain",
    "validate_flow",
    "validate_response",
]
