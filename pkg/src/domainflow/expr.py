"""Transition-condition and binding expression language.

A small, statically typed expression core: literals, dot-path references
into flow variables and node outputs, boolean connectives, comparisons,
arithmetic, and ``in`` membership over set values.  Guards must type-check
to Boolean before a flow is accepted, so evaluation errors are limited to
missing bindings and division by zero.

Semantics notes:

- ``and``/``or`` short-circuit; all other operators are strict.
- Ordering (``<`` family) is defined for Integer, Float, and String; both
  operands of any comparison must share a type.
- Arithmetic requires matching numeric operands.  Integer ``/`` is floor
  division; Float ``/`` is true division.  Division by zero raises.
- Records expose their fields plus the implicit ``id: Integer``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Union

from .values import RECORD_ID_KEY, Value, ValueType, is_primitive

BOOL = ValueType("Boolean")
INT = ValueType("Integer")
FLOAT = ValueType("Float")
STRING = ValueType("String")

_ORDERABLE = {"Integer", "Float", "String"}
_NUMERIC = {"Integer", "Float"}


class ExprError(Exception):
    """Syntax error in an expression; ``col`` is a 0-based offset."""

    def __init__(self, message: str, col: int = 0):
        self.col = col
        super().__init__(message)


class TypeErr(Exception):
    """Static type error in an expression."""


class EvalError(Exception):
    """Runtime evaluation failure: missing name or division by zero."""


@dataclass(frozen=True)
class Lit:
    value: Value
    type: ValueType


@dataclass(frozen=True)
class Ref:
    path: tuple[str, ...]


@dataclass(frozen=True)
class Unary:
    op: str  # "not" | "neg"
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # and or == != < <= > >= + - * / in
    left: "Expr"
    right: "Expr"


Expr = Union[Lit, Ref, Unary, Binary]


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<float>\d+\.\d+)|(?P<int>\d+)|(?P<str>\"(?:[^\"\\]|\\.)*\")"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>==|!=|<=|>=|[()<>+\-*/.]))"
)

_KEYWORDS = {"and", "or", "not", "in", "true", "false"}


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if not m or m.end() == pos:
            rest = src[pos:].lstrip()
            if not rest:
                break
            raise ExprError(f"unexpected character {rest[0]!r}", col=len(src) - len(rest))
        pos = m.end()
        for kind in ("float", "int", "str", "ident", "op"):
            text = m.group(kind)
            if text is not None:
                tokens.append((kind, text, m.start(kind)))
                break
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> tuple[str, str, int]:
        tok = self.peek()
        if tok is None:
            raise ExprError("unexpected end of expression", col=len(self.src))
        self.i += 1
        return tok

    def accept(self, text: str) -> bool:
        tok = self.peek()
        if tok and tok[1] == text:
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> None:
        tok = self.peek()
        if tok is None or tok[1] != text:
            col = tok[2] if tok else len(self.src)
            raise ExprError(f"expected {text!r}", col=col)
        self.i += 1

    # precedence: or < and < not < comparison/in < additive < multiplicative < unary
    def parse(self) -> Expr:
        e = self.or_expr()
        tok = self.peek()
        if tok is not None:
            raise ExprError(f"trailing input at {tok[1]!r}", col=tok[2])
        return e

    def or_expr(self) -> Expr:
        e = self.and_expr()
        while self.accept("or"):
            e = Binary("or", e, self.and_expr())
        return e

    def and_expr(self) -> Expr:
        e = self.not_expr()
        while self.accept("and"):
            e = Binary("and", e, self.not_expr())
        return e

    def not_expr(self) -> Expr:
        if self.accept("not"):
            return Unary("not", self.not_expr())
        return self.comparison()

    def comparison(self) -> Expr:
        e = self.additive()
        tok = self.peek()
        if tok and tok[1] in ("==", "!=", "<", "<=", ">", ">=", "in"):
            self.i += 1
            return Binary(tok[1], e, self.additive())
        return e

    def additive(self) -> Expr:
        e = self.multiplicative()
        while True:
            tok = self.peek()
            if tok and tok[1] in ("+", "-"):
                self.i += 1
                e = Binary(tok[1], e, self.multiplicative())
            else:
                return e

    def multiplicative(self) -> Expr:
        e = self.unary()
        while True:
            tok = self.peek()
            if tok and tok[1] in ("*", "/"):
                self.i += 1
                e = Binary(tok[1], e, self.unary())
            else:
                return e

    def unary(self) -> Expr:
        if self.accept("-"):
            operand = self.unary()
            # Fold negative numeric literals so printing is a round trip.
            if isinstance(operand, Lit) and operand.type in (INT, FLOAT):
                return Lit(-operand.value, operand.type)
            return Unary("neg", operand)
        return self.primary()

    def primary(self) -> Expr:
        kind, text, col = self.next()
        if text == "(":
            e = self.or_expr()
            self.expect(")")
            return e
        if kind == "float":
            return Lit(float(text), FLOAT)
        if kind == "int":
            return Lit(int(text), INT)
        if kind == "str":
            body = text[1:-1]
            body = body.replace('\\"', '"').replace("\\\\", "\\").replace("\\n", "\n")
            return Lit(body, STRING)
        if kind == "ident":
            if text == "true":
                return Lit(True, BOOL)
            if text == "false":
                return Lit(False, BOOL)
            if text in _KEYWORDS:
                raise ExprError(f"unexpected keyword {text!r}", col=col)
            path = [text]
            while self.accept("."):
                part = self.next()
                if part[0] != "ident" or part[1] in _KEYWORDS:
                    raise ExprError("expected a name after '.'", col=part[2])
                path.append(part[1])
            return Ref(tuple(path))
        raise ExprError(f"unexpected token {text!r}", col=col)


def parse_expr(src: str) -> Expr:
    return _Parser(src).parse()


# ------------------------------------------------------------- type checker

class Scope:
    """Static names visible to an expression: flow variables, node outputs,
    and the record types needed to walk dot-paths."""

    def __init__(
        self,
        variables: dict[str, ValueType],
        node_outputs: dict[str, dict[str, ValueType]] | None = None,
        resolve_type: Callable[[str], "object | None"] | None = None,
        locals_: dict[str, ValueType] | None = None,
    ):
        self.variables = variables
        self.node_outputs = node_outputs or {}
        self.resolve_type = resolve_type or (lambda name: None)
        self.locals = locals_ or {}


def _walk_fields(base: ValueType, path: tuple[str, ...], start: int, scope: Scope) -> ValueType:
    current = base
    for seg in path[start:]:
        if current.is_set:
            raise TypeErr(f"cannot take field {seg!r} of a set value")
        if is_primitive(current.base):
            raise TypeErr(f"{current.base} value has no field {seg!r}")
        if seg == RECORD_ID_KEY:
            current = INT
            continue
        type_def = scope.resolve_type(current.base)
        if type_def is None:
            raise TypeErr(f"unknown record type {current.base!r}")
        field = next((f for f in type_def.fields if f.name == seg), None)
        if field is None:
            raise TypeErr(f"record {current.base!r} has no field {seg!r}")
        current = field.type
    return current


def type_of(e: Expr, scope: Scope) -> ValueType:
    if isinstance(e, Lit):
        return e.type
    if isinstance(e, Ref):
        head = e.path[0]
        if head in scope.locals:
            return _walk_fields(scope.locals[head], e.path, 1, scope)
        if head in scope.variables:
            return _walk_fields(scope.variables[head], e.path, 1, scope)
        if head in scope.node_outputs:
            if len(e.path) < 2:
                raise TypeErr(f"{head!r} is a node; name one of its outputs")
            outputs = scope.node_outputs[head]
            if e.path[1] not in outputs:
                raise TypeErr(f"node {head!r} has no output {e.path[1]!r}")
            return _walk_fields(outputs[e.path[1]], e.path, 2, scope)
        raise TypeErr(f"unknown name {head!r}")
    if isinstance(e, Unary):
        t = type_of(e.operand, scope)
        if e.op == "not":
            if t != BOOL:
                raise TypeErr("'not' needs a Boolean operand")
            return BOOL
        if t.is_set or t.base not in _NUMERIC:
            raise TypeErr("negation needs a numeric operand")
        return t
    assert isinstance(e, Binary)
    lt, rt = type_of(e.left, scope), type_of(e.right, scope)
    op = e.op
    if op in ("and", "or"):
        if lt != BOOL or rt != BOOL:
            raise TypeErr(f"{op!r} needs Boolean operands")
        return BOOL
    if op == "in":
        if not rt.is_set or lt.is_set or lt.base != rt.base:
            raise TypeErr("'in' needs a scalar and a set of the same element type")
        return BOOL
    if op in ("==", "!="):
        if lt != rt:
            raise TypeErr(f"cannot compare {lt} with {rt}")
        return BOOL
    if op in ("<", "<=", ">", ">="):
        if lt != rt or lt.is_set or lt.base not in _ORDERABLE:
            raise TypeErr(f"cannot order {lt} with {rt}")
        return BOOL
    # + - * /
    if lt != rt or lt.is_set or lt.base not in _NUMERIC:
        raise TypeErr(f"arithmetic needs matching numeric operands, got {lt} and {rt}")
    return lt


# --------------------------------------------------------------- evaluator

class Env:
    """Runtime names: flow variables by name, node outputs as ``node.field``,
    optional locals that shadow both (used by ``set`` updates)."""

    def __init__(
        self,
        variables: dict[str, Value],
        node_outputs: dict[str, dict[str, Value]] | None = None,
        locals_: dict[str, Value] | None = None,
    ):
        self.variables = variables
        self.node_outputs = node_outputs or {}
        self.locals = locals_ or {}


def _walk_value(value: Value, path: tuple[str, ...], start: int) -> Value:
    current = value
    for seg in path[start:]:
        if not isinstance(current, dict) or seg not in current:
            raise EvalError(f"value has no field {seg!r}")
        current = current[seg]
    return current


def evaluate(e: Expr, env: Env) -> Value:
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, Ref):
        head = e.path[0]
        if head in env.locals:
            return _walk_value(env.locals[head], e.path, 1)
        if head in env.variables:
            return _walk_value(env.variables[head], e.path, 1)
        if head in env.node_outputs:
            if len(e.path) < 2:
                raise EvalError(f"{head!r} is a node; name one of its outputs")
            outputs = env.node_outputs[head]
            if e.path[1] not in outputs:
                raise EvalError(f"node {head!r} has not produced output {e.path[1]!r}")
            return _walk_value(outputs[e.path[1]], e.path, 2)
        raise EvalError(f"missing variable {head!r}")
    if isinstance(e, Unary):
        if e.op == "not":
            return not evaluate(e.operand, env)
        return -evaluate(e.operand, env)
    assert isinstance(e, Binary)
    op = e.op
    if op == "and":
        return bool(evaluate(e.left, env)) and bool(evaluate(e.right, env))
    if op == "or":
        return bool(evaluate(e.left, env)) or bool(evaluate(e.right, env))
    left = evaluate(e.left, env)
    right = evaluate(e.right, env)
    if op == "in":
        return any(left == member for member in right)
    if op == "==":
        return left == right
    if op == "!=":
        return left != right
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    if op == ">=":
        return left >= right
    if op == "+":
        return left + right
    if op == "-":
        return left - right
    if op == "*":
        return left * right
    if op == "/":
        if right == 0:
            raise EvalError("division by zero")
        if isinstance(left, int):
            return left // right
        return left / right
    raise EvalError(f"unknown operator {op!r}")


# ----------------------------------------------------------------- printer

def _wrap_unary(sub: Expr) -> str:
    # Unary expressions are not self-parenthesizing, so wrap them whenever
    # they appear as an operand; Lit/Ref are atomic and Binary wraps itself.
    text = print_expr(sub)
    return f"({text})" if isinstance(sub, Unary) else text


def print_expr(e: Expr) -> str:
    """Canonical text; every operation is parenthesized as needed so the
    printed form re-parses to the identical tree."""
    if isinstance(e, Lit):
        if e.type == STRING:
            body = str(e.value).replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
            return f'"{body}"'
        if e.type == BOOL:
            return "true" if e.value else "false"
        return repr(e.value)
    if isinstance(e, Ref):
        return ".".join(e.path)
    if isinstance(e, Unary):
        if e.op == "not":
            return f"not {_wrap_unary(e.operand)}"
        return f"-{_wrap_unary(e.operand)}"
    assert isinstance(e, Binary)
    return f"({_wrap_unary(e.left)} {e.op} {_wrap_unary(e.right)})"


def free_refs(e: Expr) -> list[tuple[str, ...]]:
    """All dot-paths referenced by the expression, in evaluation order."""
    if isinstance(e, Lit):
        return []
    if isinstance(e, Ref):
        return [e.path]
    if isinstance(e, Unary):
        return free_refs(e.operand)
    assert isinstance(e, Binary)
    return free_refs(e.left) + free_refs(e.right)
