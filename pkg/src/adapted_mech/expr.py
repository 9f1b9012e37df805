"""Arithmetic expressions over bundle coordinates with exact jet evaluation.

The DSL is plain infix arithmetic over the chart coordinates ``x1..xn``,
``y1..yn`` and named parameters.  Operator precedence, tightest first:

    ^  (right associative)  >  unary -  >  * /  >  + -

``sin``, ``cos``, ``exp``, ``log``, ``sqrt`` are the built-in functions.
Every other identifier must be declared as a parameter before parsing.

Evaluation propagates second-order jets (value, gradient, hessian) through
the tree with the exact chain rule; nothing here is finite-differenced.
Gradients are ordered ``(x1..xn, y1..yn)``.  Expressions are immutable and
evaluation is pure, so trees and parameter tables can be shared freely.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "Expression", "Const", "Coord", "Param", "Neg", "Fun",
    "Add", "Sub", "Mul", "Div", "Pow",
    "Jet2", "ExprError", "ExprSyntaxError", "UnknownIdentifierError",
    "CoordinateIndexError", "EvalDomainError",
    "parse", "print_expression", "eval_jet", "eval_value_grad", "eval_value",
    "free_coordinates", "free_parameters",
]


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position + 1})")
        self.position = position


class UnknownIdentifierError(ExprSyntaxError):
    def __init__(self, name: str, position: int):
        super().__init__(f"unknown identifier {name!r}", position)
        self.name = name


class CoordinateIndexError(ExprSyntaxError):
    def __init__(self, name: str, n: int, position: int):
        super().__init__(f"coordinate {name!r} out of range for dimension {n}", position)
        self.name = name


class EvalDomainError(ExprError):
    """Raised when evaluation leaves the real domain (log/sqrt/division)."""

    def __init__(self, message: str, subexpr: "Expression"):
        super().__init__(f"{message} in {print_expression(subexpr)!r}")
        self.subexpr = subexpr


# --- AST -------------------------------------------------------------------

class Expression:
    __slots__ = ()

    def __str__(self) -> str:
        return print_expression(self)


@dataclass(frozen=True)
class Const(Expression):
    value: float


@dataclass(frozen=True)
class Coord(Expression):
    axis: str   # "x" or "y"
    index: int  # 1-based


@dataclass(frozen=True)
class Param(Expression):
    name: str


@dataclass(frozen=True)
class Neg(Expression):
    arg: Expression


@dataclass(frozen=True)
class Fun(Expression):
    name: str   # sin | cos | exp | log | sqrt
    arg: Expression


@dataclass(frozen=True)
class Add(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Sub(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Mul(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Div(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Pow(Expression):
    base: Expression
    exponent: Expression


FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")

_COORD_RE = re.compile(r"^([xy])([0-9]+)$")
_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.lastgroup is None:
            # Skip trailing whitespace before declaring an error.
            rest = text[pos:]
            if rest.strip() == "":
                break
            bad = pos + len(rest) - len(rest.lstrip())
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, n: int, params: frozenset[str]):
        self.text = text
        self.n = n
        self.params = params
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is None:
            raise ExprSyntaxError("unexpected end of input", len(self.text))
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        tok = self.peek()
        if tok is None or tok[0] != "op" or tok[1] != op:
            at = tok[2] if tok else len(self.text)
            raise ExprSyntaxError(f"expected {op!r}", at)
        self.pos += 1

    # expr := term (('+'|'-') term)*
    def parse_expr(self) -> Expression:
        node = self.parse_term()
        while (tok := self.peek()) and tok[0] == "op" and tok[1] in "+-":
            self.pos += 1
            right = self.parse_term()
            node = Add(node, right) if tok[1] == "+" else Sub(node, right)
        return node

    # term := unary (('*'|'/') unary)*
    def parse_term(self) -> Expression:
        node = self.parse_unary()
        while (tok := self.peek()) and tok[0] == "op" and tok[1] in "*/":
            self.pos += 1
            right = self.parse_unary()
            node = Mul(node, right) if tok[1] == "*" else Div(node, right)
        return node

    # unary := '-' unary | power
    def parse_unary(self) -> Expression:
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] == "-":
            self.pos += 1
            return Neg(self.parse_unary())
        return self.parse_power()

    # power := atom ('^' unary)?   -- right associative, binds above unary minus
    def parse_power(self) -> Expression:
        base = self.parse_atom()
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] == "^":
            self.pos += 1
            return Pow(base, self.parse_unary())
        return base

    def parse_atom(self) -> Expression:
        tok = self.next()
        kind, value, at = tok
        if kind == "number":
            return Const(float(value))
        if kind == "op" and value == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        if kind == "ident":
            return self.resolve_identifier(value, at)
        raise ExprSyntaxError(f"unexpected token {value!r}", at)

    def resolve_identifier(self, name: str, at: int) -> Expression:
        if name in FUNCTIONS:
            self.expect_op("(")
            arg = self.parse_expr()
            self.expect_op(")")
            return Fun(name, arg)
        m = _COORD_RE.match(name)
        if m:
            index = int(m.group(2))
            if not 1 <= index <= self.n:
                raise CoordinateIndexError(name, self.n, at)
            return Coord(m.group(1), index)
        if name in self.params:
            return Param(name)
        raise UnknownIdentifierError(name, at)


def parse(text: str, n: int, params: Iterable[str] = ()) -> Expression:
    """Parse ``text`` over an ``n``-dimensional chart with declared parameters."""
    if n < 1:
        raise ValueError("dimension must be >= 1")
    if not text or text.strip() == "":
        raise ExprSyntaxError("empty expression", 0)
    parser = _Parser(text, n, frozenset(params))
    node = parser.parse_expr()
    tok = parser.peek()
    if tok is not None:
        raise ExprSyntaxError(f"unexpected trailing token {tok[1]!r}", tok[2])
    return node


# --- printing --------------------------------------------------------------

# Precedence levels used by the printer; parenthesize a child whenever its
# level is below what its syntactic slot requires.
_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _prec(e: Expression) -> int:
    if isinstance(e, (Add, Sub)):
        return _PREC_ADD
    if isinstance(e, (Mul, Div)):
        return _PREC_MUL
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, Pow):
        return _PREC_POW
    return _PREC_ATOM


def _const_text(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _emit(e: Expression, minimum: int) -> str:
    if isinstance(e, Const):
        text = _const_text(e.value)
        # A negative literal reads back as a Neg node; parenthesizing keeps
        # the emitted text unambiguous inside larger expressions.
        if text.startswith("-") and minimum > _PREC_NEG:
            return f"({text})"
        return text
    if isinstance(e, Coord):
        text = f"{e.axis}{e.index}"
    elif isinstance(e, Param):
        text = e.name
    elif isinstance(e, Fun):
        text = f"{e.name}({_emit(e.arg, _PREC_ADD)})"
    elif isinstance(e, Neg):
        text = f"-{_emit(e.arg, _PREC_NEG)}"
    elif isinstance(e, Add):
        text = f"{_emit(e.left, _PREC_ADD)} + {_emit(e.right, _PREC_ADD + 1)}"
    elif isinstance(e, Sub):
        text = f"{_emit(e.left, _PREC_ADD)} - {_emit(e.right, _PREC_ADD + 1)}"
    elif isinstance(e, Mul):
        text = f"{_emit(e.left, _PREC_MUL)}*{_emit(e.right, _PREC_MUL + 1)}"
    elif isinstance(e, Div):
        text = f"{_emit(e.left, _PREC_MUL)}/{_emit(e.right, _PREC_MUL + 1)}"
    elif isinstance(e, Pow):
        text = f"{_emit(e.base, _PREC_ATOM)}^{_emit(e.exponent, _PREC_NEG)}"
    else:
        raise TypeError(f"not an Expression: {e!r}")
    if _prec(e) < minimum:
        return f"({text})"
    return text


def print_expression(e: Expression) -> str:
    """Render ``e`` as text such that ``parse(print_expression(e))`` equals ``e``."""
    return _emit(e, _PREC_ADD)


# --- structure queries -----------------------------------------------------

def _children(e: Expression) -> tuple[Expression, ...]:
    if isinstance(e, (Neg, Fun)):
        return (e.arg,)
    if isinstance(e, (Add, Sub, Mul, Div)):
        return (e.left, e.right)
    if isinstance(e, Pow):
        return (e.base, e.exponent)
    return ()


def free_coordinates(e: Expression) -> set[tuple[str, int]]:
    """All ``(axis, index)`` coordinate references appearing in ``e``."""
    out: set[tuple[str, int]] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Coord):
            out.add((node.axis, node.index))
        stack.extend(_children(node))
    return out


def free_parameters(e: Expression) -> set[str]:
    out: set[str] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Param):
            out.add(node.name)
        stack.extend(_children(node))
    return out


# --- jet evaluation --------------------------------------------------------

@dataclass
class Jet2:
    """Value, gradient and symmetric hessian at a point, natural coordinates."""

    value: float
    gradient: np.ndarray   # shape (2n,)
    hessian: np.ndarray    # shape (2n, 2n), symmetric by construction


def _point_coords(point) -> np.ndarray:
    coords = getattr(point, "coords", None)
    if coords is not None:
        return np.asarray(coords, dtype=float)
    arr = np.asarray(point, dtype=float).ravel()
    if arr.size % 2 != 0:
        raise ValueError("bundle point must have an even number of coordinates")
    return arr


# (value, gradient, hessian-or-None) triples travel through the evaluator.
_Triple = tuple[float, np.ndarray, "np.ndarray | None"]


def _triple_const(value: float, m: int, order: int) -> _Triple:
    hess = np.zeros((m, m)) if order >= 2 else None
    return float(value), np.zeros(m), hess


def _compose(t: _Triple, value: float, d1: float, d2: float) -> _Triple:
    v, g, h = t
    grad = d1 * g
    hess = None
    if h is not None:
        hess = d1 * h + d2 * np.outer(g, g)
    return value, grad, hess


def _mul(a: _Triple, b: _Triple) -> _Triple:
    va, ga, ha = a
    vb, gb, hb = b
    grad = va * gb + vb * ga
    hess = None
    if ha is not None:
        cross = np.outer(ga, gb)
        hess = va * hb + vb * ha + cross + cross.T
    return va * vb, grad, hess


def _int_pow_derivs(u: float, m: int, node: Expression) -> tuple[float, float, float]:
    if m == 0:
        return 1.0, 0.0, 0.0
    if u == 0.0:
        if m < 0:
            raise EvalDomainError("zero raised to a negative power", node)
        return 0.0, (1.0 if m == 1 else 0.0), (2.0 if m == 2 else 0.0)
    return u ** m, m * u ** (m - 1), m * (m - 1) * u ** (m - 2)


def _eval(e: Expression, coords: np.ndarray, params: Mapping[str, float],
          order: int) -> _Triple:
    m = coords.size
    if isinstance(e, Const):
        return _triple_const(e.value, m, order)
    if isinstance(e, Coord):
        n = m // 2
        k = (e.index - 1) if e.axis == "x" else (n + e.index - 1)
        if e.index > n:
            raise ExprError(f"coordinate {e.axis}{e.index} exceeds dimension {n}")
        grad = np.zeros(m)
        grad[k] = 1.0
        hess = np.zeros((m, m)) if order >= 2 else None
        return float(coords[k]), grad, hess
    if isinstance(e, Param):
        if e.name not in params:
            raise ExprError(f"unbound parameter {e.name!r}")
        return _triple_const(params[e.name], m, order)
    if isinstance(e, Neg):
        v, g, h = _eval(e.arg, coords, params, order)
        return -v, -g, (None if h is None else -h)
    if isinstance(e, Add):
        va, ga, ha = _eval(e.left, coords, params, order)
        vb, gb, hb = _eval(e.right, coords, params, order)
        return va + vb, ga + gb, (None if ha is None else ha + hb)
    if isinstance(e, Sub):
        va, ga, ha = _eval(e.left, coords, params, order)
        vb, gb, hb = _eval(e.right, coords, params, order)
        return va - vb, ga - gb, (None if ha is None else ha - hb)
    if isinstance(e, Mul):
        return _mul(_eval(e.left, coords, params, order),
                    _eval(e.right, coords, params, order))
    if isinstance(e, Div):
        num = _eval(e.left, coords, params, order)
        den = _eval(e.right, coords, params, order)
        vb = den[0]
        if vb == 0.0:
            raise EvalDomainError("division by zero", e)
        recip = _compose(den, 1.0 / vb, -1.0 / vb ** 2, 2.0 / vb ** 3)
        return _mul(num, recip)
    if isinstance(e, Pow):
        base = _eval(e.base, coords, params, order)
        expo = _eval(e.exponent, coords, params, order)
        ev, eg, eh = expo
        exponent_constant = not eg.any() and (eh is None or not eh.any())
        if exponent_constant and float(ev).is_integer() and abs(ev) < 2 ** 31:
            value, d1, d2 = _int_pow_derivs(base[0], int(ev), e)
            return _compose(base, value, d1, d2)
        if base[0] <= 0.0:
            raise EvalDomainError("non-integer power of a non-positive base", e)
        # b^e = exp(e * log b), propagated as jets.
        logb = _compose(base, math.log(base[0]), 1.0 / base[0], -1.0 / base[0] ** 2)
        prod = _mul(expo, logb)
        return _compose(prod, math.exp(prod[0]), math.exp(prod[0]), math.exp(prod[0]))
    if isinstance(e, Fun):
        arg = _eval(e.arg, coords, params, order)
        u = arg[0]
        if e.name == "sin":
            return _compose(arg, math.sin(u), math.cos(u), -math.sin(u))
        if e.name == "cos":
            return _compose(arg, math.cos(u), -math.sin(u), -math.cos(u))
        if e.name == "exp":
            w = math.exp(u)
            return _compose(arg, w, w, w)
        if e.name == "log":
            if u <= 0.0:
                raise EvalDomainError("log of a non-positive value", e)
            return _compose(arg, math.log(u), 1.0 / u, -1.0 / u ** 2)
        if e.name == "sqrt":
            if u < 0.0:
                raise EvalDomainError("sqrt of a negative value", e)
            if u == 0.0:
                raise EvalDomainError("sqrt derivative singular at zero", e)
            w = math.sqrt(u)
            return _compose(arg, w, 0.5 / w, -0.25 / (w * u))
        raise ExprError(f"unknown function {e.name!r}")
    raise TypeError(f"not an Expression: {e!r}")


def eval_jet(e: Expression, point, params: Mapping[str, float] | None = None) -> Jet2:
    """Evaluate value, gradient and hessian of ``e`` at a bundle point.

    ``point`` is anything exposing a flat ``coords`` array of length 2n
    (a ``frame.BundlePoint``) or a plain sequence of 2n reals.
    """
    coords = _point_coords(point)
    v, g, h = _eval(e, coords, dict(params or {}), order=2)
    return Jet2(v, g, h)


def eval_value_grad(e: Expression, point, params: Mapping[str, float] | None = None):
    """First-order fast path: ``(value, gradient)`` without hessian work."""
    coords = _point_coords(point)
    v, g, _ = _eval(e, coords, dict(params or {}), order=1)
    return v, g


def eval_value(e: Expression, point, params: Mapping[str, float] | None = None) -> float:
    coords = _point_coords(point)
    return _eval_value(e, coords, dict(params or {}))


def _eval_value(e: Expression, coords: np.ndarray, params: Mapping[str, float]) -> float:
    """Value-only walk; the hot path for connection entries inside integrators."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Coord):
        n = coords.size // 2
        return float(coords[e.index - 1 if e.axis == "x" else n + e.index - 1])
    if isinstance(e, Param):
        if e.name not in params:
            raise ExprError(f"unbound parameter {e.name!r}")
        return float(params[e.name])
    if isinstance(e, Neg):
        return -_eval_value(e.arg, coords, params)
    if isinstance(e, Add):
        return _eval_value(e.left, coords, params) + _eval_value(e.right, coords, params)
    if isinstance(e, Sub):
        return _eval_value(e.left, coords, params) - _eval_value(e.right, coords, params)
    if isinstance(e, Mul):
        return _eval_value(e.left, coords, params) * _eval_value(e.right, coords, params)
    if isinstance(e, Div):
        d = _eval_value(e.right, coords, params)
        if d == 0.0:
            raise EvalDomainError("division by zero", e)
        return _eval_value(e.left, coords, params) / d
    if isinstance(e, Pow):
        b = _eval_value(e.base, coords, params)
        x = _eval_value(e.exponent, coords, params)
        if float(x).is_integer():
            return _int_pow_derivs(b, int(x), e)[0]
        if b <= 0.0:
            raise EvalDomainError("non-integer power of a non-positive base", e)
        return b ** x
    if isinstance(e, Fun):
        u = _eval_value(e.arg, coords, params)
        if e.name == "sin":
            return math.sin(u)
        if e.name == "cos":
            return math.cos(u)
        if e.name == "exp":
            return math.exp(u)
        if e.name == "log":
            if u <= 0.0:
                raise EvalDomainError("log of a non-positive value", e)
            return math.log(u)
        if e.name == "sqrt":
            if u < 0.0:
                raise EvalDomainError("sqrt of a negative value", e)
            return math.sqrt(u)
    raise TypeError(f"not an Expression: {e!r}")
