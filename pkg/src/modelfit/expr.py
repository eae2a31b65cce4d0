"""Parametric model expressions.

Concrete syntax is C-like infix over parameters ``a1..ap``, state components
``x1..xn`` and the independent variable ``t``::

    a1*x1^2 + a2*x1
    a1*exp(-a2*t); a3*x1 - x2          # ';' separates output components

Precedence, tightest first: ``^`` (right associative), unary ``-``, ``* /``,
``+ -``.  Functions: exp, log, sin, cos, sqrt, abs.  There is no implicit
multiplication.

Evaluation follows IEEE semantics: overflow and domain errors come back as
``inf``/``nan`` entries rather than exceptions, so callers that need finite
values test ``np.isfinite`` themselves.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DimensionError, ParseError, UndeclaredSymbolError

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt", "abs")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Param:
    index: int  # 1-based, as written


@dataclass(frozen=True)
class State:
    index: int  # 1-based, as written


@dataclass(frozen=True)
class Time:
    pass


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Num, Param, State, Time, Neg, BinOp, Call]


# ---------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)
_SYMBOL_RE = re.compile(r"([ax])(\d+)$")


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        tokens.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, param_count, state_dim):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.param_count = param_count
        self.state_dim = state_dim

    @property
    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek
        return ParseError(message, tok[2], self.text)

    def expect(self, text):
        tok = self.advance()
        if tok[1] != text:
            found = tok[1] or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}", tok)

    def parse(self):
        node = self.expression()
        if self.peek[0] != "end":
            raise self.error(f"unexpected token {self.peek[1]!r}")
        return node

    def expression(self):
        node = self.term()
        while self.peek[1] in ("+", "-"):
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek[1] in ("*", "/"):
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek[1] == "^":
            self.advance()
            # exponent may carry its own sign: x^-2
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = tok = self.advance()
        if kind == "num":
            value = float(text)
            if not np.isfinite(value):
                raise self.error(f"numeric literal {text} overflows", tok)
            return Num(value)
        if kind == "name":
            if text in FUNCTIONS:
                if self.peek[1] != "(":
                    raise self.error(f"function {text} requires '('")
                self.advance()
                arg = self.expression()
                self.expect(")")
                return Call(text, arg)
            if text == "t":
                return Time()
            return self.symbol(text, tok)
        if text == "(":
            node = self.expression()
            self.expect(")")
            return node
        found = text or "end of input"
        raise self.error(f"unexpected {found!r}", tok)

    def symbol(self, text, tok):
        m = _SYMBOL_RE.match(text)
        if m is None:
            raise UndeclaredSymbolError(f"unknown symbol {text!r} at position {tok[2]}")
        kind, index = m.group(1), int(m.group(2))
        limit = self.param_count if kind == "a" else self.state_dim
        if not 1 <= index <= limit:
            what = "param_count" if kind == "a" else "state_dim"
            raise UndeclaredSymbolError(
                f"undeclared symbol {text} at position {tok[2]} ({what}={limit})"
            )
        return Param(index) if kind == "a" else State(index)


def parse_expr(text: str, param_count: int, state_dim: int) -> Node:
    """Parse one scalar component."""
    if not text.strip():
        raise ParseError("empty component")
    return _Parser(text, param_count, state_dim).parse()


# ---------------------------------------------------------------------------
# Serialization

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return 5


def serialize(node: Node) -> str:
    """Inverse of :func:`parse_expr` up to whitespace; parenthesizes minimally."""
    if isinstance(node, Num):
        v = float(node.value)
        return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
    if isinstance(node, Param):
        return f"a{node.index}"
    if isinstance(node, State):
        return f"x{node.index}"
    if isinstance(node, Time):
        return "t"
    if isinstance(node, Call):
        return f"{node.fn}({serialize(node.arg)})"
    if isinstance(node, Neg):
        inner = serialize(node.arg)
        return f"-({inner})" if _prec(node.arg) < _PREC["neg"] else f"-{inner}"
    p = _PREC[node.op]
    left, right = serialize(node.left), serialize(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {node.op} {right}"


def walk(node: Node):
    yield node
    if isinstance(node, (Neg, Call)):
        yield from walk(node.arg)
    elif isinstance(node, BinOp):
        yield from walk(node.left)
        yield from walk(node.right)


# ---------------------------------------------------------------------------
# Plain evaluation (compiled to closures)

_NUMPY_FN = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
_NUMPY_OP = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
    "^": np.power,
}


def _compile(node) -> Callable:
    if isinstance(node, Num):
        value = np.float64(node.value)
        return lambda a, t, x: value
    if isinstance(node, Param):
        k = node.index - 1
        return lambda a, t, x: a[k]
    if isinstance(node, State):
        k = node.index - 1
        return lambda a, t, x: x[..., k]
    if isinstance(node, Time):
        return lambda a, t, x: t
    if isinstance(node, Neg):
        arg = _compile(node.arg)
        return lambda a, t, x: np.negative(arg(a, t, x))
    if isinstance(node, Call):
        fn, arg = _NUMPY_FN[node.fn], _compile(node.arg)
        return lambda a, t, x: fn(arg(a, t, x))
    op, left, right = _NUMPY_OP[node.op], _compile(node.left), _compile(node.right)
    return lambda a, t, x: op(left(a, t, x), right(a, t, x))


# ---------------------------------------------------------------------------
# Forward-mode differentiation.
#
# A dual value is a pair (v, d).  ``d`` is None when the value does not depend
# on any seeded variable, otherwise an array of shape (k, *v.shape) holding the
# k directional derivatives.


def _add(d1, d2):
    if d1 is None:
        return d2
    if d2 is None:
        return d1
    return d1 + d2


def _scale(d, s):
    return None if d is None else d * s


def _forward(node, env):
    if isinstance(node, Num):
        return np.float64(node.value), None
    if isinstance(node, Param):
        return env.a[node.index - 1], env.seed("a", node.index)
    if isinstance(node, State):
        return env.x[..., node.index - 1], env.seed("x", node.index)
    if isinstance(node, Time):
        return env.t, env.seed("t", 0)
    if isinstance(node, Neg):
        v, d = _forward(node.arg, env)
        return -v, _scale(d, -1.0)
    if isinstance(node, Call):
        u, du = _forward(node.arg, env)
        if node.fn == "exp":
            v = np.exp(u)
            return v, _scale(du, v)
        if node.fn == "log":
            return np.log(u), _scale(du, 1.0 / u)
        if node.fn == "sin":
            return np.sin(u), _scale(du, np.cos(u))
        if node.fn == "cos":
            return np.cos(u), _scale(du, -np.sin(u))
        if node.fn == "sqrt":
            v = np.sqrt(u)
            return v, _scale(du, 0.5 / v)
        return np.abs(u), _scale(du, np.sign(u))

    lv, ld = _forward(node.left, env)
    rv, rd = _forward(node.right, env)
    if node.op == "+":
        return lv + rv, _add(ld, rd)
    if node.op == "-":
        return lv - rv, _add(ld, _scale(rd, -1.0))
    if node.op == "*":
        return lv * rv, _add(_scale(ld, rv), _scale(rd, lv))
    if node.op == "/":
        v = lv / rv
        return v, _add(_scale(ld, 1.0 / rv), _scale(rd, -v / rv))
    v = np.power(lv, rv)
    d = _scale(ld, rv * np.power(lv, rv - 1.0))
    if rd is not None:
        # d/dr l^r = l^r log l; the limit at l^r == 0 is 0
        d = _add(d, _scale(rd, np.where(v == 0.0, 0.0, v * np.log(lv))))
    return v, d


class _Env:
    """Evaluation context; ``wrt`` names the seeded variable family."""

    def __init__(self, a, t, x, wrt, batch_ndim):
        self.a, self.t, self.x = a, t, x
        self.wrt = wrt
        self.n_seeds = len(a) if wrt == "a" else 1 + x.shape[-1]
        self.shape = (self.n_seeds,) + (1,) * batch_ndim

    def seed(self, family, index):
        if self.wrt == "a":
            if family != "a":
                return None
            slot = index - 1
        else:
            if family == "a":
                return None
            slot = 0 if family == "t" else index
        e = np.zeros(self.shape)
        e[(slot,) + (0,) * (len(self.shape) - 1)] = 1.0
        return e


# ---------------------------------------------------------------------------
# Public model type


@dataclass(frozen=True)
class ModelExpr:
    """Vector-valued model f(a, t, x), one expression tree per output component."""

    components: tuple
    param_count: int
    state_dim: int

    @property
    def output_dim(self) -> int:
        return len(self.components)

    @cached_property
    def _compiled(self):
        return tuple(_compile(c) for c in self.components)

    def uses(self, kind) -> bool:
        """Whether any component references a node of the given class (Param, State, Time)."""
        return any(isinstance(n, kind) for c in self.components for n in walk(c))

    def __str__(self):
        return "; ".join(serialize(c) for c in self.components)

    def evaluate(self, a, t, x):
        return evaluate(self, a, t, x)


def parse_model(text: Union[str, Sequence[str]], param_count: int, state_dim: int) -> ModelExpr:
    """Parse model text; components are separated by ';' or given as a list.

    >>> str(parse_model("a1*x1^2 + a2*x1", 2, 1))
    'a1 * x1^2 + a2 * x1'
    """
    if param_count < 0 or state_dim < 1:
        raise DimensionError(
            f"param_count must be >= 0 and state_dim >= 1, got {param_count}, {state_dim}"
        )
    parts = text.split(";") if isinstance(text, str) else list(text)
    if not parts or not any(p.strip() for p in parts):
        raise ParseError("empty model text")
    components = []
    for k, part in enumerate(parts):
        if not part.strip():
            raise ParseError(f"empty component {k + 1}")
        components.append(parse_expr(part, param_count, state_dim))
    return ModelExpr(tuple(components), param_count, state_dim)


def _check_inputs(model, a, x, batch):
    a = np.asarray(a, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float)
    if a.shape[0] != model.param_count:
        raise DimensionError(f"expected {model.param_count} parameters, got {a.shape[0]}")
    want = 2 if batch else 1
    if x.ndim != want or x.shape[-1] != model.state_dim:
        raise DimensionError(f"expected state of dimension {model.state_dim}, got shape {x.shape}")
    return a, x


def evaluate(model: ModelExpr, a, t, x) -> np.ndarray:
    """f(a, t, x) for scalar t and state vector x; returns shape (output_dim,)."""
    a, x = _check_inputs(model, a, x, batch=False)
    t = np.float64(t)
    with np.errstate(all="ignore"):
        return np.array([fn(a, t, x) for fn in model._compiled], dtype=float)


def evaluate_batch(model: ModelExpr, a, t, x) -> np.ndarray:
    """Vectorized :func:`evaluate`: t has shape (N,), x (N, n); returns (N, output_dim)."""
    a, x = _check_inputs(model, a, x, batch=True)
    t = np.asarray(t, dtype=float)
    out = np.empty((x.shape[0], model.output_dim))
    with np.errstate(all="ignore"):
        for k, fn in enumerate(model._compiled):
            out[:, k] = fn(a, t, x)
    return out


def _jacobian(model, a, t, x, wrt, batch):
    env = _Env(a, t, x, wrt, batch_ndim=1 if batch else 0)
    shape = (x.shape[0],) if batch else ()
    values = np.empty(shape + (model.output_dim,))
    jac = np.zeros(shape + (model.output_dim, env.n_seeds))
    with np.errstate(all="ignore"):
        for k, comp in enumerate(model.components):
            v, d = _forward(comp, env)
            values[..., k] = v
            if d is not None:
                jac[..., k, :] = np.moveaxis(np.broadcast_to(d, env.shape[:1] + shape), 0, -1)
    return values, jac


def eval_with_param_gradient(model: ModelExpr, a, t, x):
    """Value and exact parameter Jacobian ∂f/∂a, shape (output_dim, param_count)."""
    a, x = _check_inputs(model, a, x, batch=False)
    return _jacobian(model, a, np.float64(t), x, "a", batch=False)


def eval_with_param_gradient_batch(model: ModelExpr, a, t, x):
    """Batched form: values (N, d) and Jacobians (N, d, p)."""
    a, x = _check_inputs(model, a, x, batch=True)
    return _jacobian(model, a, np.asarray(t, dtype=float), x, "a", batch=True)


def eval_with_state_jacobian_batch(model: ModelExpr, a, t, x):
    """Values (N, d) and Jacobians with respect to (t, x1..xn), shape (N, d, 1 + n)."""
    a, x = _check_inputs(model, a, x, batch=True)
    return _jacobian(model, a, np.asarray(t, dtype=float), x, "tx", batch=True)
