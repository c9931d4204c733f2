"""Arithmetic expressions over grid coordinates.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := atom ('^' unary)?            # right associative
    atom    := NUMBER | NAME | NAME '(' args ')' | '(' expr ')' | '|' expr '|'

Names are the coordinates ``x1 .. xn`` and the constants ``pi`` and ``e``.
Functions: ``abs min max sqrt exp log sin cos tanh sign``.
Evaluation is vectorized: variables are bound to numpy arrays.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np


class ExpressionError(ValueError):
    """Raised for malformed expressions or non-finite evaluation results."""


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^(),|]))"
)

_FUNCS: dict[str, tuple[Callable, int | None]] = {
    "abs": (np.abs, 1),
    "sqrt": (np.sqrt, 1),
    "exp": (np.exp, 1),
    "log": (np.log, 1),
    "sin": (np.sin, 1),
    "cos": (np.cos, 1),
    "tanh": (np.tanh, 1),
    "sign": (np.sign, 1),
    "min": (None, None),
    "max": (None, None),
}
_CONSTS = {"pi": math.pi, "e": math.e}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0-based coordinate


@dataclass(frozen=True)
class Unary:
    op: str
    arg: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionError(f"unexpected character {text[pos]!r} at column {pos + 1}")
        kind = m.lastgroup
        tok = m.group(kind)
        if tok == "**":
            tok = "^"
        tokens.append((kind, tok, m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int | None):
        self.text = text
        self.n = n
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, tok, pos = self.take()
        if tok != value:
            got = tok or "end of input"
            raise ExpressionError(f"expected {value!r} at column {pos + 1}, got {got!r}")

    def error(self, msg: str):
        _, _, pos = self.peek()
        raise ExpressionError(f"{msg} at column {pos + 1} in {self.text!r}")

    def parse(self):
        node = self.expr()
        kind, tok, pos = self.peek()
        if kind != "end":
            self.error(f"unexpected token {tok!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[1] in ("-", "+"):
            op = self.take()[1]
            arg = self.unary()
            return arg if op == "+" else Unary("-", arg)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        kind, tok, pos = self.peek()
        if kind == "num":
            self.take()
            return Num(float(tok))
        if kind == "name":
            self.take()
            if self.peek()[1] == "(":
                return self.call(tok, pos)
            if tok in _CONSTS:
                return Num(_CONSTS[tok])
            m = re.fullmatch(r"x([1-9])", tok)
            if m is None:
                raise ExpressionError(f"unknown name {tok!r} at column {pos + 1}")
            idx = int(m.group(1)) - 1
            if self.n is not None and idx >= self.n:
                raise ExpressionError(f"variable {tok!r} exceeds dimension n={self.n}")
            return Var(idx)
        if tok == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        if tok == "|":
            self.take()
            node = self.expr()
            self.expect("|")
            return Call("abs", (node,))
        self.error(f"unexpected token {tok or 'end of input'!r}")

    def call(self, name: str, pos: int):
        if name not in _FUNCS:
            raise ExpressionError(f"unknown function {name!r} at column {pos + 1}")
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        arity = _FUNCS[name][1]
        if arity is not None and len(args) != arity:
            raise ExpressionError(f"{name}() takes {arity} argument(s), got {len(args)}")
        if arity is None and len(args) < 2:
            raise ExpressionError(f"{name}() needs at least two arguments")
        return Call(name, tuple(args))


def _eval(node, xs):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return xs[node.index]
    if isinstance(node, Unary):
        return -_eval(node.arg, xs)
    if isinstance(node, Binary):
        a = _eval(node.left, xs)
        b = _eval(node.right, xs)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return np.divide(a, b)
        return np.power(np.asarray(a, dtype=float), b)
    if isinstance(node, Call):
        args = [_eval(a, xs) for a in node.args]
        if node.name == "min":
            out = args[0]
            for a in args[1:]:
                out = np.minimum(out, a)
            return out
        if node.name == "max":
            out = args[0]
            for a in args[1:]:
                out = np.maximum(out, a)
            return out
        return _FUNCS[node.name][0](args[0])
    raise TypeError(node)


def _uses_vars(node) -> set[int]:
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, Unary):
        return _uses_vars(node.arg)
    if isinstance(node, Binary):
        return _uses_vars(node.left) | _uses_vars(node.right)
    if isinstance(node, Call):
        out = set()
        for a in node.args:
            out |= _uses_vars(a)
        return out
    return set()


class Expression:
    """A parsed expression, callable on an ``(N, n)`` array of points."""

    def __init__(self, source: str, n: int | None = None):
        if not isinstance(source, str) or not source.strip():
            raise ExpressionError("empty expression")
        self.source = source
        self.n = n
        self.tree = _Parser(source, n).parse()
        self.variables = _uses_vars(self.tree)

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.variables and max(self.variables) >= pts.shape[1]:
            raise ExpressionError(
                f"expression {self.source!r} uses x{max(self.variables) + 1} "
                f"but points have dimension {pts.shape[1]}"
            )
        xs = [pts[:, i] for i in range(pts.shape[1])]
        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(_eval(self.tree, xs), dtype=float), (pts.shape[0],))
        if not np.all(np.isfinite(out)):
            raise ExpressionError(f"expression {self.source!r} is not finite on the domain")
        return np.array(out)

    def __repr__(self):
        return f"Expression({self.source!r})"


def parse(source: str, n: int | None = None) -> Expression:
    return Expression(source, n)


def as_field(spec, n: int | None = None):
    """Coerce a number, expression string or callable into a vectorized field."""
    if isinstance(spec, Expression):
        return spec
    if isinstance(spec, str):
        return Expression(spec, n)
    if isinstance(spec, (int, float)):
        value = float(spec)
        if not math.isfinite(value):
            raise ExpressionError("constant field is not finite")
        return Expression(repr(value), n)
    if callable(spec):
        return spec
    raise ExpressionError(f"cannot interpret {spec!r} as a field")
