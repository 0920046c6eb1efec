"""Parser and vectorised evaluator for the small function-expression language.

Grammar (whitespace-insensitive, binary operators left-associative)::

    expr       := arith [ "if" condition "else" expr ]
    condition  := comparison { "and" comparison }
    comparison := arith ( "<=" | "<" | "==" | ">=" | ">" ) arith
    arith      := term { ("+" | "-") term }
    term       := unary { ("*" | "/") unary }
    unary      := ("-" | "+") unary | primary
    primary    := NUMBER | VAR | "inf" | "(" expr ")"
                | FUNC "(" expr { "," expr } ")"

``VAR`` is one of ``x1..x3``, ``w1..w3``, ``u1..u3`` (``v1..v3`` and
``y1..y3`` are accepted for closed-form dual expressions).  ``FUNC`` is
``pow, abs, sqrt, exp, ln, neg, max, min``; the exponent of ``pow`` must fold
to a rational constant.  Comparisons must be affine in the variables.

Out-of-domain evaluations (``sqrt`` of a negative, ``ln`` of a non-positive
value, fractional powers of negatives) produce ``+inf``.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import ArityMismatch, MalformedExpr

log = logging.getLogger(__name__)

__all__ = ["FunctionExpr", "parse", "as_expr"]

_VAR_RE = re.compile(r"[xwuvy][1-3]")
_UNARY_FUNCS = {"abs", "sqrt", "exp", "ln", "neg"}
_NARY_FUNCS = {"max", "min"}
_FUNCS = _UNARY_FUNCS | _NARY_FUNCS | {"pow"}
_CMP_OPS = ("<=", ">=", "==", "<", ">")
EQ_TOL = 1e-9

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|==|[-+*/(),<>])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise MalformedExpr(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind != "ws":
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


# --- AST -------------------------------------------------------------------

class _Node:
    def variables(self) -> set[str]:
        return set()


@dataclass(frozen=True)
class _Num(_Node):
    value: float


@dataclass(frozen=True)
class _Var(_Node):
    name: str

    def variables(self):
        return {self.name}


@dataclass(frozen=True)
class _Bin(_Node):
    op: str
    left: _Node
    right: _Node

    def variables(self):
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class _Call(_Node):
    func: str
    args: tuple

    def variables(self):
        out = set()
        for a in self.args:
            out |= a.variables()
        return out


@dataclass(frozen=True)
class _Cmp(_Node):
    op: str
    left: _Node
    right: _Node

    def variables(self):
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class _Cond(_Node):
    conds: tuple
    then: _Node
    other: _Node

    def variables(self):
        out = self.then.variables() | self.other.variables()
        for c in self.conds:
            out |= c.variables()
        return out


# --- parser ----------------------------------------------------------------

class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def _err(self, msg, tok=None):
        tok = tok or self.tok
        return MalformedExpr(msg, tok.line, tok.col)

    def _take(self, text=None, kind=None) -> _Tok:
        t = self.tok
        if (text is not None and t.text != text) or (kind is not None and t.kind != kind):
            want = text if text is not None else kind
            got = t.text or "end of input"
            raise self._err(f"expected {want!r}, found {got!r}")
        self.i += 1
        return t

    def parse(self) -> _Node:
        node = self.expr()
        if self.tok.kind != "eof":
            raise self._err(f"unexpected token {self.tok.text!r}")
        return node

    def expr(self) -> _Node:
        node = self.arith()
        if self.tok.text == "if":
            self._take("if")
            conds = [self.comparison()]
            while self.tok.text == "and":
                self._take("and")
                conds.append(self.comparison())
            self._take("else")
            other = self.expr()
            node = _Cond(tuple(conds), node, other)
        return node

    def comparison(self) -> _Node:
        start = self.tok
        left = self.arith()
        if self.tok.text not in _CMP_OPS:
            raise self._err("expected comparison operator")
        op = self._take().text
        right = self.arith()
        cmp = _Cmp(op, left, right)
        if _affine(_Bin("-", left, right)) is None:
            raise self._err("condition must be an affine comparison", start)
        return cmp

    def arith(self) -> _Node:
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self._take().text
            node = _Bin(op, node, self.term())
        return node

    def term(self) -> _Node:
        node = self.unary()
        while self.tok.text in ("*", "/"):
            op = self._take().text
            node = _Bin(op, node, self.unary())
        return node

    def unary(self) -> _Node:
        if self.tok.text == "-":
            self._take()
            return _Call("neg", (self.unary(),))
        if self.tok.text == "+":
            self._take()
            return self.unary()
        return self.primary()

    def primary(self) -> _Node:
        t = self.tok
        if t.kind == "num":
            self._take()
            return _Num(float(t.text))
        if t.text == "(":
            self._take("(")
            node = self.expr()
            self._take(")")
            return node
        if t.kind == "name":
            if t.text == "inf":
                self._take()
                return _Num(np.inf)
            if _VAR_RE.fullmatch(t.text):
                self._take()
                return _Var(t.text)
            if t.text in _FUNCS:
                self._take()
                self._take("(")
                args = [self.expr()]
                while self.tok.text == ",":
                    self._take(",")
                    args.append(self.expr())
                self._take(")")
                return self._make_call(t, args)
            raise self._err(f"unknown identifier {t.text!r}")
        raise self._err(f"unexpected token {t.text or 'end of input'!r}")

    def _make_call(self, t: _Tok, args: list) -> _Node:
        name = t.text
        if name in _UNARY_FUNCS and len(args) != 1:
            raise self._err(f"{name} takes one argument", t)
        if name in _NARY_FUNCS and len(args) < 2:
            raise self._err(f"{name} takes at least two arguments", t)
        if name == "pow":
            if len(args) != 2:
                raise self._err("pow takes two arguments", t)
            k = _const_value(args[1])
            if k is None or not np.isfinite(k):
                raise self._err("pow exponent must be a finite constant", t)
            frac = Fraction(k).limit_denominator(1000)
            if abs(float(frac) - k) > 1e-12:
                raise self._err("pow exponent must be rational", t)
            return _Call("pow", (args[0], _Num(float(frac))))
        return _Call(name, tuple(args))


def _const_value(node: _Node):
    aff = _affine(node)
    if aff is None or aff[0]:
        return None
    return aff[1]


def _affine(node: _Node):
    """Return ``(coeffs, const)`` if the node is affine in its variables."""
    if isinstance(node, _Num):
        return {}, node.value
    if isinstance(node, _Var):
        return {node.name: 1.0}, 0.0
    if isinstance(node, _Call) and node.func == "neg":
        a = _affine(node.args[0])
        if a is None:
            return None
        return {k: -c for k, c in a[0].items()}, -a[1]
    if isinstance(node, _Bin):
        a, b = _affine(node.left), _affine(node.right)
        if a is None or b is None:
            return None
        if node.op in "+-":
            s = 1.0 if node.op == "+" else -1.0
            coeffs = dict(a[0])
            for k, c in b[0].items():
                coeffs[k] = coeffs.get(k, 0.0) + s * c
            return coeffs, a[1] + s * b[1]
        if node.op == "*":
            if not a[0]:
                return {k: a[1] * c for k, c in b[0].items()}, a[1] * b[1]
            if not b[0]:
                return {k: b[1] * c for k, c in a[0].items()}, a[1] * b[1]
            return None
        if node.op == "/" and not b[0] and b[1] != 0:
            return {k: c / b[1] for k, c in a[0].items()}, a[1] / b[1]
        return None
    return None


# --- evaluation ------------------------------------------------------------

def _pow(base, k):
    base = np.asarray(base, dtype=float)
    if float(k).is_integer():
        return np.power(base, k)
    out = np.power(np.abs(base), k)
    frac = Fraction(k).limit_denominator(1000)
    if frac.denominator % 2 == 1:
        sign = np.sign(base) if frac.numerator % 2 else 1.0
        return sign * out
    return np.where(base < 0, np.nan, out)


def _compile(node: _Node) -> Callable[[dict], np.ndarray]:
    if isinstance(node, _Num):
        val = node.value
        return lambda env: np.float64(val)
    if isinstance(node, _Var):
        name = node.name
        return lambda env: env[name]
    if isinstance(node, _Bin):
        f, g = _compile(node.left), _compile(node.right)
        op = node.op
        if op == "+":
            return lambda env: f(env) + g(env)
        if op == "-":
            return lambda env: f(env) - g(env)
        if op == "*":
            return lambda env: f(env) * g(env)
        return lambda env: f(env) / g(env)
    if isinstance(node, _Call):
        fs = [_compile(a) for a in node.args]
        name = node.func
        if name == "pow":
            k = node.args[1].value
            base = fs[0]
            return lambda env: _pow(base(env), k)
        if name == "max":
            return lambda env: _reduce(np.maximum, fs, env)
        if name == "min":
            return lambda env: _reduce(np.minimum, fs, env)
        a = fs[0]
        if name == "neg":
            return lambda env: -a(env)
        if name == "abs":
            return lambda env: np.abs(a(env))
        if name == "exp":
            return lambda env: np.exp(a(env))
        if name == "sqrt":
            return lambda env: _guarded(np.sqrt, a(env), lambda z: z < 0)
        if name == "ln":
            return lambda env: _guarded(np.log, a(env), lambda z: z <= 0)
    if isinstance(node, _Cond):
        conds = [_compile_cmp(c) for c in node.conds]
        then, other = _compile(node.then), _compile(node.other)

        def cond_eval(env):
            mask = conds[0](env)
            for c in conds[1:]:
                mask = mask & c(env)
            return np.where(mask, then(env), other(env))

        return cond_eval
    raise MalformedExpr(f"cannot compile node {node!r}")


def _reduce(fn, fs, env):
    out = fs[0](env)
    for f in fs[1:]:
        out = fn(out, f(env))
    return out


def _guarded(fn, z, bad):
    z = np.asarray(z, dtype=float)
    return np.where(bad(z), np.inf, fn(np.where(bad(z), 1.0, z)))


def _compile_cmp(node: _Cmp):
    f, g = _compile(node.left), _compile(node.right)
    op = node.op
    if op == "<=":
        return lambda env: f(env) <= g(env)
    if op == ">=":
        return lambda env: f(env) >= g(env)
    if op == "<":
        return lambda env: f(env) < g(env)
    if op == ">":
        return lambda env: f(env) > g(env)
    return lambda env: np.abs(f(env) - g(env)) <= EQ_TOL


class FunctionExpr:
    """A parsed expression, evaluable on arrays of node coordinates."""

    def __init__(self, source: str):
        self.source = str(source)
        self._ast = _Parser(self.source).parse()
        self._fn = _compile(self._ast)
        self.variables = frozenset(self._ast.variables())

    def __repr__(self):
        return f"FunctionExpr({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, FunctionExpr) and other.source == self.source

    def __hash__(self):
        return hash(self.source)

    @property
    def is_constant(self) -> bool:
        return not self.variables

    def prefixes(self) -> set[str]:
        return {v[0] for v in self.variables}

    def max_index(self, prefix: str) -> int:
        idx = [int(v[1]) for v in self.variables if v[0] == prefix]
        return max(idx, default=0)

    def evaluate(self, env: dict) -> np.ndarray:
        """Evaluate with ``env`` mapping variable names to arrays.

        NaN results are replaced by ``+inf`` (outside the domain) and logged.
        """
        missing = self.variables - set(env)
        if missing:
            raise ArityMismatch(f"unbound variables {sorted(missing)} in {self.source!r}")
        shape = np.broadcast_shapes(*(np.shape(env[k]) for k in env)) if env else ()
        with np.errstate(all="ignore"):
            out = np.asarray(self._fn(env), dtype=float)
        out = np.broadcast_to(out, shape).copy() if out.shape != shape else out.copy()
        nan = np.isnan(out)
        if nan.any():
            log.warning("%d NaN value(s) from %r mapped to +inf", int(nan.sum()), self.source)
            out[nan] = np.inf
        return out

    def on_points(self, points: np.ndarray, prefix: str) -> np.ndarray:
        """Evaluate at rows of ``points`` with variables ``prefix1..prefixd``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        d = points.shape[1]
        for p in self.prefixes():
            if p != prefix:
                raise ArityMismatch(f"{self.source!r} uses variable prefix {p!r}, expected {prefix!r}")
        if self.max_index(prefix) > d:
            raise ArityMismatch(f"{self.source!r} needs {self.max_index(prefix)} variables, got {d}")
        env = {f"{prefix}{i + 1}": points[:, i] for i in range(d)}
        return self.evaluate(env)


def parse(source: str) -> FunctionExpr:
    return FunctionExpr(source)


def as_expr(obj) -> FunctionExpr:
    if isinstance(obj, FunctionExpr):
        return obj
    if isinstance(obj, (int, float)):
        return FunctionExpr(repr(float(obj)) if np.isfinite(obj) else "inf")
    return FunctionExpr(obj)
