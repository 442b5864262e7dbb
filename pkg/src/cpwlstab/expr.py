"""
Expression trees for vector-field components.

Grammar (precedence high to low)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ['^' exponent]          right associative
    exponent:= '-' exponent | power         must not depend on any variable
    atom    := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

``NAME`` is a state variable ``x1..xn``, a declared parameter, or ``pi``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

from .errors import DomainError, SystemSyntaxError, UnknownIdentifierError

UNARY_FUNCS = ("sin", "cos", "exp", "sqrt", "abs")
BINARY_OPS = ("+", "-", "*", "/", "^")


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # zero based


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or one of UNARY_FUNCS
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Var, Param, Unary, Binary]

ZERO = Const(0.0)
ONE = Const(1.0)


def depends_on_vars(e: Expr) -> bool:
    if isinstance(e, Var):
        return True
    if isinstance(e, Unary):
        return depends_on_vars(e.arg)
    if isinstance(e, Binary):
        return depends_on_vars(e.left) or depends_on_vars(e.right)
    return False


# ---------------------------------------------------------------------------
# Tokenizer and recursive-descent parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # 'num', 'name', 'op', 'end'
    text: str
    col: int  # 1 based


def tokenize(text: str, line: int = 0, col_offset: int = 0) -> list[_Token]:
    tokens = []
    pos = 0
    stripped_end = len(text.rstrip())
    while pos < stripped_end:
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + 1
            while col <= len(text) and text[col - 1].isspace():
                col += 1
            raise SystemSyntaxError(f"unexpected character {text[col - 1]!r}", line, col + col_offset)
        kind = m.lastgroup
        tokens.append(_Token(kind, m.group(kind), m.start(kind) + 1 + col_offset))
        pos = m.end()
    tokens.append(_Token("end", "", stripped_end + 1 + col_offset))
    return tokens


class _Parser:
    def __init__(self, tokens, n_vars, params, line):
        self.toks = tokens
        self.i = 0
        self.n_vars = n_vars
        self.params = params
        self.line = line

    @property
    def tok(self) -> _Token:
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return SystemSyntaxError(msg, self.line, tok.col)

    def accept(self, text) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            found = self.tok.text or "end of line"
            raise self.error(f"expected {text!r}, found {found!r}")

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            e = Binary(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            e = Binary(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.accept("-"):
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.accept("^"):
            tok = self.tok
            exponent = self.exponent()
            if depends_on_vars(exponent):
                raise self.error("exponent must be a constant expression", tok)
            return Binary("^", base, exponent)
        return base

    def exponent(self) -> Expr:
        if self.accept("-"):
            return Unary("neg", self.exponent())
        return self.power()

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Const(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            name = tok.text
            if name in UNARY_FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(name, arg)
            m = re.fullmatch(r"x(\d+)", name)
            if m:
                k = int(m.group(1))
                if 1 <= k <= self.n_vars:
                    return Var(k - 1)
                raise UnknownIdentifierError(
                    f"variable {name} out of range 1..{self.n_vars}", self.line, tok.col
                )
            if name in self.params:
                return Param(name)
            if name == "pi":
                return Const(math.pi)
            raise UnknownIdentifierError(f"unknown identifier {name!r}", self.line, tok.col)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        found = tok.text or "end of line"
        raise self.error(f"unexpected {found!r}")


def parse_expr(text: str, n_vars: int, params: Mapping[str, float] = (), line: int = 0,
               col_offset: int = 0) -> Expr:
    return _Parser(tokenize(text, line, col_offset), n_vars, set(params), line).parse()


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return _PREC["neg"]
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _PREC["neg"]
    return 5


def to_text(e: Expr) -> str:
    """Render ``e`` in the input grammar with minimal parentheses."""
    if isinstance(e, Const):
        v = e.value
        if not math.isfinite(v):
            raise ValueError(f"cannot render non-finite constant {v}")
        if v == int(v) and abs(v) < 1e15:
            s = str(int(v))
        else:
            s = repr(v)
        return s
    if isinstance(e, Var):
        return f"x{e.index + 1}"
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = to_text(e.arg)
            return f"-{inner}" if _prec(e.arg) >= _PREC["neg"] else f"-({inner})"
        return f"{e.op}({to_text(e.arg)})"
    p = _PREC[e.op]
    left, right = to_text(e.left), to_text(e.right)
    if e.op == "^":
        if _prec(e.left) <= p:
            left = f"({left})"
        # exponent position accepts a unary minus or another power
        if _prec(e.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


# ---------------------------------------------------------------------------
# Symbolic differentiation and simplification
# ---------------------------------------------------------------------------

def diff(e: Expr, k: int) -> Expr:
    """Partial derivative of ``e`` with respect to variable ``k`` (zero based), unsimplified."""
    if isinstance(e, (Const, Param)):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.index == k else ZERO
    if isinstance(e, Unary):
        u, du = e.arg, diff(e.arg, k)
        if e.op == "neg":
            return Unary("neg", du)
        if e.op == "sin":
            return Binary("*", Unary("cos", u), du)
        if e.op == "cos":
            return Binary("*", Unary("neg", Unary("sin", u)), du)
        if e.op == "exp":
            return Binary("*", Unary("exp", u), du)
        if e.op == "sqrt":
            return Binary("/", du, Binary("*", Const(2.0), Unary("sqrt", u)))
        if e.op == "abs":
            return Binary("*", Binary("/", u, Unary("abs", u)), du)
        raise ValueError(e.op)
    u, v = e.left, e.right
    du, dv = diff(u, k), diff(v, k)
    if e.op in "+-":
        return Binary(e.op, du, dv)
    if e.op == "*":
        return Binary("+", Binary("*", du, v), Binary("*", u, dv))
    if e.op == "/":
        return Binary("/", Binary("-", Binary("*", du, v), Binary("*", u, dv)),
                      Binary("^", v, Const(2.0)))
    if e.op == "^":
        return Binary("*", Binary("*", v, Binary("^", u, Binary("-", v, ONE))), du)
    raise ValueError(e.op)


def _is(e: Expr, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def _fold(op: str, a: float, b: float | None = None) -> float | None:
    try:
        with np.errstate(all="raise"):
            if op == "neg":
                r = -a
            elif op in UNARY_FUNCS:
                r = float(getattr(np, "abs" if op == "abs" else op)(a))
            elif op == "+":
                r = a + b
            elif op == "-":
                r = a - b
            elif op == "*":
                r = a * b
            elif op == "/":
                r = a / b
            else:
                r = float(np.power(a, b))
    except (ZeroDivisionError, FloatingPointError, OverflowError, ValueError):
        return None
    return r if math.isfinite(r) else None


def simplify(e: Expr) -> Expr:
    """Constant folding, 0/1 identities and double negation. Value preserving."""
    if isinstance(e, Unary):
        a = simplify(e.arg)
        if isinstance(a, Const):
            r = _fold(e.op, a.value)
            if r is not None:
                return Const(r)
        if e.op == "neg" and isinstance(a, Unary) and a.op == "neg":
            return a.arg
        return Unary(e.op, a)
    if not isinstance(e, Binary):
        return e
    a, b = simplify(e.left), simplify(e.right)
    if isinstance(a, Const) and isinstance(b, Const):
        r = _fold(e.op, a.value, b.value)
        if r is not None:
            return Const(r)
    op = e.op
    if op == "+":
        if _is(a, 0.0):
            return b
        if _is(b, 0.0):
            return a
    elif op == "-":
        if _is(b, 0.0):
            return a
        if _is(a, 0.0):
            return simplify(Unary("neg", b))
    elif op == "*":
        if _is(a, 0.0) or _is(b, 0.0):
            return ZERO
        if _is(a, 1.0):
            return b
        if _is(b, 1.0):
            return a
        if _is(a, -1.0):
            return simplify(Unary("neg", b))
        if _is(b, -1.0):
            return simplify(Unary("neg", a))
    elif op == "/":
        if _is(b, 1.0):
            return a
        if _is(a, 0.0):
            return ZERO
    elif op == "^":
        if _is(b, 1.0):
            return a
        if _is(b, 0.0):
            return ONE
    return Binary(op, a, b)


def derivative(e: Expr, k: int) -> Expr:
    return simplify(diff(e, k))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def evaluate(e: Expr, x, params: Mapping[str, float]) -> float:
    """Scalar tree-walking evaluator (reference path; see :func:`compile_exprs`)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return float(x[e.index])
    if isinstance(e, Param):
        return float(params[e.name])
    if isinstance(e, Unary):
        r = _fold(e.op, evaluate(e.arg, x, params))
    else:
        r = _fold(e.op, evaluate(e.left, x, params), evaluate(e.right, x, params))
    if r is None:
        raise DomainError(f"evaluation of {to_text(e)} left the real domain")
    return r


_NP_NAME = {"sin": "_np.sin", "cos": "_np.cos", "exp": "_np.exp", "sqrt": "_np.sqrt",
            "abs": "_np.abs"}
_NP_BIN = {"+": "_np.add", "-": "_np.subtract", "*": "_np.multiply", "/": "_np.divide",
           "^": "_np.power"}


def _source(e: Expr) -> str:
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Var):
        return f"x[{e.index}]"
    if isinstance(e, Param):
        return f"p[{e.name!r}]"
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"_np.negative({_source(e.arg)})"
        return f"{_NP_NAME[e.op]}({_source(e.arg)})"
    return f"{_NP_BIN[e.op]}({_source(e.left)}, {_source(e.right)})"


def compile_exprs(exprs, params: Mapping[str, float]) -> Callable[[np.ndarray], list]:
    """Compile a sequence of trees into one numpy function ``g(x) -> list``.

    ``x`` may have shape ``(n,)`` or ``(n, m)``; results broadcast to ``x[0]``.
    Non-finite results are returned as is; callers decide how to report them.
    """
    body = ", ".join(_source(e) for e in exprs)
    src = f"def _g(x):\n    return [{body}]\n"
    ns = {"_np": np, "p": dict(params)}
    exec(compile(src, "<cpwlstab-expr>", "exec"), ns)
    return ns["_g"]
