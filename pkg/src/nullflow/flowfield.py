"""A small expression language for curvature functions and flow coefficients.

Expressions are written in ordinary infix notation over the variables
``u``, ``t`` and ``s``::

    2*exp(s)
    0.1*cos(u) - t^2
    sqrt(1 + u^2) / cosh(t)

``^`` takes a constant integer exponent only.  The grammar is documented in
``docs/grammar.md``.  Parsed trees are immutable and compare structurally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

VARIABLES = ("u", "t", "s")
FUNCTIONS = ("sin", "cos", "exp", "sinh", "cosh", "sqrt")
UNARY_OPS = ("neg",) + FUNCTIONS
BINARY_OPS = ("+", "-", "*", "/", "^")


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    pass


class EvalError(ExprError):
    pass


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class Variable:
    name: str

    def __post_init__(self):
        if self.name not in VARIABLES:
            raise ExprError(f"unknown variable {self.name!r}")


@dataclass(frozen=True)
class Unary:
    op: str
    child: "Expr"

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ExprError(f"unknown unary operator {self.op!r}")


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ExprError(f"unknown binary operator {self.op!r}")
        if self.op == "^":
            r = self.right
            if not (isinstance(r, Constant) and float(r.value).is_integer()):
                raise ExprError("exponent must be a constant integer")


Expr = Union[Constant, Variable, Unary, Binary]


# -- tokenizer / parser ------------------------------------------------------

def _scan_number(text: str, i: int) -> int:
    n = len(text)
    j = i
    while j < n and text[j].isdigit():
        j += 1
    if j < n and text[j] == ".":
        j += 1
        while j < n and text[j].isdigit():
            j += 1
    if j < n and text[j] in "eE":
        k = j + 1
        if k < n and text[k] in "+-":
            k += 1
        if k >= n or not text[k].isdigit():
            raise ExprSyntaxError("malformed number", i)
        while k < n and text[k].isdigit():
            k += 1
        j = k
    if j < n and (text[j] == "." or text[j].isalpha() or text[j] == "_"):
        raise ExprSyntaxError("malformed number", i)
    if text[i:j] == ".":
        raise ExprSyntaxError("malformed number", i)
    return j


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch.isdigit() or ch == ".":
            j = _scan_number(text, i)
            tokens.append(("num", text[i:j], i))
            i = j
        elif ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("id", text[i:j], i))
            i = j
        elif ch in "+-*/^()":
            tokens.append((ch, ch, i))
            i += 1
        else:
            raise ExprSyntaxError(f"unexpected character {ch!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind=None):
        tok = self.tokens[self.pos]
        if kind is not None and tok[0] != kind:
            what = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ExprSyntaxError(f"expected {kind!r}, found {what}", tok[2])
        self.pos += 1
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected {tok[1]!r}", tok[2])
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            e = Binary(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            e = Binary(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek()[0] == "-":
            self.take()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] != "^":
            return base
        self.take()
        sign = 1.0
        if self.peek()[0] in ("-", "+"):
            sign = -1.0 if self.take()[0] == "-" else 1.0
        tok = self.peek()
        if tok[0] != "num":
            raise ExprSyntaxError("exponent must be an integer literal", tok[2])
        self.take()
        value = float(tok[1])
        if not value.is_integer():
            raise ExprSyntaxError("exponent must be an integer literal", tok[2])
        return Binary("^", base, Constant(sign * value))

    def atom(self) -> Expr:
        tok = self.peek()
        kind, text, offset = tok
        if kind == "num":
            self.take()
            value = float(text)
            if not math.isfinite(value):
                raise ExprSyntaxError("malformed number", offset)
            return Constant(value)
        if kind == "id":
            self.take()
            if text in VARIABLES:
                return Variable(text)
            if text in FUNCTIONS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return Unary(text, arg)
            raise UnknownIdentifierError(f"unknown identifier {text!r}", offset)
        if kind == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        what = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {what}", offset)


def parse(text: str) -> Expr:
    """Parse an expression string.

    Raises ``ExprSyntaxError`` (with the 0-based offset of the offending
    character) for malformed input and ``UnknownIdentifierError`` for names
    that are neither variables nor supported functions.
    """
    return _Parser(text).parse()


# -- printing ----------------------------------------------------------------

def _fmt_const(value: float) -> str:
    return repr(float(value))


def to_text(e: Expr) -> str:
    """Render ``e`` so that ``parse(to_text(e)) == e``.

    Binary nodes are fully parenthesised.  Negative constants outside an
    exponent cannot be written back as literals, so trees built by this
    module never contain them.
    """
    if isinstance(e, Constant):
        if e.value < 0 or math.copysign(1.0, e.value) < 0:
            raise ExprError("negative constants have no literal form; use neg")
        return _fmt_const(e.value)
    if isinstance(e, Variable):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_text(e.child)})"
        return f"{e.op}({to_text(e.child)})"
    if e.op == "^":
        return f"({to_text(e.left)} ^ {int(e.right.value)})"
    return f"({to_text(e.left)} {e.op} {to_text(e.right)})"


# -- evaluation --------------------------------------------------------------

_NUMPY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "sqrt": np.sqrt,
}


def _eval(e: Expr, env):
    if isinstance(e, Constant):
        return e.value
    if isinstance(e, Variable):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Unary):
        x = _eval(e.child, env)
        if e.op == "neg":
            return -x
        if e.op == "sqrt" and np.any(np.asarray(x) < 0):
            raise EvalError("square root of a negative number")
        return _NUMPY_FUNCS[e.op](x)
    a = _eval(e.left, env)
    if e.op == "^":
        n = int(e.right.value)
        if n < 0 and np.any(np.asarray(a) == 0):
            raise EvalError("division by zero")
        return np.power(a, float(n)) if n < 0 else a**n
    b = _eval(e.right, env)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if np.any(np.asarray(b) == 0):
        raise EvalError("division by zero")
    return a / b


def evaluate(e: Expr, bindings: Mapping[str, object]):
    """Evaluate ``e`` with IEEE doubles.

    Bindings may be floats or numpy arrays (broadcast together).  Raises
    ``EvalError`` on unbound variables, division by zero, or any non-finite
    result.
    """
    env = {
        k: (np.asarray(v, dtype=float) if not isinstance(v, float) else v)
        for k, v in bindings.items()
    }
    with np.errstate(all="ignore"):
        out = _eval(e, env)
    if not np.all(np.isfinite(out)):
        raise EvalError("non-finite result")
    if np.ndim(out) == 0:
        return float(out)
    return np.asarray(out, dtype=float)


def evaluate_on(e: Expr, shape, **bindings) -> np.ndarray:
    """``evaluate`` broadcast to a fixed array shape (constants included)."""
    return np.broadcast_to(np.asarray(evaluate(e, bindings), dtype=float), shape).copy()


# -- differentiation ---------------------------------------------------------

ZERO = Constant(0.0)
ONE = Constant(1.0)


def _num(value: float) -> Expr:
    if value < 0:
        return Unary("neg", Constant(-value))
    return Constant(value)


def differentiate(e: Expr, var: str) -> Expr:
    """Symbolic partial derivative with respect to ``var``.

    The result is not simplified beyond dropping obviously zero branches.
    """
    if var not in VARIABLES:
        raise ExprError(f"cannot differentiate with respect to {var!r}")
    return _d(e, var)


def _is_zero(e: Expr) -> bool:
    return isinstance(e, Constant) and e.value == 0.0


def _mul(a: Expr, b: Expr) -> Expr:
    if _is_zero(a) or _is_zero(b):
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return Binary("*", a, b)


def _add(a: Expr, b: Expr) -> Expr:
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return Binary("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if _is_zero(b):
        return a
    if _is_zero(a):
        return Unary("neg", b)
    return Binary("-", a, b)


def _d(e: Expr, v: str) -> Expr:
    if isinstance(e, Constant):
        return ZERO
    if isinstance(e, Variable):
        return ONE if e.name == v else ZERO
    if isinstance(e, Unary):
        x = e.child
        dx = _d(x, v)
        if _is_zero(dx):
            return ZERO
        if e.op == "neg":
            return Unary("neg", dx)
        if e.op == "sin":
            return _mul(Unary("cos", x), dx)
        if e.op == "cos":
            return _mul(Unary("neg", Unary("sin", x)), dx)
        if e.op == "exp":
            return _mul(e, dx)
        if e.op == "sinh":
            return _mul(Unary("cosh", x), dx)
        if e.op == "cosh":
            return _mul(Unary("sinh", x), dx)
        # sqrt
        return Binary("/", dx, Binary("*", Constant(2.0), e))
    a, b = e.left, e.right
    if e.op == "^":
        n = b.value
        da = _d(a, v)
        if n == 0 or _is_zero(da):
            return ZERO
        if n == 1:
            return da
        return _mul(_mul(_num(n), Binary("^", a, Constant(n - 1))), da)
    da, db = _d(a, v), _d(b, v)
    if e.op == "+":
        return _add(da, db)
    if e.op == "-":
        return _sub(da, db)
    if e.op == "*":
        return _add(_mul(da, b), _mul(a, db))
    # quotient rule
    if _is_zero(db):
        return Binary("/", da, b) if not _is_zero(da) else ZERO
    return Binary(
        "/",
        _sub(_mul(da, b), _mul(a, db)),
        Binary("^", b, Constant(2.0)),
    )


def variables(e: Expr) -> set[str]:
    """Names of the variables that occur in ``e``."""
    if isinstance(e, Constant):
        return set()
    if isinstance(e, Variable):
        return {e.name}
    if isinstance(e, Unary):
        return variables(e.child)
    return variables(e.left) | variables(e.right)


def singularity_margin(e: Expr, bindings: Mapping[str, float]) -> float:
    """Smallest distance to a singular point met while evaluating ``e``.

    Looks at denominators, bases raised to negative powers, and square-root
    arguments.  Returns ``inf`` for expressions without such sites.
    """
    margin = math.inf

    def value(node):
        try:
            return float(evaluate(node, bindings))
        except EvalError:
            return 0.0

    def walk(node):
        nonlocal margin
        if isinstance(node, Unary):
            walk(node.child)
            if node.op == "sqrt":
                margin = min(margin, value(node.child))
        elif isinstance(node, Binary):
            walk(node.left)
            if node.op == "^":
                if node.right.value < 0:
                    margin = min(margin, abs(value(node.left)))
                return
            walk(node.right)
            if node.op == "/":
                margin = min(margin, abs(value(node.right)))

    walk(e)
    return margin
