"""Real-valued expression trees in named variables.

Expressions are immutable.  They can be parsed from text, printed back in a
fully parenthesized canonical form, evaluated (on floats or on numpy arrays,
elementwise) and differentiated symbolically.

The grammar accepted by :func:`parse`::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-'? power
    power  := atom ('^' signed_number)?
    atom   := number | ident | ident '(' expr ')' | '(' expr ')'

with the functions ``exp``, ``log``, ``sqrt``, ``cbrt`` and ``abs``.
"""

from __future__ import annotations

import functools
import math
import re
from typing import Mapping, Union

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Unary", "Binary",
    "ExprError", "ParseError", "DomainError",
    "parse", "to_string", "evaluate", "diff", "simplify", "substitute",
    "free_vars", "const", "var", "exp", "log", "sqrt", "cbrt", "absolute",
    "ZERO", "ONE",
]

FUNCTIONS = ("exp", "log", "sqrt", "cbrt", "abs")
UNARY_OPS = ("neg",) + FUNCTIONS
BINARY_OPS = ("add", "sub", "mul", "div", "pow")
_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}

Number = Union[float, int]


class ExprError(Exception):
    """Base class for expression errors."""


class ParseError(ExprError, ValueError):
    """Malformed source text.  ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class DomainError(ExprError, ArithmeticError):
    """An operation was evaluated outside its real domain."""


# ---------------------------------------------------------------------------
# Nodes


class Expr:
    """Base class of all expression nodes.

    Nodes compare structurally and are hashable; the hash is computed once at
    construction so large derivative trees stay cheap to memoize.
    """

    __slots__ = ("_hash",)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def _init(self, **fields):
        for key, value in fields.items():
            object.__setattr__(self, key, value)
        object.__setattr__(self, "_hash", hash(self._key()))

    def _key(self):
        raise NotImplementedError

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return self._key() == other._key()

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return f"Expr({to_string(self)!r})"

    def __str__(self):
        return to_string(self)

    def __reduce__(self):
        return (parse, (to_string(self),))

    # Arithmetic builds simplified trees.
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __pow__(self, exponent):
        if isinstance(exponent, Const):
            exponent = exponent.value
        if isinstance(exponent, Expr):
            raise ExprError("exponents must be constants; use exp/log instead")
        return power(self, float(exponent))

    def __neg__(self):
        return neg(self)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: Number):
        self._init(value=float(value))

    def _key(self):
        return ("const", self.value)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", name):
            raise ExprError(f"invalid variable name {name!r}")
        self._init(name=name)

    def _key(self):
        return ("var", self.name)


class Unary(Expr):
    __slots__ = ("op", "arg")

    def __init__(self, op: str, arg: Expr):
        if op not in UNARY_OPS:
            raise ExprError(f"unknown unary operation {op!r}")
        self._init(op=op, arg=arg)

    def _key(self):
        return (self.op, self.arg)


class Binary(Expr):
    """Binary node.  For ``pow`` the right operand is always a :class:`Const`."""

    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr):
        if op not in BINARY_OPS:
            raise ExprError(f"unknown binary operation {op!r}")
        if op == "pow" and not isinstance(right, Const):
            raise ExprError("exponents must be constants; use exp/log instead")
        self._init(op=op, left=left, right=right)

    def _key(self):
        return (self.op, self.left, self.right)


ZERO = Const(0.0)
ONE = Const(1.0)


def _lift(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(value)


# ---------------------------------------------------------------------------
# Simplifying constructors.  Only constant folding and identity elements.


def const(value: Number) -> Const:
    return Const(value)


def var(name: str) -> Var:
    return Var(name)


def _is(e: Expr, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def _fold(op: str, *values: float):
    # Fold only when the real result is defined and finite.
    try:
        with np.errstate(all="ignore"):
            result = float(_apply(op, *values))
    except DomainError:
        return None
    return result if math.isfinite(result) else None


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def add(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Binary("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is(b, 1.0):
        return a
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    if isinstance(a, Const) and isinstance(b, Const):
        folded = _fold("div", a.value, b.value)
        if folded is not None:
            return Const(folded)
    return Binary("div", a, b)


def power(base: Expr, exponent: float) -> Expr:
    exponent = float(exponent)
    if exponent == 1.0:
        return base
    if exponent == 0.0:
        return ONE
    if isinstance(base, Const):
        folded = _fold("pow", base.value, exponent)
        if folded is not None:
            return Const(folded)
    return Binary("pow", base, Const(exponent))


def _unary(op: str, a: Expr) -> Expr:
    if isinstance(a, Const):
        folded = _fold(op, a.value)
        if folded is not None:
            return Const(folded)
    return Unary(op, a)


def exp(a: Expr) -> Expr:
    return _unary("exp", _lift(a))


def log(a: Expr) -> Expr:
    return _unary("log", _lift(a))


def sqrt(a: Expr) -> Expr:
    return _unary("sqrt", _lift(a))


def cbrt(a: Expr) -> Expr:
    return _unary("cbrt", _lift(a))


def absolute(a: Expr) -> Expr:
    return _unary("abs", _lift(a))


_BUILD_UNARY = {"neg": neg, "exp": exp, "log": log, "sqrt": sqrt,
                "cbrt": cbrt, "abs": absolute}
_BUILD_BINARY = {"add": add, "sub": sub, "mul": mul, "div": div}


def simplify(e: Expr) -> Expr:
    """Rebuild ``e`` bottom-up through the simplifying constructors."""
    memo: dict = {}

    def walk(node):
        if node in memo:
            return memo[node]
        if isinstance(node, Unary):
            out = _BUILD_UNARY[node.op](walk(node.arg))
        elif isinstance(node, Binary):
            if node.op == "pow":
                out = power(walk(node.left), node.right.value)
            else:
                out = _BUILD_BINARY[node.op](walk(node.left), walk(node.right))
        else:
            out = node
        memo[node] = out
        return out

    return walk(e)


def substitute(e: Expr, values: Mapping[str, Union[Number, Expr]]) -> Expr:
    """Replace variables by constants or expressions, then simplify."""
    replacements = {k: _lift(v) for k, v in values.items()}
    memo: dict = {}

    def walk(node):
        if node in memo:
            return memo[node]
        if isinstance(node, Var):
            out = replacements.get(node.name, node)
        elif isinstance(node, Unary):
            out = _BUILD_UNARY[node.op](walk(node.arg))
        elif isinstance(node, Binary):
            if node.op == "pow":
                out = power(walk(node.left), node.right.value)
            else:
                out = _BUILD_BINARY[node.op](walk(node.left), walk(node.right))
        else:
            out = node
        memo[node] = out
        return out

    return walk(e)


def free_vars(e: Expr) -> frozenset:
    """Names of the variables occurring in ``e``."""
    return _free_vars(e)


@functools.lru_cache(maxsize=100_000)
def _free_vars(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Unary):
        return _free_vars(e.arg)
    if isinstance(e, Binary):
        return _free_vars(e.left) | _free_vars(e.right)
    return frozenset()


def node_count(e: Expr) -> int:
    if isinstance(e, Unary):
        return 1 + node_count(e.arg)
    if isinstance(e, Binary):
        return 1 + node_count(e.left) + node_count(e.right)
    return 1


# ---------------------------------------------------------------------------
# Printing


def _format_number(value: float) -> str:
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def to_string(e: Expr) -> str:
    """Canonical fully parenthesized text; ``parse(to_string(e)) == e``.

    A negated literal such as ``Unary('neg', Const(2))`` is not canonical: it
    prints as ``(-2)`` and reads back as ``Const(-2)``.  The simplifying
    constructors never produce it.
    """
    if isinstance(e, Const):
        text = _format_number(e.value)
        return f"({text})" if text.startswith("-") else text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_string(e.arg)})"
        return f"{e.op}({to_string(e.arg)})"
    if e.op == "pow":
        return f"({to_string(e.left)} ^ {_format_number(e.right.value)})"
    return f"({to_string(e.left)} {_SYMBOL[e.op]} {to_string(e.right)})"


# ---------------------------------------------------------------------------
# Parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while True:
        m = _TOKEN.match(source, pos)
        if m is None or m.end() == pos:
            rest = source[pos:]
            if rest.strip():
                offset = len(source[:pos + len(rest) - len(rest.lstrip())].encode())
                raise ParseError(f"unexpected character {rest.strip()[0]!r}", offset)
            tokens.append(("end", None, len(source.encode())))
            return tokens
        kind = m.lastgroup
        start = len(source[:m.start(kind)].encode())
        tokens.append((kind, m.group(kind), start))
        pos = m.end()


class _Parser:
    def __init__(self, source: str, constants: Mapping[str, float]):
        self.tokens = _tokenize(source)
        self.i = 0
        self.constants = constants

    @property
    def peek(self):
        return self.tokens[self.i]

    def take(self):
        token = self.tokens[self.i]
        self.i += 1
        return token

    def expect(self, value):
        kind, text, offset = self.take()
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", offset)

    def fail(self, message=None):
        kind, text, offset = self.peek
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(message or f"unexpected {found}", offset)

    def expr(self):
        node = self.term()
        while self.peek[1] in ("+", "-") and self.peek[0] == "op":
            op = "add" if self.take()[1] == "+" else "sub"
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek[1] in ("*", "/") and self.peek[0] == "op":
            op = "mul" if self.take()[1] == "*" else "div"
            node = Binary(op, node, self.factor())
        return node

    def factor(self):
        if self.peek == ("op", "-", self.peek[2]):
            self.take()
            inner = self.power()
            if isinstance(inner, Const):
                return Const(-inner.value)
            return Unary("neg", inner)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek[0] == "op" and self.peek[1] == "^":
            self.take()
            return Binary("pow", base, Const(self.exponent()))
        return base

    def exponent(self) -> float:
        sign = 1.0
        kind, text, offset = self.peek
        if kind == "op" and text in ("-", "+"):
            self.take()
            sign = -1.0 if text == "-" else 1.0
            kind, text, offset = self.peek
        if kind == "number":
            self.take()
            return sign * float(text)
        if kind == "ident" and text in self.constants:
            self.take()
            return sign * float(self.constants[text])
        if kind == "ident" or (kind == "op" and text == "("):
            raise ParseError("variable exponent in '^' (use exp/log)", offset)
        self.fail("expected a numeric exponent")

    def atom(self):
        kind, text, offset = self.peek
        if kind == "number":
            self.take()
            return Const(float(text))
        if kind == "ident":
            self.take()
            if self.peek[0] == "op" and self.peek[1] == "(":
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", offset)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            if text in FUNCTIONS:
                raise ParseError(f"function {text!r} needs an argument", offset)
            if text in self.constants:
                return Const(float(self.constants[text]))
            return Var(text)
        if kind == "op" and text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        self.fail()


def parse(source: str, constants: Mapping[str, float] | None = None) -> Expr:
    """Parse ``source`` into an expression tree.

    Names found in ``constants`` are replaced by their values at parse time;
    every other identifier becomes a free variable.  No simplification is
    applied (see :func:`simplify`).
    """
    parser = _Parser(source, constants or {})
    node = parser.expr()
    if parser.peek[0] != "end":
        parser.fail()
    return node


# ---------------------------------------------------------------------------
# Evaluation


def _check(condition, message):
    if np.any(condition):
        raise DomainError(message)


def _apply(op, *args):
    if op == "neg":
        return -args[0]
    if op == "exp":
        return np.exp(args[0])
    if op == "log":
        _check(args[0] <= 0, "log of a non-positive number")
        return np.log(args[0])
    if op == "sqrt":
        _check(args[0] < 0, "sqrt of a negative number")
        return np.sqrt(args[0])
    if op == "cbrt":
        return np.cbrt(args[0])
    if op == "abs":
        return np.abs(args[0])
    a, b = args
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        _check(np.equal(b, 0), "division by zero")
        return a / b
    if op == "pow":
        if b < 0:
            _check(np.equal(a, 0), "zero raised to a negative power")
        if not float(b).is_integer():
            _check(a < 0, "negative base with a non-integer exponent")
        return np.power(a, b)
    raise ExprError(f"unknown operation {op!r}")


def evaluate(e: Expr, env: Mapping[str, object]):
    """Evaluate ``e`` with variables bound by ``env``.

    Values may be floats or numpy arrays (evaluated elementwise with
    broadcasting).  Scalar inputs give a Python float.  Raises
    :class:`DomainError` if any element leaves the real domain of an
    operation, and :class:`ExprError` for unbound variables.
    """
    memo: dict = {}

    def walk(node):
        try:
            return memo[node]
        except KeyError:
            pass
        if isinstance(node, Const):
            out = node.value
        elif isinstance(node, Var):
            try:
                out = env[node.name]
            except KeyError:
                raise ExprError(f"unbound variable {node.name!r}") from None
        elif isinstance(node, Unary):
            out = _apply(node.op, walk(node.arg))
        else:
            right = node.right.value if node.op == "pow" else walk(node.right)
            out = _apply(node.op, walk(node.left), right)
        memo[node] = out
        return out

    with np.errstate(all="ignore"):
        result = walk(e)
    if np.ndim(result) == 0:
        return float(result)
    return result


# ---------------------------------------------------------------------------
# Differentiation


def diff(e: Expr, name: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to the variable ``name``.

    ``abs`` differentiates to ``u/abs(u)`` and ``cbrt`` to
    ``(1/3) * cbrt(u)^-2``; both are undefined where ``u = 0`` and fail at
    evaluation time there.
    """
    return _diff(e, name)


@functools.lru_cache(maxsize=200_000)
def _diff(e: Expr, name: str) -> Expr:
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == name else ZERO
    if name not in _free_vars(e):
        return ZERO
    if isinstance(e, Unary):
        u = e.arg
        du = _diff(u, name)
        if e.op == "neg":
            return neg(du)
        if e.op == "exp":
            return mul(e, du)
        if e.op == "log":
            return div(du, u)
        if e.op == "sqrt":
            return div(du, mul(Const(2.0), e))
        if e.op == "cbrt":
            return mul(mul(Const(1.0 / 3.0), power(e, -2.0)), du)
        if e.op == "abs":
            return mul(div(u, e), du)
        raise ExprError(f"cannot differentiate {e.op!r}")
    a, b = e.left, e.right
    if e.op == "pow":
        n = b.value
        return mul(mul(Const(n), power(a, n - 1.0)), _diff(a, name))
    da, db = _diff(a, name), _diff(b, name)
    if e.op == "add":
        return add(da, db)
    if e.op == "sub":
        return sub(da, db)
    if e.op == "mul":
        return add(mul(da, b), mul(a, db))
    if e.op == "div":
        if _is(db, 0.0):
            return div(da, b)
        return div(sub(mul(da, b), mul(a, db)), power(b, 2.0))
    raise ExprError(f"cannot differentiate {e.op!r}")
