"""Scalar expressions in chart coordinates x1..xn, y1..yn.

Expressions are immutable trees.  They can be parsed from text, printed back,
differentiated symbolically, substituted into and evaluated on plain floats or
numpy arrays (the leading axes of the environment arrays are treated as a batch).

Grammar::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' exponent)?
    exponent:= ['-'] NUMBER | '(' ['-'] NUMBER ['/' NUMBER] ')'
    atom    := NUMBER | xK | yK | NAME | 'sqrt' '(' expr ')' | '(' expr ')'

Exponents are rational constants; there are no expression-valued powers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


class IndexRangeError(ExprSyntaxError):
    pass


class UnknownIdentifierError(ExprSyntaxError):
    pass


class DimensionMismatchError(ExprError):
    pass


class SingularJacobianError(ArithmeticError):
    pass


class DomainError(ArithmeticError):
    """Raised when evaluation leaves the domain of an operation."""

    def __init__(self, message: str, node: "Expr"):
        text = to_text(node)
        if len(text) > 200:
            text = text[:197] + "..."
        super().__init__(f"{message} in subexpression {text}")
        self.node = node


# ---------------------------------------------------------------------------
# nodes


class Expr:
    """Base class of expression nodes.

    Arithmetic operators build new nodes with constant folding only.
    """

    __slots__ = ()
    precedence = 5

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, Fraction(p))

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, eq=True, repr=False)
class Const(Expr):
    value: float

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Var(Expr):
    """Chart coordinate: kind 'x' (position) or 'y' (fiber), 1-based index."""

    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in ("x", "y"):
            raise ValueError(f"variable kind must be 'x' or 'y', got {self.kind!r}")
        if self.index < 1:
            raise ValueError("variable index starts at 1")

    def __repr__(self):
        return f"{self.kind}{self.index}"


@dataclass(frozen=True, eq=True, repr=False)
class Param(Expr):
    name: str

    def __repr__(self):
        return f"Param({self.name!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Add(Expr):
    left: Expr
    right: Expr
    precedence = 1

    def __repr__(self):
        return f"Add({self.left!r}, {self.right!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Sub(Expr):
    left: Expr
    right: Expr
    precedence = 1

    def __repr__(self):
        return f"Sub({self.left!r}, {self.right!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Mul(Expr):
    left: Expr
    right: Expr
    precedence = 2

    def __repr__(self):
        return f"Mul({self.left!r}, {self.right!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Div(Expr):
    left: Expr
    right: Expr
    precedence = 2

    def __repr__(self):
        return f"Div({self.left!r}, {self.right!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Neg(Expr):
    operand: Expr
    precedence = 3

    def __repr__(self):
        return f"Neg({self.operand!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Pow(Expr):
    base: Expr
    exponent: Fraction
    precedence = 4

    def __repr__(self):
        return f"Pow({self.base!r}, {self.exponent})"


@dataclass(frozen=True, eq=True, repr=False)
class Sqrt(Expr):
    operand: Expr

    def __repr__(self):
        return f"Sqrt({self.operand!r})"


BINARY = (Add, Sub, Mul, Div)

ZERO = Const(0.0)
ONE = Const(1.0)


def x(i: int) -> Var:
    return Var("x", i)


def y(i: int) -> Var:
    return Var("y", i)


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float, Fraction, np.floating, np.integer)):
        return Const(float(v))
    raise TypeError(f"cannot convert {type(v).__name__} to Expr")


def children(e: Expr) -> tuple:
    if isinstance(e, BINARY):
        return (e.left, e.right)
    if isinstance(e, (Neg, Sqrt)):
        return (e.operand,)
    if isinstance(e, Pow):
        return (e.base,)
    return ()


# ---------------------------------------------------------------------------
# constructors with constant folding


def _const_pow(v: float, p: Fraction) -> float:
    if p.denominator == 1:
        if v == 0 and p < 0:
            raise ZeroDivisionError
        return float(v) ** int(p)
    if v < 0:
        raise ValueError
    return float(v) ** float(p)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0:
        return Const(a.value / b.value)
    return Div(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    return Neg(a)


def power(a: Expr, p) -> Expr:
    p = Fraction(p)
    if isinstance(a, Const):
        try:
            return Const(_const_pow(a.value, p))
        except (ZeroDivisionError, ValueError):
            pass
    return Pow(a, p)


def sqrt(a: Expr) -> Expr:
    if isinstance(a, Const) and a.value >= 0:
        return Const(float(np.sqrt(a.value)))
    return Sqrt(a)


def total(terms: Iterable[Expr]) -> Expr:
    out = None
    for t in terms:
        out = t if out is None else add(out, t)
    return ZERO if out is None else out


# identity-element elimination; used where trees are generated, never by the parser
def _is(e: Expr, v: float) -> bool:
    return isinstance(e, Const) and e.value == v


def _sadd(a, b):
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return add(a, b)


def _ssub(a, b):
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _sneg(b)
    return sub(a, b)


def _smul(a, b):
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    return mul(a, b)


def _sdiv(a, b):
    if _is(a, 0):
        return ZERO
    if _is(b, 1):
        return a
    return div(a, b)


def _sneg(a):
    if isinstance(a, Neg):
        return a.operand
    return neg(a)


# ---------------------------------------------------------------------------
# printing


def _fmt_number(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        s = str(int(v))
    else:
        s = repr(v)
    if v < 0 or s.startswith("-"):
        return f"({s})"
    return s


def _fmt_exponent(p: Fraction) -> str:
    if p.denominator == 1 and p >= 0:
        return str(p.numerator)
    return f"({p.numerator}/{p.denominator})" if p.denominator != 1 else f"({p.numerator})"


def to_text(e: Expr) -> str:
    """Print `e` in the parser's grammar; parse(to_text(e)) == e."""
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return f"{e.kind}{e.index}"
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Sqrt):
        return f"sqrt({to_text(e.operand)})"
    if isinstance(e, Neg):
        inner = to_text(e.operand)
        if e.operand.precedence <= Neg.precedence:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Pow):
        base = to_text(e.base)
        if e.base.precedence < 5:
            base = f"({base})"
        return f"{base}^{_fmt_exponent(e.exponent)}"
    op = {Add: "+", Sub: "-", Mul: "*", Div: "/"}[type(e)]
    left, right = to_text(e.left), to_text(e.right)
    if e.left.precedence < e.precedence:
        left = f"({left})"
    if e.right.precedence <= e.precedence:
        right = f"({right})"
    return f"{left} {op} {right}"


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)
_COORD = re.compile(r"([xy])(\d+)$")


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "ws":
            for k, ch in enumerate(m.group(), start=pos):
                if ch == "\n":
                    line += 1
                    line_start = k + 1
        else:
            tokens.append(_Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(_Token("end", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, dimension: int, params: Iterable[str] | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.n = dimension
        self.params = None if params is None else set(params)

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.take()
        if tok.text != text:
            got = tok.text or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, got {got!r}", tok.line, tok.column)
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.line, tok.column)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self) -> Expr:
        if self.peek().text == "-":
            self.take()
            return neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek().text == "^":
            self.take()
            return power(base, self.exponent())
        return base

    def _number(self) -> Fraction:
        tok = self.take()
        if tok.kind != "number":
            raise ExprSyntaxError("exponent must be a rational constant", tok.line, tok.column)
        return Fraction(tok.text)

    def exponent(self) -> Fraction:
        if self.peek().text == "(":
            self.take()
            sign = -1 if self.peek().text == "-" and self.take() else 1
            p = self._number()
            if self.peek().text == "/":
                self.take()
                q = self._number()
                if q == 0:
                    tok = self.tokens[self.i - 1]
                    raise ExprSyntaxError("zero denominator in exponent", tok.line, tok.column)
                p = p / q
            self.expect(")")
            return sign * p
        sign = -1 if self.peek().text == "-" and self.take() else 1
        return sign * self._number()

    def atom(self) -> Expr:
        tok = self.take()
        if tok.kind == "number":
            return Const(float(tok.text))
        if tok.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "name":
            if self.peek().text == "(":
                if tok.text != "sqrt":
                    raise UnknownIdentifierError(f"unknown function {tok.text!r}", tok.line, tok.column)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Sqrt(arg)
            m = _COORD.match(tok.text)
            if m:
                idx = int(m.group(2))
                if not 1 <= idx <= self.n:
                    raise IndexRangeError(
                        f"variable {tok.text} out of range for dimension {self.n}", tok.line, tok.column
                    )
                return Var(m.group(1), idx)
            if tok.text == "sqrt":
                raise ExprSyntaxError("sqrt requires an argument", tok.line, tok.column)
            if self.params is not None and tok.text not in self.params:
                raise UnknownIdentifierError(f"unknown identifier {tok.text!r}", tok.line, tok.column)
            return Param(tok.text)
        got = tok.text or "end of input"
        raise ExprSyntaxError(f"unexpected {got!r}", tok.line, tok.column)


def parse_metric(text: str, dimension: int, params: Iterable[str] | None = None) -> Expr:
    """Parse `text` into an expression over x1..xn, y1..yn.

    If `params` is given, any other bare identifier is rejected; otherwise bare
    identifiers become named parameters.
    """
    if dimension < 1:
        raise ValueError("dimension must be positive")
    return _Parser(text, dimension, params).parse()


# ---------------------------------------------------------------------------
# traversal helpers


def variables(e: Expr) -> set[Var]:
    seen, out, stack = set(), set(), [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Var):
            out.add(node)
        stack.extend(children(node))
    return out


def parameters(e: Expr) -> set[str]:
    seen, out, stack = set(), set(), [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Param):
            out.add(node.name)
        stack.extend(children(node))
    return out


def node_count(e: Expr) -> int:
    """Number of distinct nodes (shared subtrees counted once)."""
    seen, stack = set(), [e]
    while stack:
        node = stack.pop()
        if id(node) not in seen:
            seen.add(id(node))
            stack.extend(children(node))
    return len(seen)


def rebuild(e: Expr, hook: Callable[[Expr], Expr | None], memo: dict | None = None) -> Expr:
    """Rebuild `e`, replacing every node for which `hook` returns an Expr.

    `hook` sees a node before its children; replaced nodes are not descended
    into.  Unchanged subtrees are returned as the same objects.
    """
    memo = {} if memo is None else memo

    def go(node):
        key = id(node)
        if key in memo:
            return memo[key][1]
        new = hook(node)
        if new is not None:
            out = new
        elif isinstance(node, (Const, Var, Param)):
            out = node
        elif isinstance(node, BINARY):
            a, b = go(node.left), go(node.right)
            if a is node.left and b is node.right:
                out = node
            else:
                out = {Add: add, Sub: sub, Mul: mul, Div: div}[type(node)](a, b)
        elif isinstance(node, Neg):
            a = go(node.operand)
            out = node if a is node.operand else neg(a)
        elif isinstance(node, Sqrt):
            a = go(node.operand)
            out = node if a is node.operand else sqrt(a)
        elif isinstance(node, Pow):
            a = go(node.base)
            out = node if a is node.base else power(a, node.exponent)
        else:
            raise TypeError(node)
        memo[key] = (node, out)
        return out

    return go(e)


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class Environment:
    """Values of x, y and named parameters.

    `x` and `y` have shape (..., n); leading axes are a batch.
    """

    x: np.ndarray
    y: np.ndarray
    params: Mapping[str, float] = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return np.shape(self.y)[-1]

    @classmethod
    def of(cls, x=None, y=None, params=None, dimension=None):
        if x is None and y is None:
            raise ValueError("need x or y")
        if y is None:
            y = np.zeros_like(np.asarray(x, dtype=float))
        if x is None:
            x = np.zeros_like(np.asarray(y, dtype=float))
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        if dimension is not None and (x.shape[-1] != dimension or y.shape[-1] != dimension):
            raise DimensionMismatchError(f"expected {dimension} components")
        if x.shape != y.shape:
            raise DimensionMismatchError("x and y must have matching shapes")
        return cls(x, y, dict(params or {}))


def _check(cond, message: str, node: Expr) -> None:
    if np.any(cond):
        raise DomainError(message, node)


def _skip_check(cond, message: str, node: Expr) -> None:
    return None


def _eval_pow(v, p: Fraction, node: Expr, check=_check):
    if p.denominator == 1:
        if p < 0:
            check(np.asarray(v) == 0, "zero raised to a negative power", node)
        if np.isscalar(v) and check is not _skip_check:
            return float(v) ** int(p)
        arr = np.asarray(v)
        return np.power(arr if np.issubdtype(arr.dtype, np.floating) else arr.astype(float), float(p))
    check(np.asarray(v) < 0, "fractional power of a negative number", node)
    if p < 0:
        check(np.asarray(v) == 0, "zero raised to a negative power", node)
    return np.power(v, float(p))


def evaluate(e: Expr, env: Environment, params: Mapping[str, float] | None = None, strict: bool = True):
    """Evaluate `e`; a float for a single site, else an array with the environment's batch shape.

    With strict=False domain violations produce nan/inf instead of DomainError,
    which lets a batch of candidate sites be screened in one pass.
    """
    check = _check if strict else _skip_check
    bound = dict(env.params)
    if params:
        bound.update(params)
    n = env.dimension
    memo: dict[int, object] = {}

    def leaf(node):
        if isinstance(node, Const):
            return node.value
        if isinstance(node, Var):
            if node.index > n:
                raise DimensionMismatchError(f"{node!r} outside dimension {n}")
            arr = env.x if node.kind == "x" else env.y
            return arr[..., node.index - 1]
        if node.name not in bound:
            raise ExprError(f"unbound parameter {node.name!r}")
        return bound[node.name]

    def go(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, (Const, Var, Param)):
            out = leaf(node)
        elif isinstance(node, Add):
            out = go(node.left) + go(node.right)
        elif isinstance(node, Sub):
            out = go(node.left) - go(node.right)
        elif isinstance(node, Mul):
            out = go(node.left) * go(node.right)
        elif isinstance(node, Div):
            den = go(node.right)
            check(np.asarray(den) == 0, "division by zero", node)
            out = go(node.left) / den
        elif isinstance(node, Neg):
            out = -go(node.operand)
        elif isinstance(node, Sqrt):
            v = go(node.operand)
            check(np.asarray(v) < 0, "square root of a negative number", node)
            out = np.sqrt(v)
        elif isinstance(node, Pow):
            out = _eval_pow(go(node.base), node.exponent, node, check)
        else:
            raise TypeError(node)
        memo[key] = out
        return out

    if strict:
        out = go(e)
    else:
        with np.errstate(all="ignore"):
            out = go(e)
    batch = np.shape(env.y)[:-1]
    if not batch:
        return float(out)
    if np.shape(out) != batch:
        out = np.broadcast_to(out, batch).copy()
    return out


# ---------------------------------------------------------------------------
# symbolic calculus


def differentiate(e: Expr, var: Var | Param) -> Expr:
    """Exact symbolic partial derivative of `e` with respect to `var`."""
    if not isinstance(var, (Var, Param)):
        raise TypeError("differentiate with respect to a Var or Param")
    memo: dict[int, Expr] = {}

    def d(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, (Var, Param)):
            out = ONE if node == var else ZERO
        elif isinstance(node, Const):
            out = ZERO
        elif isinstance(node, Add):
            out = _sadd(d(node.left), d(node.right))
        elif isinstance(node, Sub):
            out = _ssub(d(node.left), d(node.right))
        elif isinstance(node, Mul):
            out = _sadd(_smul(d(node.left), node.right), _smul(node.left, d(node.right)))
        elif isinstance(node, Div):
            da, db = d(node.left), d(node.right)
            first = _sdiv(da, node.right)
            second = _sdiv(_smul(node.left, db), power(node.right, 2)) if not _is(db, 0) else ZERO
            out = _ssub(first, second)
        elif isinstance(node, Neg):
            out = _sneg(d(node.operand))
        elif isinstance(node, Sqrt):
            da = d(node.operand)
            out = ZERO if _is(da, 0) else _sdiv(da, _smul(Const(2.0), node))
        elif isinstance(node, Pow):
            da = d(node.base)
            p = node.exponent
            if _is(da, 0):
                out = ZERO
            else:
                lowered = ONE if p == 1 else (node.base if p == 2 else power(node.base, p - 1))
                out = _smul(_smul(Const(float(p)), lowered), da)
        else:
            raise TypeError(node)
        memo[key] = out
        return out

    return d(e)


def _key(v) -> tuple:
    if isinstance(v, Var):
        return ("var", v.kind, v.index)
    if isinstance(v, Param):
        return ("param", v.name)
    if isinstance(v, str):
        return ("param", v)
    raise TypeError(f"cannot bind {v!r}")


def substitute(e: Expr, bindings: Mapping, dimension: int | None = None) -> Expr:
    """Simultaneously replace variables/parameters by expressions.

    Keys are Var, Param or parameter names.  With `dimension` given, the
    replacement expressions may only use coordinates of that dimension.
    """
    table = {_key(k): as_expr(v) for k, v in bindings.items()}
    if dimension is not None:
        for key, val in table.items():
            if key[0] == "var" and key[2] > dimension:
                raise DimensionMismatchError(f"binding for {key[1]}{key[2]} outside dimension {dimension}")
            for v in variables(val):
                if v.index > dimension:
                    raise DimensionMismatchError(f"replacement uses {v!r}, outside dimension {dimension}")
    if not table:
        return e
    return rebuild(e, lambda node: table.get(_key(node)) if isinstance(node, (Var, Param)) else None)


def jacobian(psi: Sequence[Expr], dimension: int) -> list[list[Expr]]:
    """Symbolic Jacobian d psi_i / d x_j of a coordinate map x = psi(x~)."""
    if len(psi) != dimension:
        raise DimensionMismatchError(f"coordinate map has {len(psi)} components, expected {dimension}")
    return [[differentiate(p, x(j)) for j in range(1, dimension + 1)] for p in psi]


def change_coordinates(F: Expr, psi: Sequence[Expr], dimension: int) -> Expr:
    """Pull F back along x = psi(x~): returns F~(x~, y~) = F(psi(x~), Dpsi(x~) y~).

    The new chart reuses the names x1..xn, y1..yn.
    """
    psi = [as_expr(p) for p in psi]
    J = jacobian(psi, dimension)
    bindings = {}
    for i in range(dimension):
        bindings[x(i + 1)] = psi[i]
        bindings[y(i + 1)] = total(_smul(J[i][j], y(j + 1)) for j in range(dimension))
    return substitute(F, bindings, dimension)


def jacobian_at(psi: Sequence[Expr], dimension: int, xt, params=None, max_condition: float = 1e12):
    """Numeric Jacobian of psi at new-chart positions `xt` (shape (..., n))."""
    J = jacobian(psi, dimension)
    xt = np.asarray(xt, dtype=float)
    env = Environment(xt, np.zeros_like(xt), dict(params or {}))
    out = np.empty(xt.shape[:-1] + (dimension, dimension))
    for i in range(dimension):
        for j in range(dimension):
            out[..., i, j] = evaluate(J[i][j], env)
    cond = np.linalg.cond(out)
    if np.any(~np.isfinite(cond) | (cond > max_condition)):
        raise SingularJacobianError("coordinate change has a singular Jacobian at a requested site")
    return out


@dataclass(frozen=True)
class ChartPoint:
    """A point (x, y) of the slit tangent bundle; y must be nonzero."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        xv = np.asarray(self.x, dtype=float)
        yv = np.asarray(self.y, dtype=float)
        if xv.shape != yv.shape or xv.ndim != 1:
            raise DimensionMismatchError("x and y must be vectors of equal length")
        if not np.any(yv != 0):
            raise ValueError("y must be nonzero (point of the slit tangent bundle)")
        object.__setattr__(self, "x", xv)
        object.__setattr__(self, "y", yv)

    @property
    def dimension(self) -> int:
        return len(self.y)

    def env(self, params: Mapping[str, float] | None = None) -> Environment:
        return Environment(self.x, self.y, dict(params or {}))
