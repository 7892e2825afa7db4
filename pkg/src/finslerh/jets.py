"""Exact mixed partial derivatives by arithmetic over tagged nilpotent infinitesimals.

A jet with k tags carries 2**k coefficients indexed by subsets of the tag set
(bit masks).  Each tag squares to zero, so the product of two jets is a subset
convolution.  Seeding tag t on a chart variable makes the coefficient of a
subset S equal to the mixed partial with respect to the variables seeded by S.
Repeated derivatives use distinct tags on the same variable.

Coefficient arrays have shape (2**k, *batch); the batch axes let one pass over
an expression evaluate many sites and many derivative requests at once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    Add,
    ChartPoint,
    Const,
    Div,
    DomainError,
    Environment,
    Expr,
    ExprError,
    Mul,
    Neg,
    Param,
    Pow,
    Sqrt,
    Sub,
    Var,
    _eval_pow,
    evaluate,
)

MAX_TAGS = 6
MAX_FIBER = 5
MAX_POSITION = 1


class OrderError(ValueError):
    pass


@lru_cache(maxsize=None)
def _product_table(k: int):
    """Index arrays for the subset convolution, grouped by result subset."""
    left, right, starts = [], [], []
    for s in range(1 << k):
        starts.append(len(left))
        a = s
        while True:
            left.append(a)
            right.append(s ^ a)
            if a == 0:
                break
            a = (a - 1) & s
    return np.array(left), np.array(right), np.array(starts)


def _binomial(p: Fraction, m: int) -> float:
    out = Fraction(1)
    for i in range(m):
        out *= (p - i) / (i + 1)
    return float(out)


class Jet:
    """Truncated polynomial in nilpotent tags e_1..e_k (e_t**2 == 0)."""

    __slots__ = ("c",)
    __array_ufunc__ = None

    def __init__(self, c: np.ndarray):
        self.c = c

    @property
    def k(self) -> int:
        return int(self.c.shape[0]).bit_length() - 1

    @property
    def value(self):
        return self.c[0]

    def coefficient(self, mask: int):
        return self.c[mask]

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.c + other.c)
        shape = np.broadcast_shapes(np.shape(other), self.c.shape[1:])
        c = np.broadcast_to(self.c, self.c.shape[:1] + shape).copy()
        c[0] += other
        return Jet(c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            ia, ib, starts = _product_table(self.k)
            prod = self.c[ia] * other.c[ib]
            return Jet(np.add.reduceat(prod, starts, axis=0))
        return Jet(self.c * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet(self.c / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def nilpotent(self) -> "Jet":
        c = self.c.copy()
        c[0] = 0.0
        return Jet(c)

    def series(self, coefficients: Sequence) -> "Jet":
        """Compose with sum_m coefficients[m] * t**m about the value.

        coefficients[m] must be f^(m)(value) / m!; exact because tags are nilpotent.
        """
        eps = self.nilpotent()
        k = self.k
        out = None
        for m in range(min(k, len(coefficients) - 1), -1, -1):
            if out is None:
                out = Jet(np.zeros_like(self.c))
                out.c[0] = coefficients[m]
            else:
                out = out * eps
                out.c[0] = out.c[0] + coefficients[m]
        return out

    def pow(self, p: Fraction, node: Expr | None = None) -> "Jet":
        p = Fraction(p)
        a0 = self.c[0]
        if p.denominator == 1 and p >= 0:
            result = Jet(np.zeros_like(self.c))
            result.c[0] = 1.0
            base, e = self, int(p)
            while e:
                if e & 1:
                    result = result * base
                e >>= 1
                if e:
                    base = base * base
            return result
        if p.denominator == 1:
            if np.any(a0 == 0):
                raise DomainError("zero raised to a negative power", node or Const(0.0))
        elif np.any(a0 <= 0):
            raise DomainError("fractional power at a non-positive value", node or Const(0.0))
        k = self.k
        coeffs = [_binomial(p, m) * np.power(a0, float(p - m)) for m in range(k + 1)]
        return self.series(coeffs)

    def reciprocal(self, node: Expr | None = None) -> "Jet":
        return self.pow(Fraction(-1), node)

    def sqrt(self, node: Expr | None = None) -> "Jet":
        if np.any(self.c[0] < 0):
            raise DomainError("square root of a negative number", node or Const(0.0))
        return self.pow(Fraction(1, 2), node)


# ---------------------------------------------------------------------------
# lifting expressions


def variable_codes(dimension: int, params: Sequence[str] = ()) -> dict:
    """Integer codes of seedable variables: y_i -> i-1, x_i -> n+i-1, params after."""
    codes = {}
    for i in range(1, dimension + 1):
        codes[Var("y", i)] = i - 1
        codes[Var("x", i)] = dimension + i - 1
    for j, name in enumerate(sorted(params)):
        codes[Param(name)] = 2 * dimension + j
    return codes


def _code_of(v, table: dict) -> int:
    if isinstance(v, str):
        v = Param(v)
    try:
        return table[v]
    except KeyError:
        raise OrderError(f"cannot seed {v!r}") from None


def lift_batch(e: Expr | Sequence[Expr], env: Environment, codes: np.ndarray, table: dict,
               params: Mapping[str, float] | None = None):
    """Lift `e` to jets for a batch of requests.

    codes has shape (k, R): codes[t, r] is the variable seeded by tag t in request r.
    Results have batch shape env_batch + (R,).  Subexpressions that do not depend on
    any seeded variable stay plain arrays.  A sequence of expressions shares one memo.
    """
    codes = np.asarray(codes, dtype=int)
    if codes.ndim != 2:
        raise ValueError("codes must have shape (k, R)")
    k = codes.shape[0]
    if k > MAX_TAGS:
        raise OrderError(f"at most {MAX_TAGS} tags")
    bound = dict(env.params)
    if params:
        bound.update(params)
    n = env.dimension
    env_batch = np.shape(env.y)[:-1]
    R = codes.shape[1]
    size = 1 << k
    memo: dict[int, object] = {}

    def seeded(base_value, code):
        base = np.broadcast_to(np.asarray(base_value, dtype=float)[..., None], env_batch + (1,))
        if k == 0 or not np.any(codes == code):
            return base
        c = np.zeros((size,) + env_batch + (R,))
        c[0] = base
        for t in range(k):
            mask = codes[t] == code
            if mask.any():
                c[1 << t] = mask.astype(float)
        return Jet(c)

    def leaf(node):
        if isinstance(node, Const):
            return node.value
        if isinstance(node, Var):
            if node.index > n:
                raise ExprError(f"{node!r} outside dimension {n}")
            arr = env.x if node.kind == "x" else env.y
            return seeded(arr[..., node.index - 1], table.get(node, -1))
        if node.name not in bound:
            raise ExprError(f"unbound parameter {node.name!r}")
        return seeded(bound[node.name], table.get(node, -1))

    def go(node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, (Const, Var, Param)):
            out = leaf(node)
        elif isinstance(node, Add):
            out = _add(go(node.left), go(node.right))
        elif isinstance(node, Sub):
            out = _add(go(node.left), _neg(go(node.right)))
        elif isinstance(node, Mul):
            out = _mul(go(node.left), go(node.right))
        elif isinstance(node, Div):
            den = go(node.right)
            d0 = den.c[0] if isinstance(den, Jet) else den
            if np.any(np.asarray(d0) == 0):
                raise DomainError("division by zero", node)
            num = go(node.left)
            out = _mul(num, den.reciprocal(node)) if isinstance(den, Jet) else num / den
        elif isinstance(node, Neg):
            out = _neg(go(node.operand))
        elif isinstance(node, Sqrt):
            v = go(node.operand)
            if isinstance(v, Jet):
                out = v.sqrt(node)
            else:
                if np.any(np.asarray(v) < 0):
                    raise DomainError("square root of a negative number", node)
                out = np.sqrt(v)
        elif isinstance(node, Pow):
            v = go(node.base)
            if isinstance(v, Jet):
                out = v.pow(node.exponent, node)
            else:
                out = _eval_pow(v, node.exponent, node)
        else:
            raise TypeError(node)
        memo[key] = out
        return out

    def finish(v):
        if isinstance(v, Jet):
            full = env_batch + (R,)
            if v.c.shape[1:] != full:
                v = Jet(np.broadcast_to(v.c, (size,) + full).copy())
            return v
        c = np.zeros((size,) + env_batch + (R,))
        c[0] = v
        return Jet(c)

    if isinstance(e, Expr):
        return finish(go(e))
    return [finish(go(item)) for item in e]


def _add(a, b):
    if isinstance(a, Jet):
        return a + b
    if isinstance(b, Jet):
        return b + a
    return a + b


def _neg(a):
    return -a


def _mul(a, b):
    if isinstance(a, Jet):
        return a * b
    if isinstance(b, Jet):
        return b * a
    return a * b


# ---------------------------------------------------------------------------
# derivative requests


@dataclass(frozen=True)
class DerivativeRequest:
    """Mixed partial at a base point: a multiset of fiber/position variables."""

    point: ChartPoint
    variables: tuple

    def __post_init__(self):
        # a request is a multiset: canonical order makes permuted requests bit-identical
        vs = tuple(sorted(self.variables, key=lambda v: (v.kind != "y", v.index) if isinstance(v, Var) else (2, 0)))
        object.__setattr__(self, "variables", vs)
        fiber = sum(1 for v in vs if isinstance(v, Var) and v.kind == "y")
        position = sum(1 for v in vs if isinstance(v, Var) and v.kind == "x")
        if len(vs) > MAX_TAGS:
            raise OrderError(f"total order {len(vs)} exceeds {MAX_TAGS}")
        if fiber > MAX_FIBER:
            raise OrderError(f"{fiber} fiber derivatives requested, at most {MAX_FIBER}")
        if position > MAX_POSITION:
            raise OrderError(f"{position} position derivatives requested, at most {MAX_POSITION}")
        for v in vs:
            if not isinstance(v, Var):
                raise OrderError(f"cannot differentiate with respect to {v!r}")
            if v.index > self.point.dimension:
                raise OrderError(f"{v!r} outside dimension {self.point.dimension}")


def mixed_partial(e: Expr, req: DerivativeRequest, params: Mapping[str, float] | None = None) -> float:
    """Exact mixed partial of `e` at the request's base point."""
    n = req.point.dimension
    table = variable_codes(n)
    codes = np.array([[_code_of(v, table)] for v in req.variables], dtype=int).reshape(len(req.variables), 1)
    jet = lift_batch(e, req.point.env(params), codes, table)
    return float(jet.c[-1][..., 0])


def partial_at(e: Expr, env: Environment, variables: Sequence, params: Mapping[str, float] | None = None):
    """Mixed partial with respect to `variables` (Var or parameter names) over a batched env."""
    names = sorted({v if isinstance(v, str) else v.name for v in variables if isinstance(v, (str, Param))})
    table = variable_codes(env.dimension, names)
    codes = np.array([[_code_of(v, table)] for v in variables], dtype=int).reshape(len(variables), 1)
    jet = lift_batch(e, env, codes, table, params)
    return jet.c[-1][..., 0]


def _gradient(e, p: ChartPoint, kind: str, params):
    n = p.dimension
    table = variable_codes(n)
    codes = np.array([[table[Var(kind, i)] for i in range(1, n + 1)]])
    jet = lift_batch(e, p.env(params), codes, table)
    return np.array(jet.c[1], dtype=float)


def gradient_y(e: Expr, p: ChartPoint, params: Mapping[str, float] | None = None) -> np.ndarray:
    return _gradient(e, p, "y", params)


def gradient_x(e: Expr, p: ChartPoint, params: Mapping[str, float] | None = None) -> np.ndarray:
    return _gradient(e, p, "x", params)


# ---------------------------------------------------------------------------
# batched symmetric derivative tensors


def multisets(codes: Sequence[int], order: int) -> list[tuple]:
    return list(itertools.combinations_with_replacement(codes, order))


class DerivativeTable:
    """Lookup from variable multisets to (subset mask, request) in a jet batch."""

    def __init__(self, requests: Sequence[tuple]):
        self.requests = [tuple(r) for r in requests]
        k = len(self.requests[0]) if self.requests else 0
        if any(len(r) != k for r in self.requests):
            raise ValueError("all requests in a batch must have the same number of tags")
        self.k = k
        self.codes = np.array(self.requests, dtype=int).T.reshape(k, len(self.requests))
        self.index: dict[tuple, tuple[int, int]] = {}
        for r, req in enumerate(self.requests):
            for mask in range(1 << k):
                key = tuple(sorted(req[t] for t in range(k) if mask >> t & 1))
                self.index.setdefault(key, (mask, r))

    def gather(self, jet: Jet, axes: Sequence[Sequence[int]]) -> np.ndarray:
        """Tensor T[..., i1, ..., im] = derivative wrt (axes[0][i1], ..., axes[m-1][im])."""
        masks, reqs = [], []
        for combo in itertools.product(*axes):
            mask, r = self.index[tuple(sorted(combo))]
            masks.append(mask)
            reqs.append(r)
        vals = jet.c[np.array(masks, dtype=int), ..., np.array(reqs, dtype=int)]
        # advanced indices separated by a slice -> result axis order (T, *env_batch)
        vals = np.moveaxis(vals, 0, -1)
        return vals.reshape(vals.shape[:-1] + tuple(len(a) for a in axes))


# ---------------------------------------------------------------------------
# finite differences


FD_STEP = 0.02
FD_SHRINK = 1.2
FD_LEVELS = 8


def fd_partial(e: Expr, req: DerivativeRequest | tuple, step: float = FD_STEP, shrink: float = FD_SHRINK,
               levels: int = FD_LEVELS, params: Mapping[str, float] | None = None, dtype=np.longdouble):
    """Mixed partial by central differences with Ridders extrapolation.

    The product stencil of central differences is evaluated at steps
    step / shrink**i for i < levels, extrapolated in h**2 through a Neville
    tableau, and at each site the tableau entry with the smallest error
    estimate is returned.  Fiber steps scale with |y| (the natural length of a
    homogeneous function), position steps with max(1, |x_i|).  Stencil values
    are computed in `dtype`, extended precision by default.

    `req` is a DerivativeRequest, or a pair (Environment, variables) for batched
    base points.
    """
    if isinstance(req, DerivativeRequest):
        env, vs = req.point.env(params), req.variables
    else:
        env, vs = req
        vs = tuple(vs)
    m = len(vs)
    if m == 0:
        return evaluate(e, env, params)
    if step <= 0 or shrink <= 1 or levels < 2:
        raise ValueError("need step > 0, shrink > 1 and levels >= 2")
    x0 = np.asarray(env.x, dtype=dtype)
    y0 = np.asarray(env.y, dtype=dtype)
    u = np.linalg.norm(y0, axis=-1)
    u = np.where(u > 0, u, 1.0)
    scale = [step * (u if v.kind == "y" else np.maximum(1.0, np.abs(x0[..., v.index - 1]))) for v in vs]
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=m)))  # (2**m, m)
    weights = np.prod(signs, axis=1)

    def estimate(factor):
        xs = np.broadcast_to(x0, (len(signs),) + x0.shape).copy()
        ys = np.broadcast_to(y0, (len(signs),) + y0.shape).copy()
        for t, v in enumerate(vs):
            target = xs if v.kind == "x" else ys
            shift = signs[:, t].reshape((-1,) + (1,) * (x0.ndim - 1)) * (factor * scale[t])
            target[..., v.index - 1] += shift
        vals = evaluate(e, Environment(xs, ys, dict(env.params)), params)
        vals = np.broadcast_to(vals, (len(signs),) + x0.shape[:-1])
        denom = np.prod([2 * factor * s for s in scale], axis=0)
        return np.tensordot(weights, vals, axes=1) / denom

    ratio = shrink * shrink
    best = err = None
    prev = [estimate(1.0)]
    for i in range(1, levels):
        row = [estimate(shrink ** -i)]
        fac = ratio
        for j in range(1, i + 1):
            row.append((row[j - 1] * fac - prev[j - 1]) / (fac - 1))
            fac *= ratio
            e_ij = np.maximum(np.abs(row[j] - row[j - 1]), np.abs(row[j] - prev[j - 1]))
            if best is None:
                best, err = row[j], e_ij
            else:
                better = e_ij < err
                best, err = np.where(better, row[j], best), np.where(better, e_ij, err)
        prev = row
    out = np.asarray(best, dtype=float)
    return float(out) if out.ndim == 0 else out
