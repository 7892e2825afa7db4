"""Pointwise Finsler geometry: metric tensor, Cartan ladder, spray and its
Berwald ladder, the covariant coefficients H_i and their fiber-derivative
ladder, and the scalar candidates built from them.

Everything is evaluated numerically at sites of a chart.  `geometry` works on a
batch of sites in one jet pass; the single-point functions are thin wrappers.

Two independent routes are kept on purpose:

* the *tensor route* lifts F**2 once with up to five tags and reads every
  derivative tensor of F**2 (pure fiber up to order 5, fiber plus one position
  derivative up to order 4).  The spray, its Berwald ladder and the
  lemma-style H formulas come from these tensors;
* the *definition route* builds H_i = 1/4 (y^r d_r dot_i F^2 - d_i F^2) as an
  expression and differentiates that directly in y.

Identity checks compare the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    ChartPoint,
    Const,
    Environment,
    Expr,
    evaluate,
    differentiate,
    parse_metric,
    power,
    total,
    x as xvar,
    y as yvar,
    _smul,
    _ssub,
    _sdiv,
)
from .jets import DerivativeTable, lift_batch, multisets, variable_codes

MAX_CONDITION = 1e12


class DegenerateMetricError(ArithmeticError):
    """g_ij is singular or badly conditioned: not a Finsler point."""

    def __init__(self, message: str, sites: Sequence[int] = ()):
        super().__init__(message)
        self.sites = list(sites)


@dataclass(eq=False)
class Metric:
    """A Finsler function F(x, y) with its dimension and parameter values.

    `domain` holds expressions that must be positive at admissible sites.
    """

    F: Expr
    dimension: int
    params: dict = field(default_factory=dict)
    name: str = "metric"
    domain: tuple = ()

    def env(self, X, Y) -> Environment:
        return Environment(np.asarray(X, dtype=float), np.asarray(Y, dtype=float), dict(self.params))

    @cached_property
    def F2(self) -> Expr:
        return power(self.F, 2)

    @cached_property
    def H_exprs(self) -> list[Expr]:
        """H_i = 1/4 (y^r d_r dot_i F^2 - d_i F^2) as expressions."""
        n = self.dimension
        out = []
        for i in range(1, n + 1):
            dy = differentiate(self.F2, yvar(i))
            transport = total(_smul(yvar(r), differentiate(dy, xvar(r))) for r in range(1, n + 1))
            out.append(_smul(Const(0.25), _ssub(transport, differentiate(self.F2, xvar(i)))))
        return out

    @cached_property
    def P_expr(self) -> Expr:
        """Projective factor candidate y^i d_i F / (2F)."""
        n = self.dimension
        num = total(_smul(yvar(i), differentiate(self.F, xvar(i))) for i in range(1, n + 1))
        return _sdiv(num, _smul(Const(2.0), self.F))

    @cached_property
    def s_scalar_expr(self) -> Expr:
        """S-scalar candidate y^i d_i F^2 / 12."""
        n = self.dimension
        num = total(_smul(yvar(i), differentiate(self.F2, xvar(i))) for i in range(1, n + 1))
        return _smul(Const(1.0 / 12.0), num)


def as_metric(F, dimension: int | None = None, params: Mapping | None = None) -> Metric:
    if isinstance(F, Metric):
        return F
    if dimension is None:
        raise ValueError("dimension is required for a bare expression")
    if isinstance(F, str):
        F = parse_metric(F, dimension, params=set(params) if params else None)
    return Metric(F, dimension, dict(params or {}))


def stack_points(points) -> tuple[np.ndarray, np.ndarray]:
    """(X, Y) arrays of shape (N, n) from ChartPoints or an (X, Y) pair."""
    if isinstance(points, ChartPoint):
        points = [points]
    if isinstance(points, tuple) and len(points) == 2 and not isinstance(points[0], ChartPoint):
        X, Y = (np.atleast_2d(np.asarray(a, dtype=float)) for a in points)
    else:
        X = np.array([p.x for p in points], dtype=float)
        Y = np.array([p.y for p in points], dtype=float)
    if X.shape != Y.shape:
        raise ValueError("x and y batches differ in shape")
    if np.any(np.all(Y == 0, axis=1)):
        raise ValueError("y must be nonzero at every site")
    return X, Y


# ---------------------------------------------------------------------------
# derivative tensors


def _ycodes(n):
    return list(range(n))


def _xcodes(n):
    return list(range(n, 2 * n))


def _tensor_requests(n: int, fiber: int) -> list[tuple]:
    """Requests reaching every fiber derivative up to `fiber` and every
    (fiber - 1)-fold fiber derivative combined with one position derivative."""
    ys, xs = _ycodes(n), _xcodes(n)
    reqs = list(multisets(ys, fiber))
    reqs += [m + (xc,) for m in multisets(ys, fiber - 1) for xc in xs]
    return reqs


def f_tensors(metric: Metric, X, Y, fiber: int = 5) -> dict:
    """Derivative tensors of F and F**2 at a batch of sites.

    Keys: 'Y' (list, Y[m] = dot^m F^2 of shape (N, n,...)), 'X' (list, X[m] =
    dot^m d F^2 with the position index last), 'FY'/'FX' likewise for F.
    """
    n = metric.dimension
    table = DerivativeTable(_tensor_requests(n, fiber))
    env = metric.env(X, Y)
    jf = lift_batch(metric.F, env, table.codes, variable_codes(n))
    jf2 = jf * jf
    ys, xs = _ycodes(n), _xcodes(n)
    out = {"Y": [], "X": [], "FY": [], "FX": []}
    for m in range(fiber + 1):
        out["Y"].append(table.gather(jf2, [ys] * m))
        if m < 3:
            out["FY"].append(table.gather(jf, [ys] * m))
        if m < fiber:
            out["X"].append(table.gather(jf2, [ys] * m + [xs]))
            if m < 2:
                out["FX"].append(table.gather(jf, [ys] * m + [xs]))
    return out


def _fiber_ladder(exprs: Sequence[Expr], metric: Metric, X, Y, depth: int) -> list[np.ndarray]:
    """Fiber derivatives up to `depth` of a list of expressions.

    Returns L with L[m][a, i, j1..jm] = dot_{j1..jm} exprs[i] at site a.
    """
    n = metric.dimension
    ys = _ycodes(n)
    table = DerivativeTable(multisets(ys, depth)) if depth else None
    env = metric.env(X, Y)
    if depth == 0:
        vals = [np.broadcast_to(evaluate(e, env), X.shape[:-1]) for e in exprs]
        return [np.stack(vals, axis=-1)]
    jets = lift_batch(list(exprs), env, table.codes, variable_codes(n))
    ladder = []
    for m in range(depth + 1):
        ladder.append(np.stack([table.gather(j, [ys] * m) for j in jets], axis=1))
    return ladder


def _check_metric(g: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(g)
    bad = ~np.isfinite(cond) | (cond > MAX_CONDITION)
    if np.any(bad):
        idx = np.flatnonzero(bad)
        raise DegenerateMetricError(
            f"not a Finsler point: metric tensor degenerate (condition number {cond[idx[0]]:.3g})", idx
        )
    return cond


# ---------------------------------------------------------------------------
# the batched geometry


@dataclass
class PointGeometry:
    """All evaluated objects at one chart point (see `Geometry` for meanings)."""

    x: np.ndarray
    y: np.ndarray
    F: float
    E: float
    ell: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    y_flat_g: np.ndarray
    y_flat_delta: np.ndarray
    C3: np.ndarray
    C4: np.ndarray
    C5: np.ndarray
    G: np.ndarray
    N: np.ndarray
    G2: np.ndarray
    G3: np.ndarray
    H: np.ndarray
    H2: np.ndarray
    H3: np.ndarray
    H4: np.ndarray
    H5: np.ndarray
    H_up: np.ndarray
    L: np.ndarray
    gamma: np.ndarray
    H_scalar_candidate: float
    K_candidate: float
    P_factor: float
    P_j: np.ndarray | None = None
    P_jk: np.ndarray | None = None
    P_jkh: np.ndarray | None = None


@dataclass
class Geometry:
    """Geometry at N sites; every array has the site axis first.

    Index conventions (all lower indices unless named *_up):
      g[a,i,j] = 1/2 dot_i dot_j F^2, C3/C4/C5 the Cartan ladder (1/4 dot^m F^2),
      G[a,i] spray, N[a,i,j] = dot_j G^i, G2[a,i,j,k] = dot_j dot_k G^i,
      G3[a,i,j,k,h] = dot_h G2, H[a,i], H2[a,i,j] = dot_j H_i, H3, H4 = H_ijkh,
      H5[a,i,j,k,h,m] = dot_m H_ijkh, H_up[a,i,j,k] = g^{ir} H_rjk,
      L[a,j,k,h] = y^i H_ijkh, gamma[a,i,j,k] formal Christoffel symbols of g.
    `raw` keeps the derivative tensors of F and F**2 and the tensor-route H ladder.
    """

    metric: Metric
    x: np.ndarray
    y: np.ndarray
    F: np.ndarray
    E: np.ndarray
    ell: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    y_flat_g: np.ndarray
    y_flat_delta: np.ndarray
    C3: np.ndarray
    C4: np.ndarray
    C5: np.ndarray
    G: np.ndarray
    N: np.ndarray
    G2: np.ndarray
    G3: np.ndarray
    H: np.ndarray
    H2: np.ndarray
    H3: np.ndarray
    H4: np.ndarray
    H5: np.ndarray
    H_up: np.ndarray
    L: np.ndarray
    gamma: np.ndarray
    H_scalar_candidate: np.ndarray
    K_candidate: np.ndarray
    P_factor: np.ndarray
    condition: np.ndarray
    raw: dict = field(default_factory=dict, repr=False)
    _p_ladder: list | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.F)

    @property
    def P_ladder(self) -> list[np.ndarray]:
        """[P, P_j, P_jk, P_jkh] from the projective-factor expression."""
        if self._p_ladder is None:
            lad = _fiber_ladder([self.metric.P_expr], self.metric, self.x, self.y, 3)
            self._p_ladder = [a[:, 0] for a in lad]
        return self._p_ladder

    def point(self, a: int, with_projective: bool = False) -> PointGeometry:
        names = [f.name for f in fields(PointGeometry)]
        kwargs = {}
        for name in names:
            if name.startswith("P_") and name != "P_factor":
                continue
            val = getattr(self, name)[a]
            kwargs[name] = float(val) if np.ndim(val) == 0 else np.array(val)
        if with_projective:
            lad = self.P_ladder
            kwargs.update(P_j=lad[1][a], P_jk=lad[2][a], P_jkh=lad[3][a])
        return PointGeometry(**kwargs)


def _solve_up(g_inv, rhs):
    return np.einsum("air,ar...->ai...", g_inv, rhs)


def geometry(metric: Metric, points) -> Geometry:
    """Evaluate every pointwise object of `metric` at a batch of sites."""
    metric = as_metric(metric)
    X, Y = stack_points(points)
    t = f_tensors(metric, X, Y, fiber=5)
    Ys, Xs = t["Y"], t["X"]
    Fv = t["FY"][0]
    g = 0.5 * Ys[2]
    cond = _check_metric(g)
    g_inv = np.linalg.inv(g)
    C3, C4, C5 = 0.25 * Ys[3], 0.25 * Ys[4], 0.25 * Ys[5]

    # tensor route: H ladder written with derivatives of F^2
    X0, X1, X2, X3, X4 = Xs
    h0 = 0.25 * (np.einsum("ar,air->ai", Y, X1) - X0)
    h1 = 0.25 * (X1 - np.swapaxes(X1, 1, 2) + np.einsum("ar,aijr->aij", Y, X2))
    h2 = 0.25 * (
        np.einsum("aikj->aijk", X2) - np.einsum("ajki->aijk", X2) + X2 + np.einsum("ar,aijkr->aijk", Y, X3)
    )
    h3 = 0.25 * (
        np.einsum("aikhj->aijkh", X3)
        - np.einsum("ajkhi->aijkh", X3)
        + np.einsum("aijhk->aijkh", X3)
        + X3
        + np.einsum("ar,aijkhr->aijkh", Y, X4)
    )

    # spray and its Berwald ladder from g_ir G^r = H_i differentiated in y
    G = np.einsum("air,ar->ai", g_inv, h0)
    N = _solve_up(g_inv, h1 - 2 * np.einsum("airj,ar->aij", C3, G))
    G2 = _solve_up(
        g_inv,
        h2
        - 2 * np.einsum("airjk,ar->aijk", C4, G)
        - 2 * np.einsum("airj,ark->aijk", C3, N)
        - 2 * np.einsum("airk,arj->aijk", C3, N),
    )
    G3 = _solve_up(
        g_inv,
        h3
        - 2 * np.einsum("airjkh,ar->aijkh", C5, G)
        - 2 * np.einsum("airjk,arh->aijkh", C4, N)
        - 2 * np.einsum("airkh,arj->aijkh", C4, N)
        - 2 * np.einsum("airjh,ark->aijkh", C4, N)
        - 2 * np.einsum("airj,arkh->aijkh", C3, G2)
        - 2 * np.einsum("airk,arjh->aijkh", C3, G2)
        - 2 * np.einsum("airh,arjk->aijkh", C3, G2),
    )

    # definition route: H_i expressions differentiated in y
    lad = _fiber_ladder(metric.H_exprs, metric, X, Y, 4)
    H, H2, H3, H4, H5 = lad
    H_up = np.einsum("air,arjk->aijk", g_inv, H3)
    L = np.einsum("ai,aijkh->ajkh", Y, H4)

    dg = 0.5 * X2  # dg[a,i,j,k] = d_k g_ij
    gamma = 0.5 * np.einsum(
        "air,arjk->aijk",
        g_inv,
        np.einsum("akrj->arjk", dg) + np.einsum("arjk->arjk", dg) - np.einsum("ajkr->arjk", dg),
    )

    s_cand = np.einsum("ai,ai->a", Y, X0) / 12.0
    dF = t["FX"][0]
    P = np.einsum("ai,ai->a", Y, dF) / (2 * Fv)

    raw = {
        "Y": Ys,
        "X": Xs,
        "FY": t["FY"],
        "FX": t["FX"],
        "H_tensor": [h0, h1, h2, h3],
    }
    return Geometry(
        metric=metric,
        x=X,
        y=Y,
        F=Fv,
        E=0.5 * Fv**2,
        ell=t["FY"][1],
        g=g,
        g_inv=g_inv,
        y_flat_g=np.einsum("aij,aj->ai", g, Y),
        y_flat_delta=Y.copy(),
        C3=C3,
        C4=C4,
        C5=C5,
        G=G,
        N=N,
        G2=G2,
        G3=G3,
        H=H,
        H2=H2,
        H3=H3,
        H4=H4,
        H5=H5,
        H_up=H_up,
        L=L,
        gamma=gamma,
        H_scalar_candidate=s_cand,
        K_candidate=-2.0 * s_cand,
        P_factor=P,
        condition=cond,
        raw=raw,
    )


def point_geometry(metric: Metric, p: ChartPoint) -> PointGeometry:
    return geometry(metric, [p]).point(0, with_projective=True)


# ---------------------------------------------------------------------------
# single-purpose evaluations (cheaper than the full ladder)


def _low_order(metric: Metric, points):
    X, Y = stack_points(points)
    t = f_tensors(metric, X, Y, fiber=2)
    g = 0.5 * t["Y"][2]
    _check_metric(g)
    return X, Y, t, g


def metric_tensor(F: Metric, p: ChartPoint) -> np.ndarray:
    """g_ij = 1/2 dot_i dot_j F^2 at p."""
    _, _, _, g = _low_order(F, [p])
    return g[0]


def metric_tensors(F: Metric, points) -> np.ndarray:
    return _low_order(F, points)[3]


def _h_from_tensors(Y, t):
    return 0.25 * (np.einsum("ar,air->ai", Y, t["X"][1]) - t["X"][0])


def covariant_coefficients_batch(F: Metric, points) -> np.ndarray:
    X, Y, t, g = _low_order(F, points)
    return _h_from_tensors(Y, t)


def spray_coefficients_batch(F: Metric, points) -> np.ndarray:
    """G^i = 1/4 g^{ih} (y^r d_r dot_h F^2 - d_h F^2) at each site."""
    X, Y, t, g = _low_order(F, points)
    return np.linalg.solve(g, _h_from_tensors(Y, t)[..., None])[..., 0]


def spray_coefficients(F: Metric, p: ChartPoint) -> np.ndarray:
    return spray_coefficients_batch(F, [p])[0]


def covariant_coefficients(F: Metric, p: ChartPoint) -> np.ndarray:
    """H_i from the defining expression (not via g_ir G^r)."""
    X, Y = stack_points([p])
    lad = _fiber_ladder(F.H_exprs, F, X, Y, 0)
    return lad[0][0]


def h_ladder(F: Metric, p: ChartPoint):
    """(H_ij, H_ijk, H_ijkh, L_jkh) at p."""
    geo = geometry(F, [p])
    return geo.H2[0], geo.H3[0], geo.H4[0], geo.L[0]


def cartan_ladder(F: Metric, p: ChartPoint):
    geo = geometry(F, [p])
    return geo.C3[0], geo.C4[0], geo.C5[0]


def connections(F: Metric, p: ChartPoint):
    """(N^i_j, G^i_jk, G^i_jkh, gamma^i_jk, H^i_jk) at p."""
    geo = geometry(F, [p])
    return geo.N[0], geo.G2[0], geo.G3[0], geo.gamma[0], geo.H_up[0]


def s_scalar_candidate(F: Metric, p: ChartPoint) -> float:
    X, Y, t, _ = _low_order(F, [p])
    return float(np.einsum("ai,ai->a", Y, t["X"][0])[0] / 12.0)


def s_scalar_gradient(F: Metric, points) -> np.ndarray:
    """dot_i of the S-scalar candidate, from its own expression."""
    X, Y = stack_points(points)
    return _fiber_ladder([F.s_scalar_expr], F, X, Y, 1)[1][:, 0]


def hv_berwald_candidate(geo: Geometry) -> np.ndarray:
    """G_jikh := g_ir dot_h G^r_jk, stored as [a, i, j, k, h]."""
    return np.einsum("air,arjkh->aijkh", geo.g, geo.G3)
