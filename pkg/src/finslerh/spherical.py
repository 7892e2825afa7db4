"""Closed forms for spherically symmetric metrics F = u * phi(r, s).

Here u = |y|, r = |x| and s = <x, y>/|y| (Euclidean quantities, indices lowered
with the Kronecker delta).  The closed forms serve as an oracle for the general
pipeline in `geometry`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expr import (
    Environment,
    Expr,
    Param,
    Pow,
    parse_metric,
    power,
    rebuild,
    sqrt,
    substitute,
    total,
    x as xvar,
    y as yvar,
)
from .geometry import Metric
from .jets import lift_batch, variable_codes

R_MIN = 1e-6

NAJAFI_PHI = "(sqrt((k^2 - c^2*r^2) + c^2*s^2) + c*s)/(k^2 - c^2*r^2)"


@dataclass(frozen=True)
class PhiJet:
    """phi and the partials used by the closed forms, at a batch of (r, s)."""

    r: np.ndarray
    s: np.ndarray
    phi: np.ndarray
    phi_r: np.ndarray
    phi_s: np.ndarray
    phi_ss: np.ndarray
    phi_rs: np.ndarray


@dataclass(frozen=True)
class SigmaSet:
    sigma0: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma3: np.ndarray


@dataclass(eq=False)
class SphericalMetric:
    """phi is an expression in the parameters r and s (plus any named ones)."""

    phi: Expr
    dimension: int
    r0: float = 1.0
    params: dict = field(default_factory=dict)
    name: str = "spherical"

    @classmethod
    def from_text(cls, text: str, dimension: int, r0: float = 1.0, params=None, name="spherical"):
        params = dict(params or {})
        phi = parse_metric(text, dimension, params=set(params) | {"r", "s"})
        return cls(phi, dimension, r0, params, name)

    def finsler_expr(self) -> Expr:
        """F = u phi(r, s) in chart coordinates.

        Even powers of r are rewritten through r**2 = |x|**2 so that F stays
        differentiable at x = 0 whenever phi depends on r only through r**2.
        """
        n = self.dimension
        u = sqrt(total(power(yvar(i), 2) for i in range(1, n + 1)))
        r2 = total(power(xvar(i), 2) for i in range(1, n + 1))
        s = total(xvar(i) * yvar(i) for i in range(1, n + 1)) / u
        r_sym = Param("r")

        def even_power(node):
            if isinstance(node, Pow) and node.base == r_sym and node.exponent.denominator == 1 \
                    and node.exponent.numerator % 2 == 0:
                return power(Param("__r2"), node.exponent / 2)
            return None

        phi = rebuild(self.phi, even_power)
        return u * substitute(phi, {"__r2": r2, "r": sqrt(r2), "s": s})

    def metric(self) -> Metric:
        n = self.dimension
        r2 = " + ".join(f"x{i}^2" for i in range(1, n + 1))
        domain = (parse_metric(f"{self.r0 ** 2!r} - ({r2})", n),)
        return Metric(self.finsler_expr(), n, dict(self.params), self.name, domain)

    # -- closed forms ------------------------------------------------------

    def phi_jet(self, r, s) -> PhiJet:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        s = np.atleast_1d(np.asarray(s, dtype=float))
        table = variable_codes(1, ["r", "s"])
        cr, cs = table[Param("r")], table[Param("s")]
        # request 0 seeds (r, s); request 1 seeds (s, s)
        codes = np.array([[cr, cs], [cs, cs]])
        env = Environment(np.zeros(r.shape + (1,)), np.ones(r.shape + (1,)), {**self.params, "r": r, "s": s})
        jet = lift_batch(self.phi, env, codes, table)
        c = jet.c
        return PhiJet(r, s, c[0][..., 0], c[1][..., 0], c[2][..., 0], c[3][..., 1], c[3][..., 0])

    def coordinates(self, X, Y):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        u = np.linalg.norm(Y, axis=-1)
        r = np.linalg.norm(X, axis=-1)
        s = np.einsum("ai,ai->a", X, Y) / u
        return X, Y, u, r, s

    def metric_tensor(self, X, Y) -> np.ndarray:
        X, Y, u, r, s = self.coordinates(X, Y)
        sig = sigma(self.phi_jet(r, s))
        return (
            sig.sigma0[:, None, None] * np.eye(self.dimension)
            + sig.sigma1[:, None, None] * np.einsum("ai,aj->aij", X, X)
            + (sig.sigma2 / u)[:, None, None] * (np.einsum("ai,aj->aij", X, Y) + np.einsum("ai,aj->aij", Y, X))
            + (sig.sigma3 / u**2)[:, None, None] * np.einsum("ai,aj->aij", Y, Y)
        )

    def pq(self, X, Y):
        """(P, Q) at each site; sites with r < R_MIN interpolate along the ray from r = 1e-4."""
        X, Y, u, r, s = self.coordinates(X, Y)
        return self._pq_rs(r, s)

    def _pq_rs(self, r, s):
        r = np.asarray(r, dtype=float)
        s = np.asarray(s, dtype=float)
        small = r < R_MIN
        if not np.any(small):
            return pq(self.phi_jet(r, s))
        P = np.empty_like(r)
        Q = np.empty_like(r)
        if np.any(~small):
            P[~small], Q[~small] = pq(self.phi_jet(r[~small], s[~small]))
        # along the ray with s/r fixed, quadratic through the radii h, 2h, 3h evaluated at r
        rs = r[small]
        ratio = np.where(rs > 0, s[small] / np.where(rs > 0, rs, 1.0), 0.0)
        h = 1e-4
        t = rs / h
        weights = ((t - 2) * (t - 3) / 2, -(t - 1) * (t - 3), (t - 1) * (t - 2) / 2)
        P[small] = 0.0
        Q[small] = 0.0
        for k, w in zip((1, 2, 3), weights):
            pk, qk = pq(self.phi_jet(np.full(ratio.shape, k * h), ratio * k * h))
            P[small] += w * pk
            Q[small] += w * qk
        return P, Q

    def spray(self, X, Y) -> np.ndarray:
        """G^i = u P y^i + u^2 Q x^i."""
        X, Y, u, r, s = self.coordinates(X, Y)
        P, Q = self._pq_rs(r, s)
        return (u * P)[:, None] * Y + (u**2 * Q)[:, None] * X

    def covariant(self, X, Y) -> np.ndarray:
        """H_j = u(P s0 + (r^2 - s^2) s2 Q) y_j + u^2 (P phi phi_s + (phi^2 + (r^2 - s^2) s1) Q) x_j."""
        X, Y, u, r, s = self.coordinates(X, Y)
        jet = self.phi_jet(r, s)
        sig = sigma(jet)
        P, Q = self._pq_rs(r, s)
        d = r**2 - s**2
        cy = u * (P * sig.sigma0 + d * sig.sigma2 * Q)
        cx = u**2 * (P * jet.phi * jet.phi_s + (jet.phi**2 + d * sig.sigma1) * Q)
        return cy[:, None] * Y + cx[:, None] * X


def sigma(jet: PhiJet) -> SigmaSet:
    phi, ps, pss, s = jet.phi, jet.phi_s, jet.phi_ss, jet.s
    base = phi - s * ps
    return SigmaSet(
        sigma0=phi * base,
        sigma1=ps**2 + phi * pss,
        sigma2=base * ps - s * phi * pss,
        sigma3=s**2 * phi * pss - s * base * ps,
    )


def pq(jet: PhiJet):
    """Spray factors P, Q of G^i = u P y^i + u^2 Q x^i (requires r > 0)."""
    phi, pr, ps, pss, prs, r, s = jet.phi, jet.phi_r, jet.phi_s, jet.phi_ss, jet.phi_rs, jet.r, jet.s
    if np.any(r <= 0):
        raise ValueError("P and Q need r > 0; use SphericalMetric.pq for the limit")
    den = phi - s * ps + (r**2 - s**2) * pss
    if np.any(den == 0):
        raise ArithmeticError("degenerate spherical metric: phi - s phi_s + (r^2 - s^2) phi_ss = 0")
    Q = (-pr + s * prs + r * pss) / (2 * r * den)
    P = -(Q / phi) * (s * phi + (r**2 - s**2) * ps) + (s * pr + r * ps) / (2 * r * phi)
    return P, Q


# ---------------------------------------------------------------------------
# the projectively and dually flat family


def najafi_phi(k: float, c: float) -> Expr:
    if k == 0:
        raise ValueError("k must be nonzero")
    return substitute(parse_metric(NAJAFI_PHI, 1, params={"k", "c", "r", "s"}), {"k": k, "c": c})


def najafi(k: float = 1.0, c: float = 0.3, dimension: int = 2, r0: float | None = None) -> SphericalMetric:
    if r0 is None:
        r0 = 0.9 * abs(k / c) if c else 1.0
    phi = parse_metric(NAJAFI_PHI, dimension, params={"k", "c", "r", "s"})
    return SphericalMetric(phi, dimension, r0, {"k": float(k), "c": float(c)}, name=f"najafi(k={k},c={c})")


def _najafi_parts(k, c, X, Y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    u = np.linalg.norm(Y, axis=-1)
    r = np.linalg.norm(X, axis=-1)
    s = np.einsum("ai,ai->a", X, Y) / u
    if np.any(c**2 * r**2 >= k**2):
        raise ValueError("Najafi metric requires c^2 r^2 < k^2")
    root = np.sqrt(-(c**2) * r**2 + c**2 * s**2 + k**2)
    return X, Y, u, r, s, root


def najafi_s_scalar(k: float, c: float, X, Y) -> np.ndarray:
    """H = -(1/6) c u^3 (root + c s)^3 / (c^2 r^2 - k^2)^3."""
    X, Y, u, r, s, root = _najafi_parts(k, c, X, Y)
    return -(1.0 / 6.0) * c * u**3 * (root + c * s) ** 3 / (c**2 * r**2 - k**2) ** 3


def najafi_covariant(k: float, c: float, X, Y) -> np.ndarray:
    """Closed-form H_j of the Najafi family (delta-lowered y_j, x_j)."""
    X, Y, u, r, s, root = _najafi_parts(k, c, X, Y)
    d = c**2 * r**2 - k**2
    cy = 0.5 * u * c * (root + c * s) ** 2 / (d**2 * root)
    cx = -0.5 * (root + c * s) ** 3 * c**2 * u**2 / (d**3 * root)
    return cy[:, None] * Y + cx[:, None] * X
