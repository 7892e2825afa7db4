"""Pointwise identities between the objects computed in `geometry`.

Every identity is evaluated as a scaled residual per site:
|lhs - rhs| / max(1, largest magnitude among lhs, rhs and their constituent terms).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Geometry, covariant_coefficients_batch, hv_berwald_candidate, spray_coefficients_batch

TOLERANCE = 1e-9
HOMOGENEITY_FACTORS = (0.5, 2.0, 3.0)


@dataclass(frozen=True)
class IdentityResult:
    name: str
    residuals: np.ndarray  # per site
    tolerance: float
    gating: bool = True

    @property
    def worst(self) -> float:
        return float(np.max(self.residuals)) if self.residuals.size else 0.0

    @property
    def witness(self) -> int:
        return int(np.argmax(self.residuals))

    @property
    def passed(self) -> bool:
        return bool(np.all(self.residuals < self.tolerance))


def _mag(a):
    a = np.asarray(a)
    return np.abs(a).reshape(a.shape[0], -1).max(axis=1) if a.ndim > 1 else np.abs(a)


def scaled_residual(lhs, rhs, *terms) -> np.ndarray:
    """Per-site max|lhs - rhs| over max(1, |lhs|, |rhs|, |terms|)."""
    lhs, rhs = np.asarray(lhs), np.asarray(rhs)
    scale = np.maximum(1.0, np.maximum(_mag(lhs), _mag(rhs)))
    for t in terms:
        scale = np.maximum(scale, _mag(t))
    return _mag(lhs - rhs) / scale


def cyclic(f):
    """Sum of f over the cyclic permutations of (j, k, h); f takes index letters."""
    return f("j", "k", "h") + f("k", "h", "j") + f("h", "j", "k")


def _derivatives(geo: Geometry):
    X = geo.raw["X"]
    dg = 0.5 * X[2]  # dg[a,i,j,r] = d_r g_ij
    dC = 0.25 * X[3]  # dC[a,i,j,k,r] = d_r C_ijk
    dC4 = 0.25 * X[4]  # dC4[a,i,j,k,h,r] = d_r C_ijkh
    return dg, dC, dC4


def core_identities(geo: Geometry, tol: float = TOLERANCE) -> list[IdentityResult]:
    """The identities that hold for every Finsler metric."""
    y = geo.y
    X = geo.raw["X"]
    dg, dC, dC4 = _derivatives(geo)
    ein = np.einsum
    out = []

    def add(name, lhs, rhs, *terms, gating=True):
        out.append(IdentityResult(name, scaled_residual(lhs, rhs, *terms), tol, gating))

    # homogeneity and metric identities
    add("euler_F", ein("ai,ai->a", geo.ell, y), geo.F)
    add("euler_H_ij", ein("aij,aj->ai", geo.H2, y), 2 * geo.H)
    add("euler_H_ijkh", ein("aijkhm,am->aijkh", geo.H5, y), -geo.H4)
    add("metric_gyy", ein("aij,ai,aj->a", geo.g, y, y), geo.F**2)
    add("metric_ell", geo.ell, geo.y_flat_g / geo.F[:, None])
    add("cartan_y", ein("aijk,ai->ajk", geo.C3, y), 0.0, np.abs(geo.C3) * np.abs(y).max(axis=1)[:, None, None, None])

    # two routes to H_i
    gG = ein("air,ar->ai", geo.g, geo.G)
    add("covariant_two_path", geo.H, gG)

    # the H_ij and H_ijk lemma
    Hij = 0.25 * (2 * ein("ar,aijr->aij", y, dg) + X[1] - np.swapaxes(X[1], 1, 2))
    add("lemma_H_ij", geo.H2, Hij)
    Hijk = 0.5 * (dg + ein("aikj->aijk", dg) - ein("ajki->aijk", dg)) + ein("ar,aijkr->aijk", y, dC)
    add("lemma_H_ijk", geo.H3, Hijk)

    # H^i_jk properties
    transport = ein("ais,ah,asjkh->aijk", geo.g_inv, y, dC)
    add("H_up_a", geo.H_up, geo.gamma + transport, geo.gamma, transport)
    C_up = ein("ais,asrj->airj", geo.g_inv, geo.C3)
    rhs_b = geo.N + 2 * ein("ar,airj->aij", geo.G, C_up)
    add("H_up_b", ein("aijk,ak->aij", geo.H_up, y), rhs_b, geo.N)
    add("H_up_c", ein("aijk,aj,ak->ai", geo.H_up, y, y), 2 * geo.G)

    # H_ijkh properties
    H4 = geo.H4
    perms = ["aijhk", "aikjh", "aikhj", "aihjk", "aihkj"]
    sym = max((scaled_residual(H4, ein(f"{p}->aijkh", H4)) for p in perms), key=lambda r: r.max())
    out.append(IdentityResult("H_ijkh_a_symmetry", sym, tol))
    rhs_4b = (
        ein("aikhj->aijkh", dC)
        + ein("aihjk->aijkh", dC)
        + dC
        - ein("ajkhi->aijkh", dC)
        + ein("ar,aijkhr->aijkh", y, dC4)
    )
    add("H_ijkh_b", H4, rhs_4b)
    add("H_ijkh_c_first", ein("aijkh,aj->aikh", H4, y), ein("aj,aikhj->aikh", y, dC))
    add("H_ijkh_c_second", geo.L, -ein("ai,ajkhi->ajkh", y, dC))

    # S-scalar contraction (always true)
    yH = ein("ai,ai->a", y, geo.H)
    add("s_scalar_contraction", yH, 3 * geo.H_scalar_candidate)
    add("s_scalar_quarter", yH, 0.25 * ein("ai,ai->a", y, X[0]))
    return out


def homogeneity_identities(geo: Geometry, tol: float = TOLERANCE) -> list[IdentityResult]:
    out = []
    for lam in HOMOGENEITY_FACTORS:
        pts = (geo.x, lam * geo.y)
        out.append(IdentityResult(f"homogeneity_G_{lam:g}", scaled_residual(spray_coefficients_batch(geo.metric, pts), lam**2 * geo.G), tol))
        out.append(IdentityResult(f"homogeneity_H_{lam:g}", scaled_residual(covariant_coefficients_batch(geo.metric, pts), lam**2 * geo.H), tol))
    return out


def projective_identities(geo: Geometry, tol: float = TOLERANCE) -> list[IdentityResult]:
    """Identities expected when the metric is projectively flat."""
    y, n = geo.y, geo.y.shape[1]
    P, Pj, Pjk, _ = geo.P_ladder
    ein = np.einsum
    eye = np.eye(n)
    yl = geo.y_flat_g
    out = []

    def add(name, lhs, rhs, *terms, gating=True):
        out.append(IdentityResult(name, scaled_residual(lhs, rhs, *terms), tol, gating))

    add("projective_spray", geo.G, P[:, None] * y)
    add("projective_H", geo.H, P[:, None] * yl)
    add("projective_H_ij", geo.H2, ein("aj,ai->aij", Pj, yl) + P[:, None, None] * geo.g)
    Hy = ein("aijk,ak->aij", geo.H_up, y)
    add("projective_H_up_y", Hy, 2 * P[:, None, None] * eye)
    add("projective_H_up_yy", ein("aij,aj->ai", Hy, y), 2 * P[:, None] * y)
    C_up = ein("ais,asjk->aijk", geo.g_inv, geo.C3)
    G2 = ein("ajk,ai->aijk", Pjk, y) + ein("aj,ik->aijk", Pj, eye) + ein("ak,ij->aijk", Pj, eye)
    add("projective_berwald", geo.G2, G2)
    add("projective_H_up", geo.H_up, geo.G2 + 2 * P[:, None, None, None] * C_up, geo.G2)
    # rederived contraction: y^k H^i_jk = P_j y^i + P delta^i_j
    add("projective_H_up_y_rederived", Hy, ein("aj,ai->aij", Pj, y) + P[:, None, None] * eye, gating=False)
    return out


def investigation_identities(geo: Geometry, tol: float = TOLERANCE) -> list[IdentityResult]:
    """Relations involving the hv-Berwald candidate and rederived forms; not gating."""
    y = geo.y
    ein = np.einsum
    _, dC, _ = _derivatives(geo)
    C3, C4, C5, G, N, G2 = geo.C3, geo.C4, geo.C5, geo.G, geo.N, geo.G2
    Gb = hv_berwald_candidate(geo)  # Gb[a,i,j,k,h] = g_ir dot_h G^r_jk
    out = []

    def add(name, lhs, rhs, *terms):
        out.append(IdentityResult(name, scaled_residual(lhs, rhs, *terms), tol, gating=False))

    cyc_I = cyclic(lambda j, k, h: ein(f"air{j}{k},ar{h}->aijkh", C4, N) + ein(f"air{j},ar{k}{h}->aijkh", C3, G2))
    rhs_d = 2 * ein("airjkh,ar->aijkh", C5, G) + 2 * cyc_I + Gb
    add("H_ijkh_d", geo.H4, rhs_d, Gb)
    for label, perm in (("ijkh", "aijkh"), ("jikh", "ajikh"), ("hjki", "ahjki")):
        add(f"H_ijkh_d_lowering_{label}", geo.H4, 2 * ein("airjkh,ar->aijkh", C5, G) + 2 * cyc_I + ein(f"{perm}->aijkh", Gb))

    cyc_II = cyclic(lambda j, k, h: ein(f"ar{j}{k},ar{h}->ajkh", C3, N))
    yGb = ein("ai,aijkh->ajkh", y, Gb)
    # (e) as printed has (4, 4); contracting (d) with y^i gives (4, 2)
    for a, b in ((4, 4), (2, 2), (4, 2)):
        rhs = -a * ein("arjkh,ar->ajkh", C4, G) - b * cyc_II + yGb
        add(f"H_ijkh_e_coefficients_{a}_{b}", geo.L, rhs, yGb)

    # consequences of (a), (b) and homogeneity
    add("H_ijkh_yj_vanishes", ein("aijkh,aj->aikh", geo.H4, y), 0.0, geo.H4)
    add("landsberg_transport_rederived", geo.L, -2 * ein("ai,ajkhi->ajkh", y, dC))
    return out


def all_identities(geo: Geometry, projective: bool = False, tol: float = TOLERANCE) -> list[IdentityResult]:
    out = core_identities(geo, tol) + homogeneity_identities(geo, tol)
    if projective:
        out += projective_identities(geo, tol)
    return out
