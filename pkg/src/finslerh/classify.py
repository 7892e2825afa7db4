"""Metric-level verdicts from pointwise residuals.

A verdict is numeric: "holds" means the scaled residual stayed below the
tolerance at every sampled site, not that the identity is proven.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .expr import (
    ChartPoint,
    Const,
    DomainError,
    Environment,
    Expr,
    change_coordinates,
    differentiate,
    evaluate,
    jacobian,
    jacobian_at,
    parse_metric,
    x as xvar,
)
from .geometry import (
    DegenerateMetricError,
    Geometry,
    Metric,
    as_metric,
    covariant_coefficients_batch,
    f_tensors,
    geometry,
    metric_tensors,
    s_scalar_gradient,
)
from .identities import scaled_residual
from .library import LibraryEntry, MetricDefinition, SamplingError, builtin, entry_from_definition, sample_arrays

DEFAULT_SEED = 42
DEFAULT_SITES = 50
TOLERANCES = {"identity": 1e-9, "transformation": 1e-8, "distinct": 1e-3}

PREDICATES = (
    "dually_flat",
    "s_scalar_exists",
    "projectively_flat",
    "berwald",
    "h_berwald",
    "h_landsberg",
    "landsberg",
    "condition_I",
    "condition_II",
)
NOTES = {"landsberg": "classical Landsberg via -1/2 y_i G^i_jkh (standard formula, not from the H-calculus)"}


@dataclass
class PredicateVerdict:
    name: str
    verdict: str  # holds | fails | inconclusive
    max_residual: float | None
    witness: dict | None
    sites: int
    tolerance: float
    note: str = ""

    def __post_init__(self):
        if self.verdict not in ("holds", "fails", "inconclusive"):
            raise ValueError(f"bad verdict {self.verdict!r}")
        if self.verdict == "fails" and self.witness is None:
            raise ValueError("a failing verdict needs a witness site")

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "verdict": self.verdict,
            "max_residual": self.max_residual,
            "witness": self.witness,
            "sites": self.sites,
            "tolerance": self.tolerance,
        }
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class AuditResult:
    name: str
    status: str  # ok | violated | not_applicable
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "detail": self.detail}


@dataclass
class ClassificationReport:
    metric: str
    definition_hash: str
    dimension: int
    seed: int
    sites: int
    tolerances: dict
    predicates: list[PredicateVerdict]
    audits: list[AuditResult] = field(default_factory=list)
    comparisons: list[dict] = field(default_factory=list)
    error: str | None = None

    def verdict(self, name: str) -> str:
        for p in self.predicates:
            if p.name == name:
                return p.verdict
        raise KeyError(name)

    def predicate(self, name: str) -> PredicateVerdict:
        for p in self.predicates:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def label(self) -> str:
        return f"numeric, {self.sites} sites, tol {self.tolerances['identity']:g}"

    def to_dict(self) -> dict:
        d = {
            "metric": self.metric,
            "definition_hash": self.definition_hash,
            "dimension": self.dimension,
            "seed": self.seed,
            "sites": self.sites,
            "label": self.label,
            "tolerances": dict(sorted(self.tolerances.items())),
            "predicates": [p.to_dict() for p in sorted(self.predicates, key=lambda p: p.name)],
            "audits": [a.to_dict() for a in self.audits],
            "comparisons": self.comparisons,
        }
        if self.error:
            d["error"] = self.error
        return d

    def to_json(self) -> str:
        return dumps(self.to_dict()) + "\n"

    def to_table(self) -> str:
        lines = [f"{self.metric} (n={self.dimension}, seed {self.seed}; {self.label})"]
        if self.error:
            lines.append(f"  error: {self.error}")
        for p in sorted(self.predicates, key=lambda p: p.name):
            res = "-" if p.max_residual is None else f"{p.max_residual:.3e}"
            lines.append(f"  {p.name:22s} {p.verdict:12s} max scaled residual {res}")
        for c in self.comparisons:
            lines.append(f"  {c['name']:22s} {c['value']:.3e}  ({c['detail']})")
        for a in self.audits:
            lines.append(f"  audit {a.name:48s} {a.status}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# deterministic serialization


def _fmt(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not np.isfinite(v):
            return '"nan"' if np.isnan(v) else ('"inf"' if v > 0 else '"-inf"')
        return f"{v:.17g}"
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(type(v))


def dumps(obj, indent: int = 0) -> str:
    """JSON text with floats written to 17 significant digits."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{_fmt(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent + 1) for v in obj) + "\n" + pad + "]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent)
    return _fmt(obj)


# ---------------------------------------------------------------------------
# residuals (batched over sites; every function returns per-site scaled values)


def _zero(value, *terms) -> np.ndarray:
    return scaled_residual(value, 0.0, *terms)


def dually_flat_residuals(geo: Geometry) -> np.ndarray:
    X0, X1 = geo.raw["X"][0], geo.raw["X"][1]
    return scaled_residual(np.einsum("ak,aik->ai", geo.y, X1), 2 * X0)


def dually_flat_residual(metric: Metric, p: ChartPoint) -> np.ndarray:
    """Scaled D_i = y^k dot_i d_k F^2 - 2 d_i F^2 at one point."""
    metric = as_metric(metric)
    X, Y = p.x[None], p.y[None]
    t = f_tensors(metric, X, Y, fiber=2)
    lhs = np.einsum("ak,aik->ai", Y, t["X"][1])
    rhs = 2 * t["X"][0]
    scale = max(1.0, np.abs(lhs).max(), np.abs(rhs).max())
    return ((lhs - rhs) / scale)[0]


def s_scalar_residuals(geo: Geometry) -> np.ndarray:
    return scaled_residual(s_scalar_gradient(geo.metric, (geo.x, geo.y)), geo.H)


def projective_residuals(geo: Geometry) -> np.ndarray:
    FX0, FX1 = geo.raw["FX"][0], geo.raw["FX"][1]
    return scaled_residual(np.einsum("ak,aik->ai", geo.y, FX1), FX0)


def berwald_residuals(geo: Geometry) -> np.ndarray:
    return _zero(geo.G3)


def h_berwald_residuals(geo: Geometry) -> np.ndarray:
    return _zero(geo.H4)


def h_landsberg_residuals(geo: Geometry) -> np.ndarray:
    terms = np.abs(geo.y)[:, :, None, None, None] * np.abs(geo.H4)
    return _zero(geo.L, terms)


def landsberg_tensor(geo: Geometry) -> np.ndarray:
    """Classical Landsberg tensor -1/2 y_i G^i_jkh with y_i = g_ij y^j."""
    return -0.5 * np.einsum("ai,aijkh->ajkh", geo.y_flat_g, geo.G3)


def landsberg_residuals(geo: Geometry) -> np.ndarray:
    terms = 0.5 * np.abs(geo.y_flat_g)[:, :, None, None, None] * np.abs(geo.G3)
    return _zero(landsberg_tensor(geo), terms)


def condition_I_terms(geo: Geometry) -> list[np.ndarray]:
    ein = np.einsum
    terms = [ein("airjkh,ar->aijkh", geo.C5, geo.G)]
    terms += [ein(f"air{j}{k},ar{h}->aijkh", geo.C4, geo.N) for j, k, h in _CYCLES]
    terms += [ein(f"air{j},ar{k}{h}->aijkh", geo.C3, geo.G2) for j, k, h in _CYCLES]
    return terms


def condition_II_terms(geo: Geometry) -> list[np.ndarray]:
    ein = np.einsum
    terms = [ein("arjkh,ar->ajkh", geo.C4, geo.G)]
    terms += [ein(f"ar{j}{k},ar{h}->ajkh", geo.C3, geo.N) for j, k, h in _CYCLES]
    return terms


_CYCLES = (("j", "k", "h"), ("k", "h", "j"), ("h", "j", "k"))


def condition_I_residuals(geo: Geometry) -> np.ndarray:
    terms = condition_I_terms(geo)
    return _zero(sum(terms), *terms)


def condition_II_residuals(geo: Geometry) -> np.ndarray:
    terms = condition_II_terms(geo)
    return _zero(sum(terms), *terms)


RESIDUALS = {
    "dually_flat": dually_flat_residuals,
    "s_scalar_exists": s_scalar_residuals,
    "projectively_flat": projective_residuals,
    "berwald": berwald_residuals,
    "h_berwald": h_berwald_residuals,
    "h_landsberg": h_landsberg_residuals,
    "landsberg": landsberg_residuals,
    "condition_I": condition_I_residuals,
    "condition_II": condition_II_residuals,
}


def verdict_from(name: str, residuals: np.ndarray, tol: float, X=None, Y=None, note: str = "") -> PredicateVerdict:
    residuals = np.asarray(residuals, dtype=float)
    n_sites = len(residuals)
    if n_sites == 0:
        return PredicateVerdict(name, "inconclusive", None, None, 0, tol, note or "no valid sites")
    worst = int(np.argmax(residuals))
    mx = float(residuals[worst])
    if not np.isfinite(mx):
        mx = float("inf")
    holds = bool(np.all(residuals < tol))
    witness = None
    if not holds:
        witness = {"site": worst, "residual": mx}
        if X is not None:
            witness["x"] = [float(v) for v in X[worst]]
            witness["y"] = [float(v) for v in Y[worst]]
    return PredicateVerdict(name, "holds" if holds else "fails", mx, witness, n_sites, tol, note)


def _predicate(name: str, geo: Geometry, tol: float) -> PredicateVerdict:
    return verdict_from(name, RESIDUALS[name](geo), tol, geo.x, geo.y, NOTES.get(name, ""))


def _run(name, geo, tol):
    try:
        return _predicate(name, geo, tol)
    except (DomainError, DegenerateMetricError, ArithmeticError) as err:
        return PredicateVerdict(name, "inconclusive", None, None, len(geo), tol, f"evaluation failed: {err}")


def s_scalar_exists(metric: Metric, points, tol: float = TOLERANCES["identity"]) -> PredicateVerdict:
    return _predicate("s_scalar_exists", geometry(metric, points), tol)


def projectively_flat(metric: Metric, points, tol: float = TOLERANCES["identity"]):
    """Verdict plus the projective factor P at each site."""
    geo = geometry(metric, points)
    return _predicate("projectively_flat", geo, tol), geo.P_factor


def h_berwald(metric, points, tol=TOLERANCES["identity"]):
    return _predicate("h_berwald", geometry(metric, points), tol)


def h_landsberg(metric, points, tol=TOLERANCES["identity"]):
    return _predicate("h_landsberg", geometry(metric, points), tol)


def berwald(metric, points, tol=TOLERANCES["identity"]):
    return _predicate("berwald", geometry(metric, points), tol)


def landsberg(metric, points, tol=TOLERANCES["identity"]):
    return _predicate("landsberg", geometry(metric, points), tol)


def condition_I(metric, points, tol=TOLERANCES["identity"]):
    return _predicate("condition_I", geometry(metric, points), tol)


def condition_II(metric, points, tol=TOLERANCES["identity"]):
    return _predicate("condition_II", geometry(metric, points), tol)


# ---------------------------------------------------------------------------
# coordinate changes


@dataclass
class CoordinateMap:
    """x = psi(x~), with symbolic first and second derivatives."""

    psi: list
    dimension: int

    def __post_init__(self):
        n = self.dimension
        self.psi = [p if isinstance(p, Expr) else parse_metric(p, n) for p in self.psi]
        self.J = jacobian(self.psi, n)
        self.hessian = [[[differentiate(self.J[m][i], xvar(j + 1)) for j in range(n)] for i in range(n)] for m in range(n)]

    @property
    def affine(self) -> bool:
        return all(isinstance(h, Const) and h.value == 0 for row in self.hessian for col in row for h in col)

    def at(self, Xt, params=None):
        """(x, J, second derivatives) at new-chart positions Xt of shape (N, n)."""
        n = self.dimension
        env = Environment(Xt, np.zeros_like(Xt), dict(params or {}))
        X = np.stack([np.broadcast_to(evaluate(p, env), Xt.shape[:1]) for p in self.psi], axis=-1)
        J = jacobian_at(self.psi, n, Xt, params)
        D2 = np.empty(Xt.shape[:1] + (n, n, n))
        for m in range(n):
            for i in range(n):
                for j in range(n):
                    D2[:, m, i, j] = evaluate(self.hessian[m][i][j], env)
        return X, J, D2

    def pull_back(self, metric: Metric) -> Metric:
        F = change_coordinates(metric.F, self.psi, self.dimension)
        return Metric(F, self.dimension, dict(metric.params), metric.name + "~")


def _coordinate_sites(metric: Metric, cmap: CoordinateMap, Xt, Yt):
    X, J, D2 = cmap.at(Xt, metric.params)
    Y = np.einsum("ahi,ai->ah", J, Yt)
    return X, Y, J, D2


def transformation_law_terms(metric: Metric, cmap: CoordinateMap, Xt, Yt):
    """(H~ from the pulled-back metric, first term, second term) at new-chart sites.

    The law reads H~ = first + second with
      first  = dx^h/dx~^i H_h(x, y),
      second = -1/2 d^2x~^r/dx^h dx^j y^h y^j g~_ir
             = +1/2 g~_ir (J^-1)^r_m d^2psi^m/dx~^a dx~^b y~^a y~^b,
    using d^2x~/dx dx = -J^-1 (d^2 psi) J^-1 J^-1 and y~ = J^-1 y.
    """
    X, Y, J, D2 = _coordinate_sites(metric, cmap, Xt, Yt)
    Ft = cmap.pull_back(metric)
    Ht = covariant_coefficients_batch(Ft, (Xt, Yt))
    gt = metric_tensors(Ft, (Xt, Yt))
    H = covariant_coefficients_batch(metric, (X, Y))
    first = np.einsum("ahi,ah->ai", J, H)
    accel = np.einsum("amij,ai,aj->am", D2, Yt, Yt)
    second = 0.5 * np.einsum("air,ar->ai", gt, np.linalg.solve(J, accel[..., None])[..., 0])
    return Ht, first, second


def transformation_law_check(metric: Metric, cmap: CoordinateMap, Xt, Yt, tol: float = TOLERANCES["transformation"]):
    """Verdict on H~_i = (dx/dx~) H - 1/2 (d^2 x~) y y g~, plus the second term itself."""
    Ht, first, second = transformation_law_terms(metric, cmap, Xt, Yt)
    res = scaled_residual(Ht, first + second, first, second)
    return verdict_from("transformation_law", res, tol, Xt, Yt), second


def non_connection_witness(metric: Metric, cmap: CoordinateMap, xt, yt, field: str = "H_up") -> float:
    """Max defect between the transformed n^3 functions and the linear-connection law.

    A connection transforms as  T~^i_jk = (J^-1)^i_m (T^m_ab J^a_j J^b_k + d^2psi^m/dx~^j dx~^k).
    `field` is "H_up" (H^i_jk) or "G2" (the Berwald connection G^i_jk).
    """
    Xt = np.atleast_2d(np.asarray(xt, dtype=float))
    Yt = np.atleast_2d(np.asarray(yt, dtype=float))
    X, Y, J, D2 = _coordinate_sites(metric, cmap, Xt, Yt)
    old = getattr(geometry(metric, (X, Y)), field)
    new = getattr(geometry(cmap.pull_back(metric), (Xt, Yt)), field)
    n = Xt.shape[1]
    inner = np.einsum("zmpq,zpj,zqk->zmjk", old, J, J) + D2
    predicted = np.linalg.solve(J, inner.reshape(-1, n, n * n)).reshape(inner.shape)
    return float(np.abs(new - predicted).max())


# ---------------------------------------------------------------------------
# classification


def _audits(verdicts: dict[str, PredicateVerdict]) -> list[AuditResult]:
    v = {k: p.verdict for k, p in verdicts.items()}
    out = []

    def audit(name, applicable, ok, detail):
        status = "not_applicable" if not applicable else ("ok" if ok else "violated")
        out.append(AuditResult(name, status, detail))

    decided = lambda *names: all(v[n] != "inconclusive" for n in names)  # noqa: E731
    audit(
        "s_scalar_iff_dually_flat",
        decided("s_scalar_exists", "dually_flat"),
        v["s_scalar_exists"] == v["dually_flat"],
        f"s_scalar_exists={v['s_scalar_exists']}, dually_flat={v['dually_flat']}",
    )
    audit(
        "h_berwald_implies_h_landsberg",
        decided("h_berwald", "h_landsberg") and v["h_berwald"] == "holds",
        v["h_landsberg"] == "holds",
        f"h_berwald={v['h_berwald']}, h_landsberg={v['h_landsberg']}",
    )
    audit(
        "s_scalar_implies_h_landsberg_and_dually_flat",
        decided("s_scalar_exists", "h_landsberg", "dually_flat") and v["s_scalar_exists"] == "holds",
        v["h_landsberg"] == "holds" and v["dually_flat"] == "holds",
        f"h_landsberg={v['h_landsberg']}, dually_flat={v['dually_flat']}",
    )
    audit(
        "condition_I_h_berwald_equals_berwald",
        decided("condition_I", "h_berwald", "berwald") and v["condition_I"] == "holds",
        v["h_berwald"] == v["berwald"],
        f"h_berwald={v['h_berwald']}, berwald={v['berwald']}",
    )
    audit(
        "condition_II_h_landsberg_equals_landsberg",
        decided("condition_II", "h_landsberg", "landsberg") and v["condition_II"] == "holds",
        v["h_landsberg"] == v["landsberg"],
        f"h_landsberg={v['h_landsberg']}, landsberg={v['landsberg']}",
    )
    return out


def _projective_forms(geo: Geometry, tol: float) -> list[AuditResult]:
    P = geo.P_factor
    out = []
    for name, lhs, rhs in (
        ("projective_spray_form", geo.G, P[:, None] * geo.y),
        ("projective_covariant_form", geo.H, P[:, None] * geo.y_flat_g),
    ):
        r = scaled_residual(lhs, rhs).max()
        out.append(AuditResult(name, "ok" if r < tol else "violated", f"max scaled residual {r:.3e}"))
    return out


def definition_hash(definition: MetricDefinition) -> str:
    return hashlib.sha256(definition.to_text().encode()).hexdigest()[:16]


def resolve(source) -> LibraryEntry:
    if isinstance(source, LibraryEntry):
        return source
    if isinstance(source, MetricDefinition):
        return entry_from_definition(source)
    if isinstance(source, str):
        return builtin(source)
    raise TypeError(f"cannot classify {type(source).__name__}")


def classify_metric(
    source,
    seed: int = DEFAULT_SEED,
    sites: int = DEFAULT_SITES,
    tolerances: dict | None = None,
    coordinate_map: CoordinateMap | None = None,
) -> ClassificationReport:
    """Classify a builtin name, LibraryEntry or MetricDefinition on seeded sites."""
    entry = resolve(source)
    tol = dict(TOLERANCES)
    tol.update(tolerances or {})
    if any(v <= 0 for v in tol.values()):
        raise ValueError("tolerances must be positive")
    report = ClassificationReport(
        metric=entry.name,
        definition_hash=definition_hash(entry.definition),
        dimension=entry.definition.dimension,
        seed=seed,
        sites=sites,
        tolerances=tol,
        predicates=[],
    )
    metric = entry.metric()
    try:
        X, Y = sample_arrays(entry, seed, sites, metric)
        geo = geometry(metric, (X, Y))
    except (SamplingError, DegenerateMetricError, DomainError) as err:
        report.error = str(err)
        report.predicates = [
            PredicateVerdict(name, "inconclusive", None, None, 0, tol["identity"], str(err)) for name in PREDICATES
        ]
        report.audits = _audits({p.name: p for p in report.predicates})
        return report

    verdicts = {name: _run(name, geo, tol["identity"]) for name in PREDICATES}
    report.predicates = list(verdicts.values())
    report.audits = _audits(verdicts)
    if verdicts["projectively_flat"].verdict == "holds":
        report.audits += _projective_forms(geo, tol["identity"])

    if entry.companion:
        other = builtin(entry.companion).metric()
        geo2 = geometry(other, (X, Y))
        spray = scaled_residual(geo.G, geo2.G)
        cov = scaled_residual(geo.H, geo2.H)
        report.comparisons = [
            {
                "name": "companion_spray_difference",
                "companion": entry.companion,
                "value": float(spray.max()),
                "detail": f"max over sites; equal sprays when below {tol['identity']:g}",
            },
            {
                "name": "companion_covariant_difference",
                "companion": entry.companion,
                "value": float(cov.min()),
                "detail": f"min over sites; distinct covariant coefficients when above {tol['distinct']:g}",
                "max_component_difference": float(np.abs(geo.H - geo2.H).max()),
            },
        ]

    cmap = coordinate_map
    if cmap is None and entry.coordinate_map:
        cmap = CoordinateMap(list(entry.coordinate_map), entry.definition.dimension)
    if cmap is not None:
        try:
            verdict, _ = transformation_law_check(metric, cmap, X, Y, tol["transformation"])
        except (ArithmeticError, DomainError) as err:
            verdict = PredicateVerdict("transformation_law", "inconclusive", None, None, 0, tol["transformation"], str(err))
        report.predicates.append(verdict)
    return report
