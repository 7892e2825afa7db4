"""Metric-definition files, builtin metrics and the seeded site sampler.

File format (one statement per line, `#` starts a comment):

    dimension = 2
    param c = 1
    metric = "c*sqrt(y1^2 + y2^2) + x1*y1 + x2*y2"
    domain = "1 - x1^2 - x2^2"        # repeatable; must be positive at sites

`spherical_phi = "<expression in r, s>"` may replace `metric =`; the metric is
then F = |y| phi(|x|, <x, y>/|y|).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .expr import (
    ChartPoint,
    DomainError,
    ExprError,
    ExprSyntaxError,
    evaluate,
    parse_metric,
    to_text,
)
from .geometry import MAX_CONDITION, Metric, f_tensors
from .spherical import NAJAFI_PHI, R_MIN, SphericalMetric

REDRAW_CAP = 100
Y_NORM = (0.1, 10.0)


class DefinitionError(ExprError):
    pass


class SamplingError(RuntimeError):
    def __init__(self, message: str, constraint: str):
        super().__init__(message)
        self.constraint = constraint


# ---------------------------------------------------------------------------
# definition files


@dataclass(frozen=True)
class MetricDefinition:
    dimension: int
    metric: str | None = None
    spherical_phi: str | None = None
    params: dict = field(default_factory=dict)
    domain: tuple[str, ...] = ()
    name: str = "metric"

    def __post_init__(self):
        if (self.metric is None) == (self.spherical_phi is None):
            raise DefinitionError("exactly one of metric or spherical_phi is required")
        if self.dimension < 1:
            raise DefinitionError("dimension must be positive")

    @property
    def is_spherical(self) -> bool:
        return self.spherical_phi is not None

    def spherical(self) -> SphericalMetric | None:
        if not self.is_spherical:
            return None
        return SphericalMetric.from_text(self.spherical_phi, self.dimension, float("inf"), self.params, self.name)

    def build(self) -> Metric:
        names = set(self.params)
        if self.is_spherical:
            F = self.spherical().finsler_expr()
        else:
            F = parse_metric(self.metric, self.dimension, params=names)
        domain = tuple(parse_metric(d, self.dimension, params=names) for d in self.domain)
        return Metric(F, self.dimension, dict(self.params), self.name, domain)

    def to_text(self) -> str:
        lines = [f"# {self.name}", f"dimension = {self.dimension}"]
        lines += [f"param {k} = {v!r}" for k, v in self.params.items()]
        if self.is_spherical:
            lines.append(f'spherical_phi = "{self.spherical_phi}"')
        else:
            lines.append(f'metric = "{self.metric}"')
        lines += [f'domain = "{d}"' for d in self.domain]
        return "\n".join(lines) + "\n"


_KEYED = re.compile(r'^(dimension|metric|spherical_phi|domain)\s*=\s*(.*)$')
_PARAM = re.compile(r'^param\s+([A-Za-z_][A-Za-z_0-9]*)\s*=\s*(\S+)$')
_QUOTED = re.compile(r'^"([^"]*)"$')


def _strip_comment(line: str) -> str:
    quoted = False
    for i, ch in enumerate(line):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def parse_definition(text: str, name: str = "metric") -> MetricDefinition:
    """Parse a metric-definition file; errors carry the file line and column."""
    dimension = None
    exprs: dict[str, tuple[str, int, int]] = {}
    domains: list[tuple[str, int, int]] = []
    params: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        col0 = raw.index(line[0]) + 1
        m = _PARAM.match(line)
        if m:
            try:
                params[m.group(1)] = float(m.group(2))
            except ValueError:
                raise DefinitionError(f"line {lineno}: parameter value {m.group(2)!r} is not a number") from None
            continue
        m = _KEYED.match(line)
        if not m:
            raise ExprSyntaxError(f"unrecognised statement {line!r}", lineno, col0)
        key, value = m.group(1), m.group(2).strip()
        if key == "dimension":
            if not re.fullmatch(r"\d+", value) or int(value) < 1:
                raise ExprSyntaxError(f"dimension must be a positive integer, got {value!r}", lineno, col0)
            dimension = int(value)
            continue
        q = _QUOTED.match(value)
        if not q:
            raise ExprSyntaxError(f"{key} expects a double-quoted expression", lineno, col0)
        # column of the first character inside the quotes
        start = raw.index(value) + 2
        entry = (q.group(1), lineno, start)
        if key == "domain":
            domains.append(entry)
        elif key in exprs:
            raise ExprSyntaxError(f"{key} given twice", lineno, col0)
        else:
            exprs[key] = entry
    if dimension is None:
        raise DefinitionError("missing 'dimension = <n>'")
    if ("metric" in exprs) == ("spherical_phi" in exprs):
        raise DefinitionError("exactly one of 'metric' or 'spherical_phi' is required")

    # validate every expression now so errors point into the file
    names = set(params)
    for key, (body, lineno, start) in list(exprs.items()) + [("domain", d) for d in domains]:
        allowed = names | {"r", "s"} if key == "spherical_phi" else names
        try:
            parse_metric(body, dimension, params=allowed)
        except ExprSyntaxError as err:
            raise type(err)(err.message, lineno, start + err.column - 1) from None
    return MetricDefinition(
        dimension=dimension,
        metric=exprs["metric"][0] if "metric" in exprs else None,
        spherical_phi=exprs["spherical_phi"][0] if "spherical_phi" in exprs else None,
        params=params,
        domain=tuple(d[0] for d in domains),
        name=name,
    )


def load_definition(path) -> MetricDefinition:
    path = Path(path)
    return parse_definition(path.read_text(encoding="utf-8"), name=path.stem)


# ---------------------------------------------------------------------------
# builtin entries


@dataclass(frozen=True)
class SamplingRegion:
    """x uniform in a box (or a ball when `ball` is set); |y| log-uniform in y_norm."""

    low: tuple = (-1.0,)
    high: tuple = (1.0,)
    ball: float | None = None
    min_radius: float = 0.0
    y_norm: tuple = Y_NORM
    positive_definite: bool = True


@dataclass(frozen=True)
class LibraryEntry:
    name: str
    definition: MetricDefinition
    region: SamplingRegion
    expected: dict
    provenance: str
    companion: str | None = None
    coordinate_map: tuple[str, ...] | None = None  # x = psi(x~), written in x1..xn

    @property
    def params(self) -> dict:
        return dict(self.definition.params)

    def metric(self) -> Metric:
        return self.definition.build()

    def export(self) -> str:
        return self.definition.to_text()


def _norm2(prefix: str, n: int) -> str:
    return " + ".join(f"{prefix}{i}^2" for i in range(1, n + 1))


def _box(n, lo, hi, **kw) -> SamplingRegion:
    return SamplingRegion(low=(lo,) * n, high=(hi,) * n, **kw)


ALL_HOLD = dict.fromkeys(
    [
        "dually_flat",
        "projectively_flat",
        "s_scalar_exists",
        "berwald",
        "h_berwald",
        "h_landsberg",
        "landsberg",
        "condition_I",
        "condition_II",
    ],
    "holds",
)


def _euclidean(n):
    d = MetricDefinition(n, metric=f"sqrt({_norm2('y', n)})", name=f"euclidean_{n}d")
    return LibraryEntry(d.name, d, _box(n, -1, 1), dict(ALL_HOLD), "baseline: flat Euclidean norm")


def _riemannian_curved():
    d = MetricDefinition(2, metric="sqrt((1 + x1^2)*y1^2 + y2^2)", name="riemannian_curved")
    expected = {
        "projectively_flat": "fails",
        "dually_flat": "holds",
        "s_scalar_exists": "holds",
        "berwald": "holds",
        "h_berwald": "holds",
        "h_landsberg": "holds",
        "landsberg": "holds",
        "condition_I": "holds",
        "condition_II": "holds",
    }
    return LibraryEntry(d.name, d, _box(2, -1, 1), expected, "baseline: Riemannian metric with nonzero spray")


def _ex33(bar: bool):
    A = "(a1*y1 + a2*y2)"
    B = "(1 + a1*x1 + a2*x2)"
    z = [f"(({B})*y{i} - {A}*x{i})/{A}" for i in (1, 2)]
    inner = ("1 + " if bar else "") + f"({z[0]})^2 + ({z[1]})^2"
    name = "ex33_bar" if bar else "ex33_pair"
    d = MetricDefinition(
        2,
        metric=f"{A}*sqrt({inner})/({B})^2",
        params={"a1": 0.0, "a2": 0.5},
        # <a, y> bounded away from zero keeps z and g well conditioned
        domain=(f"{A} - 0.2*sqrt(y1^2 + y2^2)", "0.09 - x1^2 - x2^2"),
        name=name,
    )
    expected = {
        "projectively_flat": "holds",
        "berwald": "holds",
        "h_berwald": "holds",
        "h_landsberg": "holds",
        "landsberg": "holds",
        "condition_I": "holds",
        "condition_II": "holds",
    }
    return LibraryEntry(
        name,
        d,
        # H - Hbar is 2-homogeneous in y; |y| >= 1 keeps it above the unit scale floor
        SamplingRegion(ball=0.3, y_norm=(1.0, 10.0)),
        expected,
        "example: two metrics sharing one spray with different covariant coefficients",
        companion="ex33_pair" if bar else "ex33_bar",
    )


def _ex37():
    ys = "y1^2 + y2^2 + y3^2 + y4^2"
    d = MetricDefinition(
        4,
        metric="sqrt(sqrt(y1^4 + y2^4 + y3^4) + x4*y4^2)",
        domain=("x4 - 0.1",) + tuple(f"y{i}^2 - 0.01*({ys})" for i in (1, 2, 3)),
        name="ex37",
    )
    expected = {
        "h_berwald": "holds",
        "h_landsberg": "holds",
        "berwald": "holds",
        "landsberg": "holds",
        "dually_flat": "holds",
        "s_scalar_exists": "holds",
        "projectively_flat": "fails",
    }
    region = SamplingRegion(low=(-1.0, -1.0, -1.0, 0.1), high=(1.0, 1.0, 1.0, 2.0))
    return LibraryEntry("ex37", d, region, expected, "example: quadratic covariant coefficients, spray 1/4 y4^2/x4")


def _ex51(n: int, a: float, name: str):
    params = {"c": 1.0, **{f"a{i}": a for i in range(1, n + 1)}}
    lin = " + ".join(f"(a{i} + x{i})*y{i}" for i in range(1, n + 1))
    shift = " + ".join(f"(a{i} + x{i})^2" for i in range(1, n + 1))
    d = MetricDefinition(
        n,
        metric=f"c*sqrt({_norm2('y', n)}) + {lin}",
        params=params,
        domain=(f"c^2 - ({shift})",),
        name=name,
    )
    expected = {
        "projectively_flat": "holds",
        "h_landsberg": "holds",
        "h_berwald": "fails",
        "dually_flat": "fails",
        "s_scalar_exists": "fails",
        "berwald": "fails",
    }
    psi = tuple(f"x{i} + 0.1*x{i}^2" for i in range(1, n + 1))
    return LibraryEntry(
        name, d, _box(n, -0.3, 0.3), expected, "example: projectively flat, H-Landsberg, not H-Berwald", coordinate_map=psi
    )


def _ex52():
    d = MetricDefinition(
        3,
        metric="sqrt((a1*y1^4 + a2*y1^2*y3^2 + a3*y2^2*y3^2)/(b1*y1^2 + b2*y2^2 + b3*y3^2)"
        " + x3^2*y1^2 + x3^3*y2^2)",
        params={"a1": 1.0, "a2": 1.0, "a3": 1.0, "b1": 1.0, "b2": 1.0, "b3": 1.0},
        domain=("x3 - 0.2", "1.5 - x3"),
        name="ex52",
    )
    region = SamplingRegion(low=(-1.0, -1.0, 0.2), high=(1.0, 1.0, 1.5))
    expected = {"h_berwald": "holds", "h_landsberg": "holds"}
    return LibraryEntry("ex52", d, region, expected, "example: H-Berwald family with f1 = x3^2, f2 = x3^3")


def _najafi(n: int, c: float, name: str):
    d = MetricDefinition(
        n,
        spherical_phi=NAJAFI_PHI,
        params={"k": 1.0, "c": c},
        domain=(f"k^2 - c^2*({_norm2('x', n)})",),
        name=name,
    )
    expected = {
        "dually_flat": "holds",
        "projectively_flat": "holds",
        "s_scalar_exists": "holds",
        "h_landsberg": "holds",
        "h_berwald": "fails",
    }
    region = _box(n, -0.9, 0.9, ball=0.9, min_radius=R_MIN)
    return LibraryEntry(name, d, region, expected, "family: projectively and dually flat spherically symmetric")


def _spherical_generic():
    d = MetricDefinition(2, spherical_phi="1 + s/4 + r^2/8", domain=("1 - x1^2 - x2^2",), name="spherical_generic")
    region = _box(2, -1, 1, ball=0.95, min_radius=R_MIN)
    return LibraryEntry(d.name, d, region, {}, "baseline: generic spherically symmetric phi")


def _entries() -> dict[str, LibraryEntry]:
    items = [
        _euclidean(2),
        _euclidean(3),
        _riemannian_curved(),
        _ex33(False),
        _ex33(True),
        _ex37(),
        _ex51(2, 0.0, "ex51"),
        _ex51(2, 0.1, "ex51_a"),
        _ex51(3, 0.0, "ex51_3d"),
        _ex51(3, 0.1, "ex51_3d_a"),
        _ex52(),
        _najafi(2, 0.3, "najafi"),
        _najafi(2, 0.1, "najafi_c01"),
        _najafi(3, 0.3, "najafi_3d"),
        _najafi(3, 0.1, "najafi_3d_c01"),
        _spherical_generic(),
    ]
    return {e.name: e for e in items}


BUILTINS = _entries()


def builtin_names() -> list[str]:
    return sorted(BUILTINS)


def builtin(name: str) -> LibraryEntry:
    try:
        return BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown builtin metric {name!r}; known: {', '.join(builtin_names())}") from None


def entry_from_definition(definition: MetricDefinition) -> LibraryEntry:
    """Wrap a user definition with the default sampling region."""
    n = definition.dimension
    region = _box(n, -1, 1, min_radius=R_MIN if definition.is_spherical else 0.0, positive_definite=False)
    return LibraryEntry(definition.name, definition, region, {}, "user definition")


# ---------------------------------------------------------------------------
# sampling


def _draw(rng: np.random.Generator, region: SamplingRegion, n: int, count: int):
    if region.ball is not None:
        d = rng.normal(size=(count, n))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        X = d * (region.ball * rng.uniform(size=(count, 1)) ** (1.0 / n))
    else:
        X = rng.uniform(np.broadcast_to(region.low, (n,)), np.broadcast_to(region.high, (n,)), size=(count, n))
    d = rng.normal(size=(count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    lo, hi = np.log10(region.y_norm[0]), np.log10(region.y_norm[1])
    Y = d * 10.0 ** rng.uniform(lo, hi, size=(count, 1))
    return X, Y


def _screen(metric: Metric, region: SamplingRegion, X, Y) -> np.ndarray:
    """Per-candidate violated constraint ('' when the candidate is valid)."""
    reason = np.full(len(X), "", dtype=object)

    def mark(bad, label):
        sel = (reason == "") & bad
        reason[sel] = label

    env = metric.env(X, Y)
    mark(np.linalg.norm(Y, axis=1) == 0, "y = 0")
    if region.min_radius > 0:
        mark(np.linalg.norm(X, axis=1) <= region.min_radius, f"|x| > {region.min_radius:g}")
    for d in metric.domain:
        v = np.broadcast_to(evaluate(d, env, strict=False), (len(X),))
        mark(~(np.isfinite(v) & (v > 0)), f"domain {to_text(d)} > 0")
    Fv = np.broadcast_to(evaluate(metric.F, env, strict=False), (len(X),))
    mark(~(np.isfinite(Fv) & (Fv > 0)), "F > 0")

    ok = np.flatnonzero(reason == "")
    if ok.size:
        labels = _metric_checks(metric, region, X[ok], Y[ok])
        reason[ok] = np.where(labels == "", reason[ok], labels)
    return reason


def _metric_checks(metric, region, X, Y) -> np.ndarray:
    try:
        g = 0.5 * f_tensors(metric, X, Y, fiber=2)["Y"][2]
    except DomainError:
        if len(X) == 1:
            return np.array(["derivatives defined"], dtype=object)
        return np.concatenate([_metric_checks(metric, region, X[i : i + 1], Y[i : i + 1]) for i in range(len(X))])
    out = np.full(len(X), "", dtype=object)
    finite = np.all(np.isfinite(g), axis=(1, 2))
    out[~finite] = "derivatives defined"
    if np.any(finite):
        gf = g[finite]
        cond = np.linalg.cond(gf)
        lab = np.where(~np.isfinite(cond) | (cond > MAX_CONDITION), "metric nondegenerate", "")
        if region.positive_definite:
            lam = np.linalg.eigvalsh(gf)[:, 0]
            lab = np.where((lab == "") & (lam <= 0), "metric positive definite", lab)
        out[finite] = lab
    return out


def sample_arrays(entry: LibraryEntry, seed: int = 42, count: int = 50, metric: Metric | None = None):
    """(X, Y) of `count` valid sites, deterministic in `seed`.

    Candidates are drawn in a fixed order; each site takes the next valid
    candidate and fails after REDRAW_CAP consecutive invalid ones.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    metric = metric or entry.metric()
    n = metric.dimension
    rng = np.random.default_rng(seed)
    Xs, Ys = [], []
    misses = 0
    tally: dict[str, int] = {}
    chunk = max(2 * count, 32)
    while len(Xs) < count:
        X, Y = _draw(rng, entry.region, n, chunk)
        reason = _screen(metric, entry.region, X, Y)
        for a in range(chunk):
            if reason[a] == "":
                Xs.append(X[a])
                Ys.append(Y[a])
                misses = 0
                if len(Xs) == count:
                    break
            else:
                misses += 1
                tally[reason[a]] = tally.get(reason[a], 0) + 1
                if misses > REDRAW_CAP:
                    worst = max(tally, key=tally.get)
                    raise SamplingError(
                        f"{entry.name}: no valid site after {REDRAW_CAP} redraws; "
                        f"most often violated constraint: {worst}",
                        worst,
                    )
    return np.array(Xs), np.array(Ys)


def sample_sites(entry: LibraryEntry, seed: int = 42, count: int = 50) -> list[ChartPoint]:
    X, Y = sample_arrays(entry, seed, count)
    return [ChartPoint(x, y) for x, y in zip(X, Y)]


def check_point(metric: Metric, x, y, region: SamplingRegion | None = None) -> str:
    """Empty string if (x, y) is a valid site for `metric`, else the violated constraint."""
    region = region or SamplingRegion(positive_definite=False)
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    if X.shape != Y.shape or X.shape[1] != metric.dimension:
        return f"x and y must have {metric.dimension} components"
    return str(_screen(metric, region, X, Y)[0])
