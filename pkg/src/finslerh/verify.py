"""Invariant and regression suites over the builtin library.

Each suite returns a SuiteResult with its worst residual and the first failing
check; `run_all` backs the `verify` command.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classify import CoordinateMap, classify_metric, transformation_law_check
from .expr import Var
from .geometry import _tensor_requests, geometry
from .identities import all_identities, scaled_residual
from .jets import DerivativeTable, fd_partial, lift_batch, multisets, variable_codes
from .library import builtin, builtin_names, sample_arrays
from .spherical import SphericalMetric, najafi_covariant, najafi_s_scalar, sigma

FD_TOLERANCE = 1e-5
IDENTITY_SITES = 25


@dataclass
class Check:
    label: str
    worst: float
    passed: bool
    lower: bool = False  # a lower-bound check: passes when worst exceeds the tolerance


@dataclass
class SuiteResult:
    name: str
    checks: list[Check] = field(default_factory=list)

    def add(self, label: str, worst: float, tol: float, lower: bool = False) -> Check:
        """Record a check; by default it passes when worst < tol, with lower=True when worst > tol."""
        worst = float(worst)
        ok = worst > tol if lower else worst < tol
        c = Check(label, worst, bool(ok and np.isfinite(worst)), lower)
        self.checks.append(c)
        return c

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def worst(self) -> float:
        """Largest residual among the upper-bound checks."""
        return max((c.worst for c in self.checks if not c.lower), default=0.0)

    @property
    def first_failure(self) -> Check | None:
        return next((c for c in self.checks if not c.passed), None)


def _code_var(code: int, n: int) -> Var:
    return Var("y", code + 1) if code < n else Var("x", code - n + 1)


def fd_normwise(ad: dict, fd: dict, n: int) -> float:
    """Worst |ad - fd| over max(1, largest |ad| of the same derivative tensor at that site).

    Requests are grouped into tensors by their numbers of fiber and position
    variables; `ad` and `fd` map each request to per-site values.
    """
    groups: dict[tuple, list] = {}
    for req in ad:
        my = sum(1 for c in req if c < n)
        groups.setdefault((my, len(req) - my), []).append(req)
    worst = 0.0
    for reqs in groups.values():
        A = np.stack([ad[r] for r in reqs])
        D = np.stack([fd[r] for r in reqs])
        scale = np.maximum(1.0, np.abs(A).max(axis=0))
        worst = max(worst, float((np.abs(A - D) / scale).max()))
    return worst


def fd_suite(seed: int = 42, sites: int = IDENTITY_SITES, tol: float = FD_TOLERANCE, names=None) -> SuiteResult:
    """Every mixed partial the pipeline uses, against extended-precision finite differences.

    Covers the derivative tensors of F^2 (up to five fiber derivatives, or four
    plus one position derivative) and the fiber ladder of the H_i expressions.
    """
    out = SuiteResult("ad_vs_fd")
    for name in names or builtin_names():
        entry = builtin(name)
        metric = entry.metric()
        n = metric.dimension
        X, Y = sample_arrays(entry, seed, sites, metric)
        env = metric.env(X, Y)
        codes = variable_codes(n)

        reqs = _tensor_requests(n, 5)
        table = DerivativeTable(reqs)
        jet = lift_batch(metric.F2, env, table.codes, codes)
        ad = {r: _table_value(table, jet, r) for r in reqs}
        fd = {r: fd_partial(metric.F2, (env, [_code_var(c, n) for c in r])) for r in reqs}
        out.add(f"{name}: F^2 partials up to order 5", fd_normwise(ad, fd, n), tol)

        worst = 0.0
        htable = DerivativeTable(multisets(list(range(n)), 4))
        for e, j in zip(metric.H_exprs, lift_batch(list(metric.H_exprs), env, htable.codes, codes)):
            ad, fd = {}, {}
            for m in range(5):
                for r in multisets(list(range(n)), m):
                    ad[r] = _table_value(htable, j, r)
                    fd[r] = fd_partial(e, (env, [_code_var(c, n) for c in r]))
            worst = max(worst, fd_normwise(ad, fd, n))
        out.add(f"{name}: H_i fiber partials up to order 4", worst, tol)
    return out


def _table_value(table: DerivativeTable, jet, req) -> np.ndarray:
    mask, r = table.index[tuple(sorted(req))]
    return np.broadcast_to(jet.c[mask, ..., r], jet.c.shape[1:-1])


def identity_suite(seed: int = 42, sites: int = IDENTITY_SITES, tol: float = 1e-9, names=None) -> SuiteResult:
    out = SuiteResult("identities")
    for name in names or builtin_names():
        entry = builtin(name)
        metric = entry.metric()
        X, Y = sample_arrays(entry, seed, sites, metric)
        geo = geometry(metric, (X, Y))
        projective = entry.expected.get("projectively_flat") == "holds"
        for r in all_identities(geo, projective=projective, tol=tol):
            if r.gating:
                out.add(f"{name}: {r.name}", r.worst, tol)
    return out


def regression_suite(seed: int = 42, sites: int = 50, tol: float = 1e-9, names=None) -> SuiteResult:
    out = SuiteResult("regression")
    for name in names or builtin_names():
        entry = builtin(name)
        report = classify_metric(entry, seed=seed, sites=sites, tolerances={"identity": tol})
        mismatches = [k for k, v in entry.expected.items() if report.verdict(k) != v]
        out.add(f"{name}: expected flags ({len(entry.expected)})", float(len(mismatches)), 0.5)
        violated = [a.name for a in report.audits if a.status == "violated"]
        out.add(f"{name}: implication audits", float(len(violated)), 0.5)
        if "transformation_law" in [p.name for p in report.predicates]:
            p = report.predicate("transformation_law")
            out.add(f"{name}: transformation law", p.max_residual if p.max_residual is not None else np.inf, 1e-8)
        for c in report.comparisons:
            if c["name"] == "companion_spray_difference":
                out.add(f"{name}: same spray as {c['companion']}", c["value"], tol)
            else:
                out.add(f"{name}: covariant coefficients differ from {c['companion']}", c["value"], 1e-3, lower=True)
    return out


def spherical_suite(seed: int = 42, sites: int = IDENTITY_SITES, tol: float = 1e-8) -> SuiteResult:
    out = SuiteResult("spherical")
    rng = np.random.default_rng(seed)
    r = rng.uniform(1e-3, 0.9, 100)
    s = r * rng.uniform(-1, 1, 100)
    for name in ("euclidean_sph", "najafi", "najafi_c01", "najafi_3d", "najafi_3d_c01", "spherical_generic"):
        if name == "euclidean_sph":
            sm = SphericalMetric.from_text("1", 2, name=name)
            entry = builtin("euclidean_2d")
        else:
            entry = builtin(name)
            sm = entry.definition.spherical()
        sig = sigma(sm.phi_jet(r, s))
        out.add(f"{name}: s sigma2 + sigma3 = 0", np.abs(s * sig.sigma2 + sig.sigma3).max(), 1e-12)
        jet = sm.phi_jet(r, s)
        out.add(f"{name}: s sigma1 + sigma2 = phi phi_s", np.abs(s * sig.sigma1 + sig.sigma2 - jet.phi * jet.phi_s).max(), 1e-12)

        X, Y = sample_arrays(entry, seed, sites)
        geo = geometry(sm.metric(), (X, Y))
        out.add(f"{name}: g closed form", scaled_residual(geo.g, sm.metric_tensor(X, Y)).max(), tol)
        out.add(f"{name}: G closed form", scaled_residual(geo.G, sm.spray(X, Y)).max(), tol)
        out.add(f"{name}: H closed form", scaled_residual(geo.H, sm.covariant(X, Y)).max(), tol)
    return out


def example_suite(seed: int = 42) -> SuiteResult:
    """Printed closed forms of the worked examples, checked as printed."""
    out = SuiteResult("examples")
    # quadratic covariant coefficients in dimension four
    entry = builtin("ex37")
    X, Y = sample_arrays(entry, seed, 100)
    geo = geometry(entry.metric(), (X, Y))
    out.add("ex37: G^4 = y4^2/(4 x4)", scaled_residual(geo.G[:, 3], Y[:, 3] ** 2 / (4 * X[:, 3])).max(), 1e-9)
    out.add("ex37: H_4 = y4^2/4", scaled_residual(geo.H[:, 3], Y[:, 3] ** 2 / 4).max(), 1e-9)
    out.add("ex37: other G^i, H_i vanish", max(np.abs(geo.G[:, :3]).max(), np.abs(geo.H[:, :3]).max()), 1e-10)

    for name in ("ex51", "ex51_a", "ex51_3d", "ex51_3d_a"):
        entry = builtin(name)
        X, Y = sample_arrays(entry, seed, 50)
        geo = geometry(entry.metric(), (X, Y))
        n = X.shape[1]
        c = entry.params["c"]
        a = np.array([entry.params[f"a{i}"] for i in range(1, n + 1)])
        u = np.linalg.norm(Y, axis=1)[:, None]
        closed = 0.5 * c * u * Y + 0.5 * u**2 * (a + X)
        out.add(f"{name}: H_i = c/2 |y| y_i + |y|^2 (a_i + x_i)/2", scaled_residual(geo.H, closed).max(), 1e-9)

    for name in ("najafi", "najafi_c01", "najafi_3d", "najafi_3d_c01"):
        entry = builtin(name)
        k, c = entry.params["k"], entry.params["c"]
        X, Y = sample_arrays(entry, seed, 50)
        geo = geometry(entry.metric(), (X, Y))
        out.add(f"{name}: S-scalar closed form", scaled_residual(geo.H_scalar_candidate, najafi_s_scalar(k, c, X, Y)).max(), 1e-9)
        out.add(f"{name}: H_j closed form", scaled_residual(geo.H, najafi_covariant(k, c, X, Y)).max(), 1e-9)

    entry = builtin("ex52")
    X, Y = sample_arrays(entry, seed, 50)
    geo = geometry(entry.metric(), (X, Y))
    out.add("ex52: printed H_i", scaled_residual(geo.H, ex52_printed(X, Y)).max(), 1e-9)
    return out


def ex52_printed(X, Y) -> np.ndarray:
    """H_1 = 2 y1 y3 f1', H_2 = 2 y2 y3 f2', H_3 = -y1^2 f1' - y2^2 f2' with f1 = x3^2, f2 = x3^3."""
    f1p, f2p = 2 * X[:, 2], 3 * X[:, 2] ** 2
    return np.stack(
        [2 * Y[:, 0] * Y[:, 2] * f1p, 2 * Y[:, 1] * Y[:, 2] * f2p, -Y[:, 0] ** 2 * f1p - Y[:, 1] ** 2 * f2p], axis=1
    )


def transformation_suite(seed: int = 42, sites: int = 20) -> SuiteResult:
    out = SuiteResult("transformation_law")
    for name in ("ex51", "ex51_3d"):
        entry = builtin(name)
        metric = entry.metric()
        n = metric.dimension
        X, Y = sample_arrays(entry, seed, sites, metric)
        quad = CoordinateMap([f"x{i} + 0.1*x{i}^2" for i in range(1, n + 1)], n)
        verdict, _ = transformation_law_check(metric, quad, X, Y)
        out.add(f"{name}: psi_i = x_i + 0.1 x_i^2", verdict.max_residual, 1e-8)
        rows = [" + ".join(f"{0.1 * (i + j + 1) if i != j else 1.0 + 0.05 * i}*x{j + 1}" for j in range(n)) for i in range(n)]
        affine = CoordinateMap([f"{row} + 0.01" for row in rows], n)
        verdict, second = transformation_law_check(metric, affine, X, Y)
        out.add(f"{name}: affine psi", verdict.max_residual, 1e-8)
        out.add(f"{name}: affine psi second term is zero", float(np.abs(second).max()) + (0.0 if affine.affine else 1.0), 1e-300)
    return out


SUITES = {
    "ad_vs_fd": fd_suite,
    "identities": identity_suite,
    "regression": regression_suite,
    "spherical": spherical_suite,
    "examples": example_suite,
    "transformation_law": transformation_suite,
}


def run_all(seed: int = 42, tol: float | None = None) -> list[SuiteResult]:
    """Run every suite; `tol` (if given) overrides the identity and FD tolerances."""
    results = []
    for name, fn in SUITES.items():
        kwargs = {"seed": seed}
        if tol is not None and name in ("ad_vs_fd", "identities", "regression"):
            kwargs["tol"] = tol
        results.append(fn(**kwargs))
    return results
