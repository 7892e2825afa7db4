"""Command-line front end: classify, eval, verify and list.

Exit codes: 0 on a successful run, 1 when `verify` finds a failing suite,
2 on hard errors (unreadable or unparsable metric, invalid point, sampling
exhaustion, degenerate metric).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field

import numpy as np

from .classify import DEFAULT_SEED, DEFAULT_SITES, classify_metric, dumps
from .expr import ChartPoint, DomainError, ExprError, ExprSyntaxError
from .geometry import DegenerateMetricError, point_geometry
from .library import (
    DefinitionError,
    LibraryEntry,
    SamplingError,
    builtin,
    builtin_names,
    check_point,
    entry_from_definition,
    load_definition,
)
from .spherical import sigma
from .verify import SUITES, run_all

QUANTITIES = ("F", "g", "G", "H", "H_ladder", "L", "sigma", "P/Q", "P", "s_scalar")


class CliError(Exception):
    """A hard error: reported on stderr with exit status 2."""


@dataclass
class RunConfig:
    command: str
    metric: str | None = None
    builtin: str | None = None
    seed: int = DEFAULT_SEED
    sites: int = DEFAULT_SITES
    tolerances: dict = field(default_factory=dict)
    out: str | None = None
    format: str = "human"

    def __post_init__(self):
        if self.sites < 1:
            raise CliError("--sites must be at least 1")
        if any(not v > 0 for v in self.tolerances.values()):
            raise CliError("tolerances must be positive")
        if self.seed < 0:
            raise CliError("--seed must be non-negative")


def _vector(text: str, flag: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise CliError(f"{flag} expects comma-separated numbers, got {text!r}") from None


def resolve_entry(cfg: RunConfig) -> LibraryEntry:
    if cfg.builtin:
        try:
            return builtin(cfg.builtin)
        except KeyError as err:
            raise CliError(str(err.args[0])) from None
    if cfg.metric:
        try:
            return entry_from_definition(load_definition(cfg.metric))
        except OSError as err:
            raise CliError(f"cannot read {cfg.metric}: {err.strerror or err}") from None
        except (ExprSyntaxError, DefinitionError, ExprError) as err:
            raise CliError(f"{cfg.metric}: {err}") from None
    raise CliError("one of --metric or --builtin is required")


def _emit(text: str, cfg: RunConfig) -> None:
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


# ---------------------------------------------------------------------------
# classify


def cmd_classify(cfg: RunConfig) -> int:
    entry = resolve_entry(cfg)
    report = classify_metric(entry, seed=cfg.seed, sites=cfg.sites, tolerances=cfg.tolerances)
    _emit(report.to_json() if cfg.format == "report" else report.to_table(), cfg)
    if report.error:
        print(f"error: {report.error}", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# eval


def _num(v) -> str:
    return f"{float(v):.17g}"


def format_tensor(a) -> str:
    a = np.asarray(a)
    if a.ndim == 0:
        return _num(a)
    return "(" + ", ".join(format_tensor(v) for v in a) + ")"


def evaluate_quantity(entry: LibraryEntry, x, y, quantity: str) -> dict:
    """Named arrays for `quantity` at the point (x, y)."""
    if quantity not in QUANTITIES:
        raise CliError(f"unknown quantity {quantity!r}; choose from {', '.join(QUANTITIES)}")
    metric = entry.metric()
    n = metric.dimension
    if x is None:
        x = np.zeros(n)
    if len(x) != n or len(y) != n:
        raise CliError(f"--x and --y need {n} components for {entry.name}")
    if not np.any(y != 0):
        raise CliError("invalid point: y = 0 (outside the slit tangent bundle)")
    violated = check_point(metric, x, y)
    if violated:
        raise CliError(f"invalid point: violates {violated}")
    if quantity in ("sigma", "P/Q"):
        sm = entry.definition.spherical()
        if sm is None:
            raise CliError(f"{quantity} needs a spherically symmetric metric (spherical_phi)")
        _, _, _, r, s = sm.coordinates(x, y)
        if quantity == "sigma":
            sig = sigma(sm.phi_jet(r, s))
            return {f"sigma{i}": getattr(sig, f"sigma{i}")[0] for i in range(4)}
        P, Q = sm.pq(x, y)
        return {"P": P[0], "Q": Q[0]}
    pg = point_geometry(metric, ChartPoint(x, y))
    if quantity == "H_ladder":
        return {"H_i": pg.H, "H_ij": pg.H2, "H_ijk": pg.H3, "H_ijkh": pg.H4}
    if quantity == "P":
        return {"P": pg.P_factor}
    if quantity == "s_scalar":
        return {"s_scalar": pg.H_scalar_candidate}
    return {quantity: getattr(pg, quantity)}


def cmd_eval(cfg: RunConfig, x: str | None, y: str | None, quantity: str) -> int:
    entry = resolve_entry(cfg)
    if y is None:
        raise CliError("eval needs --y")
    xv = _vector(x, "--x") if x is not None else None
    yv = _vector(y, "--y")
    try:
        values = evaluate_quantity(entry, xv, yv, quantity)
    except (DomainError, DegenerateMetricError) as err:
        raise CliError(f"evaluation failed: {err}") from None
    if cfg.format == "report":
        text = dumps({
            "metric": entry.name,
            "x": (xv if xv is not None else np.zeros(len(yv))).tolist(),
            "y": yv.tolist(),
            "quantity": quantity,
            "values": {k: np.asarray(v).tolist() for k, v in values.items()},
        })
    else:
        text = "\n".join(f"{k} = {format_tensor(v)}" for k, v in values.items())
    _emit(text, cfg)
    return 0


# ---------------------------------------------------------------------------
# verify


def cmd_verify(cfg: RunConfig, suites: list[str] | None = None) -> int:
    tol = cfg.tolerances.get("identity")
    if suites:
        unknown = [s for s in suites if s not in SUITES]
        if unknown:
            raise CliError(f"unknown suite {unknown[0]!r}; choose from {', '.join(SUITES)}")
        results = []
        for name in suites:
            kwargs = {"seed": cfg.seed}
            if tol is not None and name in ("ad_vs_fd", "identities", "regression"):
                kwargs["tol"] = tol
            results.append(SUITES[name](**kwargs))
    else:
        results = run_all(cfg.seed, tol)

    if cfg.format == "report":
        text = dumps({
            "seed": cfg.seed,
            "passed": all(r.passed for r in results),
            "suites": [
                {
                    "name": r.name,
                    "passed": r.passed,
                    "worst": r.worst,
                    "checks": [{"label": c.label, "worst": c.worst, "passed": c.passed} for c in r.checks],
                }
                for r in results
            ],
        })
    else:
        width = max(len(r.name) for r in results)
        lines = [f"{'suite':<{width}}  status  worst residual"]
        for r in results:
            lines.append(f"{r.name:<{width}}  {'pass' if r.passed else 'FAIL':<6}  {r.worst:.3e}")
        text = "\n".join(lines)
    _emit(text, cfg)
    failed = [r for r in results if not r.passed]
    if failed:
        c = failed[0].first_failure
        print(f"first failure: {failed[0].name}: {c.label} (worst {c.worst:.3e})", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finslerh", description="Numeric F-covariant coefficient toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, source=True):
        if source:
            g = p.add_mutually_exclusive_group()
            g.add_argument("--metric", help="metric definition file")
            g.add_argument("--builtin", help="builtin library entry")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--out", help="write output to this path")
        p.add_argument("--format", choices=("human", "report"), default="human")

    p = sub.add_parser("classify", help="classify a metric on seeded sites")
    common(p)
    p.add_argument("--sites", type=int, default=DEFAULT_SITES)
    p.add_argument("--tol", type=float, help="identity tolerance")

    p = sub.add_parser("eval", help="evaluate one quantity at a point")
    common(p)
    p.add_argument("--x", help="position a,b,... (default 0)")
    p.add_argument("--y", help="direction a,b,...")
    p.add_argument("--q", default="H", help=f"one of {', '.join(QUANTITIES)}")

    p = sub.add_parser("verify", help="run the invariant and regression suites")
    common(p, source=False)
    p.add_argument("--tol", type=float, help="override identity and finite-difference tolerances")
    p.add_argument("--suite", action="append", help=f"run only this suite ({', '.join(SUITES)})")

    sub.add_parser("list", help="list builtin metrics")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for name in builtin_names():
                print(f"{name:<20} {builtin(name).provenance}")
            return 0
        tolerances = {"identity": args.tol} if getattr(args, "tol", None) is not None else {}
        cfg = RunConfig(
            command=args.command,
            metric=getattr(args, "metric", None),
            builtin=getattr(args, "builtin", None),
            seed=args.seed,
            sites=getattr(args, "sites", DEFAULT_SITES),
            tolerances=tolerances,
            out=args.out,
            format=args.format,
        )
        if cfg.command == "classify":
            return cmd_classify(cfg)
        if cfg.command == "eval":
            return cmd_eval(cfg, args.x, args.y, args.q)
        return cmd_verify(cfg, args.suite)
    except (CliError, SamplingError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
