"""Command-line front end.

Subcommands
-----------
doubconetest
    Generic test against a user-supplied constraint matrix.
agconst
    Constant mean against double, quadruple or octuple isotonic cones.
partlintest
    Constant, linear or quadratic shape in one predictor, adjusting for
    covariates.
additivetest
    Additive shape alternative over several predictors.
convextest
    Affine mean against multivariate convex or concave regression.
power
    Reproducible power study over a scenario catalog.

Test commands print a JSON report on stdout.  Set ``CONETEST_THREADS`` to use
more than one worker process for null simulation and power studies.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .builders import build_additive, build_orientation_family, cone_for_predictor
from .cones import ConeSpec, negate_cone, validate_assumptions
from .convex_multi import test_affine_multid
from .data import ingest_csv, read_matrix_csv
from .engine import run_test
from .extensions import (
    build_partial_linear,
    collapse_duplicates,
    test_additive,
    test_constant_multid,
    test_partial_linear,
    whiten_family,
)
from .scenarios import SCENARIOS, ExperimentSpec, describe_scenarios, run_power_study

SCHEMA_VERSION = 1

__all__ = ["SCHEMA_VERSION", "build_parser", "main"]


def _columns(text):
    return [c.strip() for c in text.split(",") if c.strip()] if text else []


def _floats(text):
    try:
        return tuple(float(v) for v in _columns(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _lipschitz(text):
    if text == "auto":
        return "auto"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive number or 'auto'") from None
    if v <= 0:
        raise argparse.ArgumentTypeError("Lipschitz bound must be positive")
    return v


def _add_data_flags(p, predictors=True):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--response", default="y", help="response column (default: y)")
    if predictors:
        p.add_argument("--predictors", required=True,
                       help="comma-separated predictor columns")
    p.add_argument("--weights", help="column of positive observation weights")


def _add_test_flags(p, null_flag="--null-mode"):
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--nsim", type=_positive_int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(null_flag, dest="null_mode", choices=["known-gaussian", "bootstrap"],
                   default="known-gaussian", help="null simulation (default: known-gaussian)")
    p.add_argument("--cache", metavar="DIR", help="directory for null-distribution cache files")
    p.add_argument("--include-fits", action="store_true", help="add fitted vectors to the report")


def _add_dump(p):
    p.add_argument("--dump-cone", metavar="PATH", help="write the cone family as JSON")


def build_parser():
    parser = argparse.ArgumentParser(prog="conetest", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("doubconetest", help="test against a constraint-matrix double cone")
    _add_data_flags(p, predictors=False)
    p.add_argument("--amat", required=True, help="CSV (no header) of the constraint matrix A")
    p.add_argument("--covariance", help="CSV (no header) of the error covariance")
    _add_test_flags(p, null_flag="--null")
    _add_dump(p)

    p = sub.add_parser("agconst", help="constant mean against isotonic orientation cones")
    _add_data_flags(p)
    _add_test_flags(p)
    _add_dump(p)

    p = sub.add_parser("partlintest", help="parametric shape in x, adjusting for covariates")
    _add_data_flags(p, predictors=False)
    p.add_argument("--predictor", default="x", help="predictor column (default: x)")
    p.add_argument("--covariates", help="comma-separated covariate columns")
    p.add_argument("--categorical", help="covariates to dummy-code even if numeric")
    p.add_argument("--null", dest="null_kind", choices=["constant", "linear", "quadratic"],
                   default="linear")
    p.add_argument("--covariance", help="CSV (no header) of the error covariance")
    _add_test_flags(p)
    _add_dump(p)

    p = sub.add_parser("additivetest", help="additive 2^d sign-pattern cone test")
    _add_data_flags(p)
    p.add_argument("--covariates", help="comma-separated covariate columns")
    p.add_argument("--categorical", help="covariates to dummy-code even if numeric")
    p.add_argument("--null", dest="null_kind", choices=["constant", "linear", "quadratic"],
                   default="linear", help="null shape of every component")
    _add_test_flags(p)
    _add_dump(p)

    p = sub.add_parser("convextest", help="affine mean against multivariate convex/concave")
    _add_data_flags(p)
    p.add_argument("--lipschitz", type=_lipschitz,
                   help="bound on subgradient norms, a number or 'auto'")
    p.add_argument("--norm", choices=["l2", "linf"], default="l2")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--nsim", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--include-fits", action="store_true")

    p = sub.add_parser("power", help="simulated power study")
    p.add_argument("--list-scenarios", action="store_true", help="print the catalog and exit")
    p.add_argument("--scenario", choices=list(SCENARIOS))
    p.add_argument("--n", type=_positive_int, default=100)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--grid", type=_floats, help="comma-separated effect sizes a")
    p.add_argument("--replications", type=_positive_int, default=2000)
    p.add_argument("--nsim", type=_positive_int, default=2000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=_positive_int, help="number of predictors (model1)")
    p.add_argument("--null", dest="null_kind", choices=["constant", "linear", "quadratic"],
                   help="override the null of a single-predictor scenario")
    p.add_argument("--correlated-covariate", action="store_true",
                   help="draw the categorical covariate dependent on x")
    p.add_argument("--out", metavar="CSV", help="write the power table here")
    p.add_argument("--plot-data", metavar="JSON", help="write plot series here")
    return parser


# ----------------------------------------------------------------------------
# commands

def _report(command, outcome, args, extra=None, caught=()):
    out = {"schemaVersion": SCHEMA_VERSION, "command": command}
    out.update(outcome.to_json(include_fits=getattr(args, "include_fits", False)))
    if extra:
        out.update(extra)
    msgs = [str(w.message) for w in caught]
    if msgs:
        out.setdefault("warnings", []).extend(msgs)
    return out


def _dump(path, family):
    if path:
        Path(path).write_text(json.dumps([c.to_json() for c in family], indent=2) + "\n")


def _cmd_doubconetest(args, caught):
    data = ingest_csv(args.data, args.response, [], weights=args.weights)
    A = read_matrix_csv(args.amat)
    if A.shape[1] != data.n:
        raise ValueError(f"constraint matrix has {A.shape[1]} columns but the data has "
                         f"{data.n} rows")
    cone = ConeSpec.from_constraints(A, label="user")
    report = validate_assumptions(cone)
    extra = {"n": data.n, "validation": report.to_json()}
    if not report.ok:
        extra["warnings"] = ["cone assumptions not certified; result is advisory"]
    if args.covariance:
        if args.weights:
            raise ValueError("give either --weights or --covariance, not both")
        data.covariance = read_matrix_csv(args.covariance)
        if data.covariance.shape != (data.n, data.n):
            raise ValueError(f"covariance must be {data.n} x {data.n}")
    family = [cone, negate_cone(cone)]
    _dump(args.dump_cone, family)
    y, fam = whiten_family(data, family)
    out = run_test(y, fam, None, alpha=args.alpha, nsim=args.nsim, seed=args.seed,
                   null_mode=args.null_mode, cache_dir=args.cache)
    return _report("doubconetest", out, args, extra, caught)


def _cmd_agconst(args, caught):
    data = ingest_csv(args.data, args.response, _columns(args.predictors),
                      weights=args.weights)
    if args.dump_cone:
        _dump(args.dump_cone, build_orientation_family(collapse_duplicates(data).x))
    out = test_constant_multid(data, alpha=args.alpha, nsim=args.nsim, seed=args.seed,
                               null_mode=args.null_mode, cache_dir=args.cache)
    return _report("agconst", out, args, {"n": data.n, "d": data.d}, caught)


def _cmd_partlintest(args, caught):
    covs = _columns(args.covariates)
    data = ingest_csv(args.data, args.response, [args.predictor], covs,
                      categorical=_columns(args.categorical), weights=args.weights)
    if args.covariance:
        if args.weights:
            raise ValueError("give either --weights or --covariance, not both")
        data.covariance = read_matrix_csv(args.covariance)
        if data.covariance.shape != (data.n, data.n):
            raise ValueError(f"covariance must be {data.n} x {data.n}")
    if args.dump_cone:
        cone = build_partial_linear(cone_for_predictor(data.x[:, 0], args.null_kind), data.Z)
        _dump(args.dump_cone, [cone, negate_cone(cone)])
    out = test_partial_linear(data, null_kind=args.null_kind, alpha=args.alpha,
                              nsim=args.nsim, seed=args.seed, null_mode=args.null_mode,
                              cache_dir=args.cache)
    extra = {"n": data.n, "nullKind": args.null_kind,
             "covariateColumns": list(data.column_names[2:])}
    return _report("partlintest", out, args, extra, caught)


def _cmd_additivetest(args, caught):
    data = ingest_csv(args.data, args.response, _columns(args.predictors),
                      _columns(args.covariates), categorical=_columns(args.categorical),
                      weights=args.weights)
    kinds = [args.null_kind] * data.d
    if args.dump_cone:
        comps = [cone_for_predictor(data.x[:, j], k) for j, k in enumerate(kinds)]
        _dump(args.dump_cone, build_additive(comps, data.Z))
    out = test_additive(data, kinds=kinds, alpha=args.alpha, nsim=args.nsim, seed=args.seed,
                        null_mode=args.null_mode, cache_dir=args.cache)
    return _report("additivetest", out, args, {"n": data.n, "d": data.d}, caught)


def _cmd_convextest(args, caught):
    data = ingest_csv(args.data, args.response, _columns(args.predictors))
    if args.weights:
        raise ValueError("convextest does not support weights")
    out = test_affine_multid(data.x, data.y, L=args.lipschitz, alpha=args.alpha,
                             nsim=args.nsim, seed=args.seed, norm=args.norm)
    extra = {"n": data.n, "d": data.d, "lipschitz": args.lipschitz, "norm": args.norm}
    return _report("convextest", out, args, extra, caught)


def _cmd_power(args):
    if args.list_scenarios:
        print(describe_scenarios())
        return None
    if not args.scenario:
        raise ValueError("--scenario is required (see --list-scenarios)")
    spec = ExperimentSpec(scenario=args.scenario, n=args.n, sigma=args.sigma,
                          effect_grid=args.grid, replications=args.replications,
                          nsim=args.nsim, alpha=args.alpha, seed=args.seed, dim=args.dim,
                          null_kind=args.null_kind,
                          correlated_covariate=args.correlated_covariate)
    result = run_power_study(spec)
    if args.out:
        Path(args.out).write_text(result.to_csv())
    if args.plot_data:
        Path(args.plot_data).write_text(result.plot_json() + "\n")
    report = {"schemaVersion": SCHEMA_VERSION, "command": "power"}
    report.update(result.plot_data())
    return report


_COMMANDS = {
    "doubconetest": _cmd_doubconetest,
    "agconst": _cmd_agconst,
    "partlintest": _cmd_partlintest,
    "additivetest": _cmd_additivetest,
    "convextest": _cmd_convextest,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "power":
            report = _cmd_power(args)
        else:
            if hasattr(args, "alpha") and not 0 < args.alpha < 1:
                raise ValueError("alpha must lie in (0, 1)")
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                report = _COMMANDS[args.command](args, caught)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"conetest {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if report is not None:
        print(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


if __name__ == "__main__":
    sys.exit(main())
