"""Command-line front end.

Exit codes: 0 every check passed, 1 a check failed, 2 usage or parse error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .cones import Cone
from .conjugate import TransformConfig, conjugate
from .errors import CompConjError
from .expr import as_expr
from .grid import Grid, sample, to_csv
from .scenario import BUILTINS, load_scenario

log = logging.getLogger("compconj")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _grid_arg(text: str) -> Grid:
    """``lo,hi,n`` per axis, axes separated by ``;``."""
    axes = []
    for part in text.split(";"):
        try:
            lo, hi, n = part.split(",")
            axes.append((float(lo), float(hi), int(n)))
        except ValueError as exc:
            raise CompConjError(f"bad grid {text!r}: expected lo,hi,n[;lo,hi,n...]") from exc
    return Grid(tuple(axes))


def _override_arg(items) -> dict:
    """``name=lo,hi,n`` (same box on every axis) or ``name=lo,hi,n;lo,hi,n``."""
    out = {}
    for item in items or []:
        if "=" not in item:
            raise CompConjError(f"bad --grid-override {item!r}: expected name=lo,hi,n")
        key, spec = item.split("=", 1)
        if key not in ("x", "u", "v", "y"):
            raise CompConjError(f"unknown grid {key!r}; choose x, u, v or y")
        g = _grid_arg(spec)
        out[key] = list(g.axes[0]) if g.dim == 1 and ";" not in spec else [list(a) for a in g.axes]
    return out


def _emit(report, args) -> int:
    text = report.dumps()
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    if getattr(args, "dump_grids", None):
        report.dump_grids(args.dump_grids)
    print(report.summary())
    return report.exit_code


def _cmd_example(args) -> int:
    from .harness import run_example
    return _emit(run_example(args.name, _override_arg(args.grid_override), args.tol_scale), args)


def _cmd_run(args) -> int:
    from .harness import run_scenario
    return _emit(run_scenario(args.scenario, _override_arg(args.grid_override), args.tol_scale), args)


def _cmd_list(args) -> int:
    for name, sc in BUILTINS.items():
        print(f"{name:18s} {sc['citation']}")
    return EXIT_OK


def _cmd_conjugate(args) -> int:
    e = as_expr(args.expr)
    grid = _grid_arg(args.grid)
    dual = _grid_arg(args.dual_grid)
    prefix = next(iter(e.prefixes()), "x")
    h = sample(e, grid, prefix)
    out = conjugate(h, TransformConfig(dual, method=args.method, boundary=args.boundary))
    text = to_csv(out)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_kconv(args) -> int:
    from .harness import round_sig
    from .kconv import horizon_cone, is_k_convex, k_f_estimate, kf_within_neg_hzn
    sc = load_scenario(args.scenario)
    P = sc.problem
    out = {"scenario": sc.name}
    KF = k_f_estimate(P.F, P.x_grid)
    hz = horizon_cone(P.g_grid)
    out["K_F"] = KF.to_json()
    out["hzn_g"] = hz.to_json()
    out["K_F_within_minus_hzn_g"] = kf_within_neg_hzn(KF, hz)
    cones = [sc.cone] if sc.cone is not None else []
    cones += [Cone.parse(c, P.m) for c in args.cone or []]
    out["k_convex"] = []
    for K in cones:
        ok, cert = is_k_convex(P.F, K, P.x_grid)
        out["k_convex"].append({"cone": K.to_json(), "convex": ok, **cert.to_json()})
    print(json.dumps(round_sig(out), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_qual(args) -> int:
    from .harness import _f_sampler
    from .qual import equality_certified, is_pwlq, qualification_battery
    sc = load_scenario(args.scenario)
    P = sc.problem
    pw = is_pwlq(bool(P.flags.get("pwlq_f", False)), _f_sampler(P), P.n + P.m)
    K = Cone.parse(args.cone, P.m) if args.cone else sc.cone
    rep = qualification_battery(P.qual_sets(), K, pwlq=pw)
    out = rep.to_json()
    out["equality_certificate"] = equality_certified(rep)
    print(json.dumps(out, indent=2, sort_keys=True, default=str))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="compconj", description="Grid conjugates of composite functions.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def run_opts(q):
        q.add_argument("--out", help="write the JSON report here")
        q.add_argument("--dump-grids", metavar="DIR", help="write CSV dumps of the sampled functions")
        q.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance")
        q.add_argument("--grid-override", action="append", metavar="NAME=LO,HI,N",
                       help="replace the x, u, v or y grid (repeatable)")

    q = sub.add_parser("example", help="run a built-in example")
    q.add_argument("name", choices=sorted(BUILTINS))
    run_opts(q)
    q.set_defaults(func=_cmd_example)

    q = sub.add_parser("run", help="run a scenario file")
    q.add_argument("scenario")
    run_opts(q)
    q.set_defaults(func=_cmd_run)

    q = sub.add_parser("list", help="list the built-in examples")
    q.set_defaults(func=_cmd_list)

    q = sub.add_parser("conjugate", help="conjugate of an expression, as CSV")
    q.add_argument("expr")
    q.add_argument("--grid", required=True, help="primal grid lo,hi,n[;lo,hi,n...]")
    q.add_argument("--dual-grid", required=True, help="dual grid lo,hi,n[;lo,hi,n...]")
    q.add_argument("--method", choices=("FastLLT", "BruteForce"), default="FastLLT")
    q.add_argument("--boundary", choices=("extend", "raw"), default="extend")
    q.add_argument("--out", help="write the CSV here instead of stdout")
    q.set_defaults(func=_cmd_conjugate)

    q = sub.add_parser("kconv", help="K_F, horizon cone and K-convexity for a scenario")
    q.add_argument("scenario")
    q.add_argument("--cone", action="append", help="extra cone to test (repeatable)")
    q.set_defaults(func=_cmd_kconv)

    q = sub.add_parser("qual", help="qualification battery for a scenario")
    q.add_argument("scenario")
    q.add_argument("--cone", help="monotonicity cone (defaults to the scenario's)")
    q.set_defaults(func=_cmd_qual)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CompConjError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
