"""Scenario execution: checks against expected values and the run report.

Every entry of a scenario's ``expected`` block becomes one or more checks.
A check carries the computed and expected values, an absolute deviation
and a tolerance; it passes when ``abs_dev <= tol`` (or, for verdicts and
node-set comparisons, when they match).

Recognised ``expected`` keys
----------------------------
composite, composite_conjugate, g_star, rho, rho_tilde
    Closed forms compared node-wise on the x-, v-, y-, v- and v-grids.
eta
    ``[{"cone", "expr"}]``, the cone-restricted formula on the v-grid.
p, q
    ``[{"v"|"u", "expr", "region"?}]``, primal / dual value functions.
values
    ``[{"kind": "lagrangian"|"f_star", ..., "value"}]`` scalar probes.
K_F, hzn_g
    Cone specs compared by angle.
kfg_empty
    Whether no cone both convexifies F and keeps g monotone.
k_convex, k_increasing
    Verdict lists.
g_K, g_K_conjugate
    Monotone regularisation and its conjugate.
convex_f, pwlq_spot
    Convexity of ``f(x, u)`` on a coarse copy; PWLQ spot check.
conditions
    ``[{"cone", "verdicts", "equality_certificate"?}]``.
optimality, chain_rule, duality, subgradient_empty
    Pointwise optimality, chain-rule and duality probes.
"""
from __future__ import annotations

import json
import math
import os
import re
import time
from dataclasses import dataclass, field

import numpy as np

from .cones import Cone, cone_angle
from .composite import CompositeProblem
from .conjugate import conjugate
from .duality import (chain_rule_sets, dual_table, f_star, lagrangian, optimality_equivalence_check,
                      primal_table, subgradient_escape, weak_duality_report)
from .errors import NotConvex
from .expr import as_expr
from .grid import Grid, GridFn, NodeSet, to_csv
from .kconv import (horizon_cone, is_k_convex, is_k_increasing, k_f_estimate, kf_within_neg_hzn,
                    range_mask, regularize_with_report, regularized_conjugate_check)
from .qual import equality_certified, is_pwlq, qualification_battery
from .scenario import Scenario, builtin, load_scenario

__all__ = ["Check", "RunReport", "run_scenario", "run_example", "compare_fn", "round_sig", "COARSE_NODES"]

COARSE_NODES = 17


@dataclass
class Check:
    check_id: str
    computed: object
    expected: object
    abs_dev: float
    tol: float
    passed: bool
    note: str = ""

    def to_json(self) -> dict:
        return {"check_id": self.check_id, "computed": self.computed, "expected": self.expected,
                "abs_dev": self.abs_dev, "tol": self.tol, "pass": self.passed, "note": self.note}


@dataclass
class RunReport:
    name: str
    citation: str
    checks: list = field(default_factory=list)
    duality: list = field(default_factory=list)
    conditions: dict = field(default_factory=dict)
    kconv: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_json(self, timing: bool = True) -> dict:
        out = {"scenario": self.name, "citation": self.citation, "pass": self.passed,
               "checks": [c.to_json() for c in self.checks], "duality": self.duality,
               "conditions": self.conditions, "kconv": self.kconv}
        if timing:
            out["timing"] = self.timing
        return round_sig(out)

    def dumps(self, timing: bool = True) -> str:
        return json.dumps(self.to_json(timing), indent=2, sort_keys=True)

    def dump_grids(self, directory: str) -> list:
        """Write every collected grid function as ``<name>.csv``."""
        os.makedirs(directory, exist_ok=True)
        paths = []
        for key, h in sorted(self.grids.items()):
            path = os.path.join(directory, f"{key}.csv")
            with open(path, "w") as fh:
                fh.write(to_csv(h))
            paths.append(path)
        return paths

    def summary(self) -> str:
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'} "
                 f"({sum(c.passed for c in self.checks)}/{len(self.checks)} checks)"]
        for c in self.checks:
            lines.append(f"  [{'ok' if c.passed else 'FAIL'}] {c.check_id}"
                         + (f"  dev={c.abs_dev:.3g} tol={c.tol:.3g}" if c.abs_dev is not None else "")
                         + (f"  {c.note}" if c.note else ""))
        return "\n".join(lines)


def round_sig(obj, digits: int = 12):
    """Round floats to ``digits`` significant digits; infinities become strings."""
    if isinstance(obj, dict):
        return {str(k): round_sig(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_sig(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return round_sig(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return float(f"{x:.{digits}g}")
    return obj


# comparators -----------------------------------------------------------

def compare_fn(computed: GridFn, expected, exclude_boundary: bool = True, region=None,
               dilation: int = 1) -> dict:
    """Compare a grid function with a closed form node by node.

    Suspect nodes (flag 1) are excluded and so, optionally, are box-boundary
    nodes.  The finite domains and the ``-inf`` sets must agree within
    ``dilation`` nodes; the deviation is the largest ``|a - b|`` over nodes
    where both sides are finite.
    """
    grid = computed.grid
    exp = as_expr(expected)
    prefix = next(iter(exp.prefixes()), None)
    if prefix is None:
        b = np.full(grid.shape, float(exp.evaluate({})))
    else:
        b = exp.on_points(grid.nodes(), prefix).reshape(grid.shape)
    a = computed.values
    keep = computed.flags != 1
    if exclude_boundary:
        keep &= ~grid.boundary_mask()
    if region is not None:
        X = grid.nodes()
        lo = np.array([r[0] for r in region]) - 1e-9
        hi = np.array([r[1] for r in region]) + 1e-9
        keep &= np.all((X >= lo) & (X <= hi), axis=1).reshape(grid.shape)
    fa, fb = keep & np.isfinite(a), keep & np.isfinite(b)
    na, nb = keep & np.isneginf(a), keep & np.isneginf(b)
    dom_ok = NodeSet(grid, fa).same_as(NodeSet(grid, fb), dilation)
    minus_ok = NodeSet(grid, na).same_as(NodeSet(grid, nb), dilation)
    both = fa & fb
    dev = float(np.max(np.abs(a[both] - b[both]))) if both.any() else 0.0
    return {"abs_dev": dev, "domain_ok": bool(dom_ok), "minus_inf_ok": bool(minus_ok),
            "compared": int(both.sum()), "finite_computed": int(fa.sum()), "finite_expected": int(fb.sum())}


class _Run:
    """Mutable state of a single scenario run."""

    def __init__(self, sc: Scenario):
        self.sc = sc
        self.P: CompositeProblem = sc.problem
        self.tol = sc.tolerances
        self.report = RunReport(sc.name, sc.citation)
        self._t = time.perf_counter()

    def lap(self, key: str):
        now = time.perf_counter()
        self.report.timing[key] = self.report.timing.get(key, 0.0) + now - self._t
        self._t = now

    def add(self, check_id, computed, expected, abs_dev, tol, passed, note=""):
        self.report.checks.append(Check(check_id, computed, expected, abs_dev, tol, bool(passed), note))

    def verdict(self, check_id, computed, expected, note=""):
        self.add(check_id, computed, expected, None, None, computed == expected, note)

    def fn(self, check_id, h: GridFn, expr, exclude_boundary=True, region=None, tol=None):
        tol = self.tol["value"] if tol is None else tol
        r = compare_fn(h, expr, exclude_boundary, region)
        self.report.grids[re.sub(r"[^A-Za-z0-9_.+-]+", "_", check_id).strip("_")] = h
        ok = r["abs_dev"] <= tol and r["domain_ok"] and r["minus_inf_ok"]
        note = "" if r["domain_ok"] and r["minus_inf_ok"] else (
            f"domain mismatch: {r['finite_computed']} finite computed vs {r['finite_expected']} expected"
            if not r["domain_ok"] else "-inf pattern mismatch")
        self.add(check_id, {"compared_nodes": r["compared"], "finite_nodes": r["finite_computed"]},
                 str(expr), r["abs_dev"], tol, ok, note)

    def scalar(self, check_id, computed, expected, tol=None):
        tol = self.tol["scalar"] if tol is None else tol
        c, e = float(computed), float(expected)
        if math.isinf(c) or math.isinf(e):
            dev = 0.0 if c == e else math.inf
        else:
            dev = abs(c - e)
        self.add(check_id, c, e, dev, tol, dev <= tol)

    def cone(self, check_id, computed: Cone, expected_spec):
        exp = Cone.parse(expected_spec, computed.dim)
        ang = cone_angle(computed, exp)
        self.add(check_id, computed.to_json(), exp.to_json(), ang, self.tol["angle_deg"],
                 ang <= self.tol["angle_deg"], "angle in degrees")

    def nodes(self, check_id, grid: Grid, computed: list, expected: list):
        A = NodeSet.from_points(grid, computed) if computed else NodeSet(grid, np.zeros(grid.shape, bool))
        B = NodeSet.from_points(grid, expected) if expected else NodeSet(grid, np.zeros(grid.shape, bool))
        ok = A.same_as(B, 1)
        self.add(check_id, [list(map(float, p)) for p in computed], expected, None, None, ok,
                 "node sets compared within one node")


def _coarse(P: CompositeProblem, nodes: int = COARSE_NODES) -> CompositeProblem:
    def shrink(g: Grid) -> Grid:
        return Grid(tuple((lo, hi, min(n, nodes)) for lo, hi, n in g.axes))
    return CompositeProblem(P.f0, P.g if not isinstance(P.g, GridFn) else "0", P.F, shrink(P.x_grid),
                            shrink(P.u_grid), shrink(P.v_grid), shrink(P.y_grid), P.name, P.method)


def _f_sampler(P: CompositeProblem):
    """``f(x, u) = f0(x) + g(F(x) + u)`` on stacked rows ``(x, u)``."""
    n = P.n

    def f(Z):
        Z = np.atleast_2d(Z)
        X, U = Z[:, :n], Z[:, n:]
        f0 = P.f0.on_points(X, "x") if P.f0.variables else np.full(len(Z), float(P.f0.evaluate({})))
        Fv, dom = P.F.evaluate(X)
        W = np.where(dom[:, None], Fv, 0.0) + U
        return np.where(dom, f0 + P.g_at(W), np.inf)
    return f


# stages ----------------------------------------------------------------

def _transforms(run: _Run):
    P, exp, rep = run.P, run.sc.expected, run.report
    rep.grids["g"] = P.g_grid
    rep.grids["g_star"] = P.g_star
    comp = P.composite_fn()
    rep.grids["composite"] = comp
    if "composite" in exp:
        run.fn("composite", comp, exp["composite"])
    if "g_star" in exp:
        run.fn("g_star", P.g_star, exp["g_star"])
    run.lap("conjugates")
    need_rho = any(k in exp for k in ("rho", "composite_conjugate"))
    if "composite_conjugate" in exp or need_rho:
        cc = conjugate(comp, P.cfg(P.v_grid))
        rep.grids["composite_conjugate"] = cc
        if "composite_conjugate" in exp:
            run.fn("composite_conjugate", cc, exp["composite_conjugate"])
    if need_rho:
        rho = P.rho_table().values
        if "rho" in exp:
            run.fn("rho", rho, exp["rho"])
        # direct conjugate <= rho wherever both are clean
        keep = (rho.flags == 0) & (cc.flags == 0) & ~P.v_grid.boundary_mask()
        with np.errstate(invalid="ignore"):
            diff = np.where(keep & np.isfinite(cc.values) & np.isfinite(rho.values),
                            cc.values - rho.values, 0.0)
        over = keep & (np.isposinf(cc.values) & np.isfinite(rho.values))
        dev = max(float(diff.max(initial=0.0)), 0.0)
        run.add("conjugate_le_rho", dev, 0.0, dev, run.tol["value"],
                dev <= run.tol["value"] and not over.any())
    if "rho_tilde" in exp:
        run.fn("rho_tilde", P.rho_tilde_table(), exp["rho_tilde"])
    for item in exp.get("eta", []):
        K = run.sc.cone_of(item["cone"])
        run.fn(f"eta[{item['cone']}]", P.eta_table(K).values, item["expr"])
    run.lap("rho_eta")


def _values(run: _Run):
    P, exp = run.P, run.sc.expected
    for item in exp.get("values", []):
        kind = item["kind"]
        if kind == "lagrangian":
            val = lagrangian(P, item["x"], item["y"])
            run.scalar(f"lagrangian(x={item['x']},y={item['y']})", val, item["value"])
        elif kind == "f_star":
            val = f_star(P, item["v"], item["y"])
            run.scalar(f"f_star(v={item['v']},y={item['y']})", val, item["value"])
        else:
            run.add(f"values:{kind}", None, item, None, None, False, "unknown value kind")
    for item in exp.get("p", []):
        t = primal_table(P, item["v"])
        run.fn(f"p[v={item['v']}]", t, item["expr"], exclude_boundary=item.get("exclude_boundary", True),
               region=item.get("region"))
    for item in exp.get("q", []):
        t = dual_table(P, item["u"])
        run.fn(f"q[u={item['u']}]", t, item["expr"], exclude_boundary=item.get("exclude_boundary", True),
               region=item.get("region"))
    run.lap("value_functions")


def _duality(run: _Run):
    P, exp, rep = run.P, run.sc.expected, run.report
    probes = exp.get("duality") or [{"v": [0.0] * P.n, "u": [0.0] * P.m}]
    for item in probes:
        r = weak_duality_report(P, item["v"], item["u"], run.tol.get("weak"))
        rep.duality.append(r.to_json())
        tag = f"duality[v={item['v']},u={item['u']}]"
        run.verdict(f"{tag}:weak", r.flags["weak_ok"], True)
        if "p" in item:
            run.scalar(f"{tag}:p", r.p_val, item["p"], run.tol["value"])
        if "q" in item:
            run.scalar(f"{tag}:q", r.q_val, item["q"], run.tol["value"])
        if "P_set" in item:
            run.nodes(f"{tag}:P_set", P.x_grid, r.P_set, item["P_set"])
        if "Q_set" in item:
            run.nodes(f"{tag}:Q_set", P.y_grid, r.Q_set, item["Q_set"])
        for flag in ("primal_attained", "dual_attained", "boundary_suspect"):
            if flag in item:
                run.verdict(f"{tag}:{flag}", r.flags[flag], item[flag])
        if "diagnostic" in item:
            run.verdict(f"{tag}:diagnostic", item["diagnostic"] in r.diagnostics, True,
                        f"diagnostics {r.diagnostics}")
    for item in exp.get("subgradient_empty", []):
        esc = subgradient_escape(P, item["v"], item["u"])
        run.verdict(f"subgradient_empty[v={item['v']},u={item['u']}]", esc["escaping"], True,
                    "difference quotients of p escape under refinement")
    run.lap("duality")


def _kconv(run: _Run):
    P, exp, rep = run.P, run.sc.expected, run.report
    wants = {"K_F", "hzn_g", "kfg_empty"} & set(exp)
    if wants or run.sc.cone is not None:
        try:
            KF = k_f_estimate(P.F, P.x_grid)
            rep.kconv["K_F"] = KF.to_json()
        except Exception as exc:  # noqa: BLE001 - reported, not fatal
            KF = None
            rep.kconv["K_F"] = {"error": f"{type(exc).__name__}: {exc}"}
        hz = horizon_cone(P.g_grid)
        rep.kconv["hzn_g"] = hz.to_json()
        if KF is not None:
            rep.kconv["K_F_within_minus_hzn_g"] = kf_within_neg_hzn(KF, hz)
        if "K_F" in exp:
            if KF is None:
                run.add("K_F", rep.kconv["K_F"], exp["K_F"], None, None, False, "estimate failed")
            else:
                run.cone("K_F", KF, exp["K_F"])
        if "hzn_g" in exp:
            run.cone("hzn_g", hz, exp["hzn_g"])
        if "kfg_empty" in exp and KF is not None:
            run.verdict("kfg_empty", not kf_within_neg_hzn(KF, hz), exp["kfg_empty"])
    for item in exp.get("k_convex", []):
        ok, cert = is_k_convex(P.F, run.sc.cone_of(item["cone"]), P.x_grid)
        rep.kconv.setdefault("k_convex", []).append({"cone": item["cone"], **cert.to_json()})
        run.verdict(f"k_convex[{item['cone']}]", ok, item["expected"])
    rng = None
    for item in exp.get("k_increasing", []):
        restrict = item.get("restrict_to_range", False)
        if restrict and rng is None:
            rng = range_mask(P.F, P.x_grid, P.u_grid)
        ok = is_k_increasing(P.g_grid, run.sc.cone_of(item["cone"]), rng if restrict else None)
        run.verdict(f"k_increasing[{item['cone']},range={restrict}]", ok, item["expected"])
    for item in exp.get("g_K", []):
        K = run.sc.cone_of(item["cone"])
        restrict = item.get("restrict_to_range", False)
        g = P.g_grid
        if restrict:
            if rng is None:
                rng = range_mask(P.F, P.x_grid, P.u_grid)
            g = g.with_values(np.where(rng, g.values, np.inf), name=f"{g.name}+delta_rgeF")
        r = regularize_with_report(g, K, rng if restrict else None)
        tag = f"g_K[{item['cone']},range={restrict}]"
        rep.kconv.setdefault("g_K", []).append({"cone": item["cone"], "restrict_to_range": restrict,
                                                **r.to_json()})
        if "improper" in item:
            run.verdict(f"{tag}:improper", r.improper, item["improper"],
                        f"{r.minus_inf_nodes} nodes at -inf")
        if "expr" in item:
            run.fn(tag, r.g_K, item["expr"], exclude_boundary=item.get("exclude_boundary", False))
    for item in exp.get("g_K_conjugate", []):
        K = run.sc.cone_of(item["cone"])
        chk = regularized_conjugate_check(P.g_grid, K, P.y_grid, P.method)
        tag = f"g_K_conjugate[{item['cone']}]"
        run.add(f"{tag}:identity", chk["max_abs_dev"], 0.0, chk["max_abs_dev"], run.tol["value"],
                chk["max_abs_dev"] <= run.tol["value"] and chk["domains_match"],
                "(g_K)* against g* + indicator of -polar(K)")
        if "expr" in item:
            run.fn(tag, chk["lhs"], item["expr"])
    run.lap("kconv")


def _qual(run: _Run):
    P, exp, rep = run.P, run.sc.expected, run.report
    f = _f_sampler(P)
    pw = is_pwlq(bool(P.flags.get("pwlq_f", False)) or "pwlq_spot" in exp, f, P.n + P.m)
    if "pwlq_spot" in exp:
        run.verdict("pwlq_spot", pw.valid, exp["pwlq_spot"], pw.detail)
    if not P.flags.get("pwlq_f", False):
        pw = is_pwlq(False)
    convex_f = None
    if "convex_f" in exp or exp.get("conditions") or exp.get("chain_rule"):
        try:
            from .duality import joint_convexity
            convex_f = joint_convexity(_coarse(P))
        except MemoryError:
            convex_f = None
        if "convex_f" in exp:
            run.verdict("convex_f", convex_f, exp["convex_f"], f"midpoint test on {COARSE_NODES}-node grids")
    sets = P.qual_sets()
    base = qualification_battery(sets, run.sc.cone, pwlq=pw, convex_f=convex_f)
    rep.conditions = base.to_json()
    run.certified = equality_certified(qualification_battery(sets, None, pwlq=pw, convex_f=convex_f))
    for item in exp.get("conditions", []):
        K = None if item.get("cone") is None else run.sc.cone_of(item["cone"])
        cr = qualification_battery(sets, K, pwlq=pw, convex_f=convex_f)
        tag = f"conditions[{item.get('cone')}]"
        for name, want in item.get("verdicts", {}).items():
            run.verdict(f"{tag}:{name}", cr.verdict(name), want)
        if "equality_certificate" in item:
            run.verdict(f"{tag}:equality_certificate", equality_certified(cr), item["equality_certificate"])
    run.lap("qualification")


def _pointwise(run: _Run):
    P, exp = run.P, run.sc.expected
    for item in exp.get("optimality", []):
        oc = optimality_equivalence_check(P, item["v"], item["x"], item["y"])
        tag = f"optimality[v={item['v']},x={item['x']},y={item['y']}]"
        run.verdict(f"{tag}:equivalent", oc.equivalent, True)
        if "composite" in item:
            run.verdict(f"{tag}:composite", oc.composite_holds, item["composite"])
        if "split" in item:
            run.verdict(f"{tag}:split", oc.split_holds, item["split"])
    for item in exp.get("chain_rule", []):
        tag = f"chain_rule[x={item['x']}]"
        try:
            cr = chain_rule_sets(P, item["x"], certified=getattr(run, "certified", False))
        except NotConvex as exc:
            run.add(tag, None, item, None, None, False, f"NotConvex: {exc}")
            continue
        if "inclusion" in item:
            run.verdict(f"{tag}:inclusion", cr.inclusion_ok, item["inclusion"])
        if "equality" in item:
            run.verdict(f"{tag}:equality", cr.equality_holds, item["equality"],
                        f"|lhs|={len(cr.lhs)} |rhs|={len(cr.rhs)}")
    run.lap("pointwise")


def run_scenario(obj, grid_override: dict | None = None, tol_scale: float = 1.0) -> RunReport:
    """Execute the full pipeline for a scenario (dict, JSON text or path)."""
    t0 = time.perf_counter()
    sc = obj if isinstance(obj, Scenario) else load_scenario(obj, grid_override, tol_scale)
    run = _Run(sc)
    run.report.timing["load"] = time.perf_counter() - t0
    _transforms(run)
    _values(run)
    _duality(run)
    _kconv(run)
    _qual(run)
    _pointwise(run)
    run.report.timing["total"] = sum(run.report.timing.values())
    return run.report


def run_example(name: str, grid_override: dict | None = None, tol_scale: float = 1.0) -> RunReport:
    """Run one of the built-in examples (see :data:`compconj.scenario.BUILTINS`)."""
    return run_scenario(builtin(name), grid_override, tol_scale)
