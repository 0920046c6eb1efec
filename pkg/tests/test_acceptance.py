"""Acceptance criteria 1-9.

Each test records one PASS/FAIL line (shown in the terminal summary) and then
asserts the same verdict.  Criteria 1-4 run the built-in examples; 5-9 are
property suites over seeded random grid-compatible problems from
``_random_scenarios``.
"""
import functools
import time

import numpy as np

from _random_scenarios import random_cone, random_problem
from compconj.conjugate import TransformConfig, biconjugate, conjugate, default_tol_fenchel
from compconj.duality import chain_rule_sets, optimality_scan, value_conjugate_check, weak_duality_report
from compconj.harness import run_example
from compconj.kconv import monotone_regularize
from compconj.qual import equality_certified, qualification_battery
from compconj.scenario import DEFAULT_TOLERANCES, builtin, load_scenario

N_RANDOM = 50
TOL_VALUE = DEFAULT_TOLERANCES["value"]
EXACT = 1e-9


@functools.lru_cache(maxsize=None)
def problem(seed: int):
    return random_problem(seed)


@functools.lru_cache(maxsize=None)
def example(name: str):
    return run_example(name)


def checks_of(rep) -> dict:
    return {c.check_id: c for c in rep.checks}


def require(rep, ids, computed=None):
    """Failures among the named checks, plus mismatching computed values."""
    by_id = checks_of(rep)
    bad = [i for i in ids if i not in by_id or not by_id[i].passed]
    for i, want in (computed or {}).items():
        if i not in by_id or by_id[i].computed != want:
            bad.append(f"{i}={by_id[i].computed if i in by_id else 'missing'}")
    return bad


def run_timed(name: str, limit: float):
    rep = example(name)
    t = rep.timing["total"]
    return rep, t, t < limit


def _finite_both(a, b, ok=None):
    m = np.isfinite(a) & np.isfinite(b)
    return m if ok is None else m & ok


def _maxdev(a, b, mask):
    return float(np.max(np.abs(a - b)[mask])) if mask.any() else 0.0


# criteria 1-4: built-in examples ------------------------------------------

def test_criterion_1_ex51(acceptance):
    rep, t, fast = run_timed("ex51", 60)
    bad = require(rep, ["g_star", "rho", "composite_conjugate", "conjugate_le_rho"],
                  {"conditions[None]:0_in_U": True, "conditions[None]:0_in_rint_U": False})
    rep2, t2, fast2 = run_timed("ex51-repaired", 60)
    bad += require(rep2, ["rho", "conditions[R+x0]:0_in_rint_U_K"],
                   {"conditions[None]:equality_certificate": True})
    ok = rep.passed and rep2.passed and fast and fast2 and not bad
    acceptance(ok, f"ex51 {len(rep.checks)} checks in {t:.1f} s, repaired {len(rep2.checks)} checks "
                   f"in {t2:.1f} s; problems: {bad or 'none'}")
    assert ok


def test_criterion_2_ex52(acceptance):
    rep, t, fast = run_timed("ex52", 120)
    bad = require(rep, ["composite_conjugate", "rho", "g_star", "K_F", "hzn_g", "g_K_conjugate[R+x0]"],
                  {"kfg_empty": True})
    rep2, t2, fast2 = run_timed("ex52-repaired", 120)
    bad += require(rep2, ["rho", "composite_conjugate"], {"conditions[None]:equality_certificate": True})
    ok = rep.passed and rep2.passed and fast and fast2 and not bad
    acceptance(ok, f"ex52 {len(rep.checks)} checks in {t:.1f} s, repaired {len(rep2.checks)} checks "
                   f"in {t2:.1f} s; problems: {bad or 'none'}")
    assert ok


def test_criterion_3_ex53(acceptance):
    rep, t, _ = run_timed("ex53", 120)
    bad = require(rep, ["g_K[R+x0,range=True]"], {"g_K[R+x0,range=False]:improper": True})
    ok = rep.passed and not bad
    acceptance(ok, f"{len(rep.checks)} checks in {t:.1f} s; problems: {bad or 'none'}")
    assert ok


def test_criterion_4_nonattainment(acceptance):
    rep, t, _ = run_timed("nonattain-dual", 120)
    pre = "duality[v=[0],u=[0]]"
    bad = require(rep, ["p[v=[0]]", "q[u=[0]]", f"{pre}:P_set", f"{pre}:diagnostic", f"{pre}:boundary_suspect"],
                  {"subgradient_empty[v=[0],u=[0]]": True})
    rep2, t2, _ = run_timed("nonattain-primal", 120)
    bad += require(rep2, ["p[v=[0]]", "f_star(v=[1],y=[1])", f"{pre}:Q_set", f"{pre}:diagnostic"])
    ok = rep.passed and rep2.passed and not bad
    acceptance(ok, f"dual example {len(rep.checks)} checks in {t:.1f} s, primal example "
                   f"{len(rep2.checks)} checks in {t2:.1f} s; problems: {bad or 'none'}")
    assert ok


# criterion 5: Fenchel and duality properties ------------------------------

def _fenchel_young(h, hs) -> float:
    """Most negative ``h(x) + h*(v) - <x, v>`` over all finite node pairs."""
    X, V = h.grid.nodes(), hs.grid.nodes()
    a, b = h.values.ravel(), hs.values.ravel()
    ia, ib = np.isfinite(a), np.isfinite(b)
    if not ia.any() or not ib.any():
        return 0.0
    gap = a[ia][:, None] + b[ib][None, :] - X[ia] @ V[ib].T
    return float(gap.min())


def _property_failures(P, rng) -> list:
    bad = []
    h = P.composite_fn()
    pairs = [(P.g_grid, P.y_grid), (P.f0_grid, P.v_grid), (h, P.v_grid)]
    for k, (f, dual) in enumerate(pairs):
        raw = TransformConfig(dual, boundary="raw")
        fs = conjugate(f, raw)
        # (a) Fenchel-Young at every node pair
        if _fenchel_young(f, fs) < -EXACT:
            bad.append(f"fenchel-young[{k}]")
        # (c) h** <= h and h*** = h*
        hss = biconjugate(f, TransformConfig(dual))
        fin = np.isfinite(f.values)
        if np.any(hss.values[fin] > f.values[fin] + EXACT):
            bad.append(f"biconjugate-above[{k}]")
        again = conjugate(biconjugate(f, raw), raw)
        m = _finite_both(again.values, fs.values)
        if _maxdev(again.values, fs.values, m) > EXACT or not np.array_equal(
                np.isfinite(again.values), np.isfinite(fs.values)):
            bad.append(f"idempotence[{k}]")
        # (d) BruteForce vs FastLLT
        bf = conjugate(f, TransformConfig(dual, method="BruteForce", boundary="raw"))
        m = _finite_both(bf.values, fs.values)
        if _maxdev(bf.values, fs.values, m) > default_tol_fenchel(f) or not np.array_equal(
                np.isfinite(bf.values), np.isfinite(fs.values)):
            bad.append(f"brute-vs-fast[{k}]")
    # (b) weak duality at probes
    for _ in range(3):
        v = P.v_grid.nodes()[rng.integers(P.v_grid.size)]
        u = P.u_grid.nodes()[rng.integers(P.u_grid.size)]
        if not weak_duality_report(P, v, u).flags["weak_ok"]:
            bad.append(f"weak-duality[v={v.tolist()},u={u.tolist()}]")
    # (e) conjugate of the primal value function equals f*(v, .)
    for v in P.v_grid.nodes()[rng.choice(P.v_grid.size, 2, replace=False)]:
        r = value_conjugate_check(P, v)
        if r["max_abs_dev"] > EXACT or not r["domains_match"]:
            bad.append(f"value-conjugate[v={v.tolist()}]")
    return bad


def test_criterion_5_fenchel_duality_suite(acceptance):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    failures = {}
    for seed in range(N_RANDOM):
        bad = _property_failures(problem(seed), rng)
        if bad:
            failures[seed] = bad
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 300
    dims = sum(problem(s).n == 2 for s in range(N_RANDOM))
    acceptance(ok, f"{N_RANDOM} scenarios ({N_RANDOM - dims} 1-D, {dims} 2-D) in {elapsed:.1f} s; "
                   f"failures: {failures or 'none'}")
    assert ok


# criterion 6: composite chain ---------------------------------------------

def test_criterion_6_composite_chain(acceptance):
    failures, certified, cones = {}, 0, 0
    max_eq = max_eta = 0.0
    rng = np.random.default_rng(6)
    cone_seeds = set(rng.choice(N_RANDOM, 10, replace=False).tolist())
    for seed in range(N_RANDOM):
        P = problem(seed)
        bad = []
        cc = conjugate(P.composite_fn(), P.cfg(P.v_grid))
        rt = P.rho_table()
        rho = rt.values.values
        tilde = P.rho_tilde_table().values
        fin = np.isfinite(rho)
        if np.any(rho[fin] > tilde[fin] + EXACT):
            bad.append("rho > rho_tilde")
        if np.any(cc.values > rho + EXACT):
            bad.append("conjugate > rho")
        if equality_certified(qualification_battery(P.qual_sets())):
            certified += 1
            clean = (cc.flags == 0) & (rt.values.flags == 0) & (rt.trunc == 0)
            both = _finite_both(cc.values, rho, clean)
            dev = _maxdev(cc.values, rho, both)
            max_eq = max(max_eq, dev)
            if dev > TOL_VALUE or np.any((np.isfinite(cc.values) != fin) & clean):
                bad.append(f"equality dev {dev:.3g}")
        if seed in cone_seeds:
            cones += 1
            K = random_cone(rng, P.m)
            eta = P.eta_table(K)
            if np.any(eta.values.values < rho - EXACT):
                bad.append(f"eta < rho for {K.rays.tolist()}")
            rk = P.with_g(monotone_regularize(P.g_grid, K)).rho_table()
            clean = (eta.values.flags == 0) & (rk.values.flags == 0) & (eta.trunc == 0) & (rk.trunc == 0)
            a, b = eta.values.values, rk.values.values
            dev = _maxdev(a, b, _finite_both(a, b, clean))
            max_eta = max(max_eta, dev)
            if dev > TOL_VALUE or np.any((np.isfinite(a) != np.isfinite(b)) & clean):
                bad.append(f"eta vs rho(g_K) dev {dev:.3g} for {K.rays.tolist()}")
        if bad:
            failures[seed] = bad
    ok = not failures and certified > 0
    acceptance(ok, f"{N_RANDOM} scenarios, {certified} certified (max |conj - rho| {max_eq:.3g}), "
                   f"{cones} random cones (max |eta - rho(g_K)| {max_eta:.3g}); failures: {failures or 'none'}")
    assert ok


# criterion 7: chain rule --------------------------------------------------

def _interior_nodes(h):
    """Flat indices of nodes whose axis neighbours are all in the domain."""
    fin = np.isfinite(h.values)
    inner = fin.copy()
    for ax in range(fin.ndim):
        inner &= np.roll(fin, 1, ax) & np.roll(fin, -1, ax)
        edge = [slice(None)] * fin.ndim
        edge[ax] = [0, -1]
        inner[tuple(edge)] = False
    return np.flatnonzero(inner)


def _untruncated(cr) -> bool:
    """The subdifferential sets stay off the boundary of their grids."""
    return not any(np.any(s.mask & s.grid.boundary_mask().reshape(s.mask.shape)) for s in (cr.lhs, cr.dg))


def test_criterion_7_chain_rule(acceptance):
    rng = np.random.default_rng(7)
    failures, inclusions, equalities = {}, 0, 0
    for seed in range(N_RANDOM):
        P = problem(seed)
        h = P.composite_fn()
        cert = equality_certified(qualification_battery(P.qual_sets()))
        dom = np.flatnonzero(np.isfinite(h.values.ravel()))
        inner = _interior_nodes(h)
        picks = list(rng.choice(dom, min(2, len(dom)), replace=False)) if len(dom) else []
        picks += list(rng.choice(inner, min(2, len(inner)), replace=False)) if len(inner) else []
        bad = []
        for k in picks:
            x = P.x_grid.nodes()[k]
            cr = chain_rule_sets(P, x, certified=cert)
            inclusions += 1
            if not cr.inclusion_ok:
                bad.append(f"inclusion at {x.tolist()}")
            if cert and k in inner and _untruncated(cr):
                equalities += 1
                if not cr.equality_ok:
                    bad.append(f"equality at {x.tolist()}")
        if bad:
            failures[seed] = bad
    P = load_scenario(builtin("ex52-repaired")).problem
    for x in ([0, 0], [1, 0], [-1, 0]):
        cr = chain_rule_sets(P, x, certified=True)
        equalities += 1
        if not (cr.inclusion_ok and cr.equality_ok):
            failures.setdefault("ex52-repaired", []).append(f"at {x}")
    ok = not failures
    acceptance(ok, f"{inclusions} inclusion and {equalities} equality checks (ex52-repaired at 3 points); "
                   f"failures: {failures or 'none'}")
    assert ok


# criterion 8: equivalence of the qualification conditions -----------------

def test_criterion_8_condition_equivalence(acceptance):
    rng = np.random.default_rng(8)
    cases = [(problem(s).qual_sets(), None) for s in range(N_RANDOM)]
    cases += [(problem(s).qual_sets(), random_cone(rng, problem(s).m)) for s in range(N_RANDOM)]
    for name in ("ex51", "ex51-repaired", "ex52"):
        sc = load_scenario(builtin(name))
        cases += [(sc.problem.qual_sets(), None), (sc.problem.qual_sets(), sc.cone)]
    mismatches, seen, boundary = [], {True: 0, False: 0}, 0
    for i, (sets, K) in enumerate(cases):
        rep = qualification_battery(sets, K, require_exact=True)
        a, b = rep.verdict("0_in_rint_U_K"), rep.verdict("rint_dom_g_meets_rint_img_K")
        c, d = rep.verdict("0_in_U_K"), rep.verdict("dom_g_meets_img_K")
        seen[bool(a)] += 1
        seen[bool(c)] += 1
        boundary += bool(c) and not a
        if a != b or c != d:
            mismatches.append(i)
    ok = not mismatches
    acceptance(ok, f"{len(cases)} exact-VRep cases ({seen[True]} true / {seen[False]} false verdicts, "
                   f"{boundary} with 0 in U_K but not in its relative interior); mismatches: {mismatches or 'none'}")
    assert ok


# criterion 9: optimality equivalence scan --------------------------------

def test_criterion_9_optimality_scan(acceptance):
    totals = {"triples": 0, "composite": 0, "split": 0, "discrepancies": 0}
    examples = []
    for seed in range(5):
        P = random_problem(100 + seed, dim=1 + seed % 2, small=True)
        assert max(max(P.x_grid.shape), max(P.v_grid.shape), max(P.y_grid.shape)) <= 21
        r = optimality_scan(P)
        for k in totals:
            totals[k] += r[k]
        examples += r["examples"]
    ok = totals["discrepancies"] == 0 and totals["composite"] > 0
    acceptance(ok, f"{totals['triples']} triples, {totals['composite']} satisfy the composite conditions, "
                   f"{totals['split']} the split ones, {totals['discrepancies']} discrepancies "
                   f"{examples[:3] if examples else ''}")
    assert ok
