import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from compconj.composite import CompositeProblem
from compconj.duality import (argmin_vs_subdifferential, chain_rule_sets, dual_table, dual_value, f_star,
                              f_star_direct, joint_convexity, lagrangian, optimality_equivalence_check,
                              optimality_scan, primal_table, primal_value, subgradient_escape,
                              value_conjugate_check, weak_duality_report)
from compconj.errors import NotConvex
from compconj.grid import Grid

G81 = Grid(((-4, 4, 81), (-4, 4, 81)))
Y161 = Grid(((-8, 8, 161), (-8, 8, 161)))


@pytest.fixture(scope="module")
def ex51():
    return CompositeProblem("0", "pow(w1,3)/3 if w1>=0 else inf", ["0", "x2"], G81, G81, G81, Y161)


@pytest.fixture(scope="module")
def ex52():
    return CompositeProblem("0", "abs(w1)", ["pow(x1,2)/2", "x2"], G81, G81, G81, Y161)


@pytest.fixture(scope="module")
def nonattain_dual():
    x = Grid(((-4, 4, 1601),))
    return CompositeProblem("x1", "0 if w1 <= 0 else inf", ["pow(x1,2)"], x, x, Grid(((-4, 4, 81),)),
                            Grid(((-4, 200, 2041),)))


@pytest.fixture(scope="module")
def nonattain_primal():
    x = Grid(((-4, 4, 801),))
    return CompositeProblem("exp(x1)", "w1", ["0"], x, x, Grid(((-4, 4, 81),)), Grid(((-4, 4, 81),)))


def test_lagrangian_values(ex51):
    assert float(lagrangian(ex51, [0, 0], [1, 0])) == pytest.approx(-2 / 3, abs=1e-9)
    assert float(lagrangian(ex51, [0, 0], [-8, 3])) == -np.inf


def test_f_star_values(nonattain_dual, nonattain_primal):
    assert float(f_star(nonattain_dual, [0], [1])) == pytest.approx(0.25, abs=1e-9)
    assert float(f_star(nonattain_dual, [1], [0])) == pytest.approx(0.0, abs=1e-9)
    assert float(f_star(nonattain_primal, [1], [1])) == pytest.approx(-1.0, abs=1e-9)


def test_f_star_direct_agrees_on_small_grid():
    g = Grid(((-2, 2, 9),))
    P = CompositeProblem("pow(x1,2)", "abs(w1)", ["x1"], g, g, g, g)
    for v, y in [(0.5, 0.5), (1.0, -0.5), (0.0, 1.0)]:
        assert float(f_star_direct(P, [v], [y])) == pytest.approx(float(f_star(P, [v], [y], "raw")), abs=1e-12)


def test_dual_nonattainment(nonattain_dual):
    r = weak_duality_report(nonattain_dual, [0], [0])
    assert float(r.p_val) == pytest.approx(0.0, abs=1e-12)
    assert r.P_set == [(0.0,)]
    assert abs(float(r.q_val)) <= 5e-2 and r.Q_set == []
    assert r.flags["weak_ok"] and not r.flags["dual_attained"] and r.flags["boundary_suspect"]
    assert "dual: flat-tail" in r.diagnostics
    p = primal_table(nonattain_dual, [0])
    u = nonattain_dual.u_grid.nodes()[:, 0]
    left = (u <= 0) & (u > -4)
    assert np.max(np.abs(p.values.ravel()[left] + np.sqrt(-u[left]))) <= 5e-2
    assert np.all(np.isposinf(p.values.ravel()[u > 0]))
    esc = subgradient_escape(nonattain_dual, [0], [0])
    assert esc["escaping"] and not np.isfinite(esc["axes"][0]["right"]["fine"])
    assert esc["axes"][0]["left"]["fine"] > esc["axes"][0]["left"]["coarse"]


def test_primal_nonattainment(nonattain_primal):
    pr = primal_value(nonattain_primal, [0], [0])
    assert not pr.attained and pr.diagnostic == "flat-tail"
    du = dual_value(nonattain_primal, [0], [0])
    assert du.attained and du.argmin == [(1.0,)]
    q = dual_table(nonattain_primal, [0])
    assert float(q.at([0])) == pytest.approx(float(du.value), abs=1e-9)


def test_optimality_conditions(ex52):
    oc = optimality_equivalence_check(ex52, [1, 0], [1, 0], [1, 0])
    assert oc.composite_holds and oc.split_holds and oc.equivalent and not oc.discrepancy
    assert max(oc.residuals.values()) <= 1e-12
    bad = optimality_equivalence_check(ex52, [1, 0], [0, 0], [1, 0])
    assert not bad.composite_holds and not bad.split_holds
    assert set(bad.to_json()) >= {"residuals", "composite_holds", "split_holds"}


def test_chain_rule(ex52):
    cr = chain_rule_sets(ex52, [0, 0])
    assert cr.inclusion_ok and cr.equality_holds and cr.equality_ok is None
    assert cr.lhs.points().tolist() == [[0.0, 0.0]]
    repaired = ex52.with_g("max(w1,0)")
    for x in ([0, 0], [1, 0], [-1, 0]):
        cr = chain_rule_sets(repaired, x, certified=True)
        assert cr.inclusion_ok and cr.equality_ok


def test_chain_rule_rejects_nonconvex():
    g = Grid(((-2, 2, 21),))
    P = CompositeProblem("0", "-pow(w1,2)", ["x1"], g, g, g, g)
    with pytest.raises(NotConvex):
        chain_rule_sets(P, [0])


def test_small_scan_and_identities():
    g = Grid(((-2, 2, 9),))
    P = CompositeProblem("pow(x1,2)/2", "abs(w1)", ["x1"], g, g, g, g)
    scan = optimality_scan(P)
    assert scan["triples"] == 9 ** 3 and scan["discrepancies"] == 0
    # the identity needs dom g + x-range inside the u-box
    Q = CompositeProblem("pow(x1,2)/2", "abs(w1) if w1>=-1 and w1<=1 else inf", ["x1"], g,
                         Grid(((-4, 4, 17),)), g, g)
    chk = value_conjugate_check(Q, [0.5])
    assert chk["compared_nodes"] > 0 and chk["max_abs_dev"] <= 1e-9
    assert joint_convexity(P)
    assert argmin_vs_subdifferential(P, [0.0], [0.0])["match"]


@st.composite
def grid_compatible(draw):
    """f0 convex, F linear with integer slope, g convex: values of F stay on the u-grid."""
    a = draw(st.integers(-2, 2))
    c = draw(st.floats(0.1, 1.5))
    k = draw(st.floats(0.0, 1.0))
    b = draw(st.sampled_from([-1.0, -0.5, 0.0, 0.5, 1.0]))
    return f"{c}*pow(x1,2)", f"{k}*abs(w1 - ({b})) + pow(w1,2)/4", [f"{a}*x1"]


@given(grid_compatible(), st.sampled_from([-1.0, 0.0, 0.5]), st.sampled_from([-0.5, 0.0, 1.0]))
def test_weak_duality_property(spec, v, u):
    f0, g, F = spec
    x = Grid(((-2, 2, 17),))
    ug = Grid(((-4, 4, 33),))
    P = CompositeProblem(f0, g, F, x, ug, Grid(((-2, 2, 9),)), Grid(((-4, 4, 33),)))
    r = weak_duality_report(P, [v], [u])
    assert r.flags["weak_ok"]
