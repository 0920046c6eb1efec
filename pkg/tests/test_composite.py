import numpy as np
import pytest

from compconj.composite import CompositeProblem, VecMap
from compconj.cones import Cone
from compconj.conjugate import conjugate
from compconj.errors import DimensionMismatch, ScenarioError
from compconj.grid import Grid

G1 = Grid(((-4, 4, 81),))
G2 = Grid(((-4, 4, 41), (-4, 4, 41)))
Y2 = Grid(((-4, 4, 41), (-4, 4, 41)))


def prob52(g="abs(w1)"):
    return CompositeProblem("0", g, ["pow(x1,2)/2", "x2"], G2, G2, G2, Y2)


def test_vecmap_guard_and_dims():
    F = VecMap(["x1", "0"], guard="x1 >= 0")
    assert F.n == 1 and F.m == 2 and F.has_guard
    vals, dom = F.evaluate(np.array([[-1.0], [2.0]]))
    assert list(dom) == [False, True] and vals[1].tolist() == [2.0, 0.0]
    with pytest.raises(ScenarioError):
        VecMap([])
    with pytest.raises(ScenarioError):
        VecMap(["w1"])
    with pytest.raises(DimensionMismatch):
        VecMap(["x2"], n=1)
    assert VecMap.parse(F.to_json()).guard_source == "x1 >= 0"


def test_problem_validation():
    with pytest.raises(DimensionMismatch):
        CompositeProblem("0", "w1", ["x1"], G1, G2, G1, G1)
    with pytest.raises(ScenarioError):
        CompositeProblem("0", "x1", ["x1"], G1, G1, G1, G1)
    with pytest.raises(ScenarioError):
        CompositeProblem("inf", "w1", ["x1"], G1, G1, G1, G1)


def test_scalarize_and_composite():
    P = prob52()
    s = P.scalarize([2.0, -1.0])
    x = G2.nodes()
    np.testing.assert_allclose(s.values.ravel(), x[:, 0] ** 2 - x[:, 1])
    np.testing.assert_allclose(P.composite_fn().values.ravel(), x[:, 0] ** 2 / 2)
    with pytest.raises(DimensionMismatch):
        P.scalarize([1.0])


def test_rho_matches_closed_form(backend):
    P = prob52()
    rho = P.rho_table().values
    v = G2.nodes()
    inner = (np.abs(v[:, 0]) < 3.5) & (v[:, 1] == 0)
    np.testing.assert_allclose(rho.values.ravel()[inner], v[inner, 0] ** 2 / 2, atol=1e-9)
    off = (np.abs(v[:, 1]) > 0.5) & (np.abs(v[:, 0]) < 3.5)
    assert np.all(np.isposinf(rho.values.ravel()[off]))
    pt = P.rho([1.0, 0.0])
    assert float(pt.value) == pytest.approx(0.5) and (1.0, 0.0) in pt.minimizers


def test_conjugate_below_rho_and_eta_above(backend):
    P = prob52()
    cc = conjugate(P.composite_fn(), P.cfg(P.v_grid)).values
    rho = P.rho_table().values.values
    eta = P.eta_table(Cone.parse("R+xR")).values.values
    fin = np.isfinite(cc) & np.isfinite(rho)
    assert np.all(cc[fin] <= rho[fin] + 1e-9)
    assert np.all(eta >= rho - 1e-9)


def test_rho_tilde_point(backend):
    P = CompositeProblem("pow(x1,2)/2", "abs(w1)", ["x1"], G1, G1, G1, G1)
    # (x^2/2 + |x|)* = (max(|v| - 1, 0))^2 / 2
    for v in (0.0, 2.0, -3.0):
        want = max(abs(v) - 1, 0) ** 2 / 2
        assert float(P.rho(v).value) == pytest.approx(want, abs=1e-9)
        assert float(P.rho_tilde(v).value) == pytest.approx(want, abs=1e-6)
    tab = P.rho_tilde_table()
    assert float(tab.at([2.0])) == pytest.approx(0.5, abs=1e-6)


def test_rho_tilde_table_matches_pointwise(backend):
    g = Grid(((-2, 2, 9), (-2, 2, 9)))
    P = CompositeProblem("pow(x1,2) + abs(x2)", "abs(w1) + pow(w2,2)", ["x1 + x2", "x2"], g, g, g, g)
    tab = P.rho_tilde_table()
    for v in ([0.0, 0.0], [1.0, -0.5], [-2.0, 1.5]):
        assert float(tab.at(v)) == pytest.approx(float(P.rho_tilde(v).value), abs=1e-9)
    rho = P.rho_table().values.values
    assert np.all(rho <= tab.values + 1e-9)


def test_perturbation_slices():
    P = prob52()
    pert = P.perturbation()
    s = pert.slice_u([0.0, 0.0])
    np.testing.assert_allclose(s.values, P.composite_fn().values)
    t = pert.slice_x([1.0, 0.0])
    assert float(t.at([0.4, 0.0])) == pytest.approx(0.9)
    full = CompositeProblem("0", "abs(w1)", ["x1"], Grid(((-1, 1, 5),)), Grid(((-1, 1, 3),)), G1, G1)
    assert full.perturbation().full().shape == (5, 3)


def test_u_set_exact_and_sampled():
    P = CompositeProblem("0", "pow(w1,3)/3 if w1>=0 else inf", ["0", "x2"], G2, G2, G2, Y2,
                         flags={"polyhedral_domg": True, "polyhedral_F": True},
                         sets={"dom_g": {"points": [[0, 0]], "rays": [[1, 0], [0, 1], [0, -1]]},
                               "F_image": {"points": [[0, 0]], "rays": [[0, 1], [0, -1]]}})
    U = P.u_set()
    assert U.exactness == "Exact-VRep"
    assert U.vrep is not None
    UK = P.u_set(Cone.parse("R+x0"))
    from compconj.qual import contains_rint
    assert contains_rint(UK.vrep, [0, 0]) and not contains_rint(U.vrep, [0, 0])
    assert P.with_g("0").u_set().exactness == "Exact-VRep"
