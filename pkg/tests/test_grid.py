import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from compconj.errors import ArityMismatch, GridMismatch, MalformedExpr, NodeOutOfGrid
from compconj.grid import (Grid, GridFn, NodeSet, from_csv, grid_inf, interpolate, is_discretely_convex,
                           midpoint_violations, sample, to_csv)


def test_grid_basics():
    g = Grid(((-1, 1, 5), (0, 2, 3)))
    assert g.dim == 2 and g.shape == (5, 3) and g.size == 15
    np.testing.assert_allclose(g.spacing, [0.5, 1.0])
    assert g.nodes().shape == (15, 2)
    assert g.index_of([0.5, 1.0]) == (3, 1)
    assert g.unravel(g.flat_index((3, 1))) == (3, 1)
    assert g.boundary_mask().sum() == 15 - 3
    assert Grid.from_spec([-1, 1, 5]).to_spec() == [[-1.0, 1.0, 5]]


@pytest.mark.parametrize("axes", [(), ((0, 1, 1),), ((1, 0, 3),), ((0, 1, 2),) * 4])
def test_grid_rejects(axes):
    with pytest.raises(GridMismatch):
        Grid(axes)


def test_index_of_off_grid():
    with pytest.raises(NodeOutOfGrid):
        Grid(((0, 1, 3),)).index_of([0.3])


def test_sample_and_inf():
    g = Grid(((-2, 2, 5),))
    h = sample("pow(x1,2) + 1", g)
    v, arg = grid_inf(h)
    assert v == 1.0 and arg == [(0.0,)]
    with pytest.raises(ArityMismatch):
        sample("x2", g)
    assert grid_inf(sample("inf", g))[1] == []


def test_gridfn_rejects_nan_and_wrong_size():
    g = Grid(((0, 1, 3),))
    with pytest.raises(ValueError):
        GridFn(g, [0.0, np.nan, 1.0])
    with pytest.raises(GridMismatch):
        GridFn(g, [0.0, 1.0])


def test_interpolation_rules():
    g = Grid(((0, 2, 3),))
    vals = np.array([0.0, 1.0, np.inf])
    out = interpolate(g, vals, np.array([[0.5], [1.0], [1.5], [3.0]]))
    np.testing.assert_allclose(out[:2], [0.5, 1.0])
    assert out[2] == np.inf and out[3] == np.inf


def test_midpoint_violations():
    g = Grid(((-2, 2, 9),))
    assert is_discretely_convex(sample("abs(x1)", g))
    bad = midpoint_violations(sample("-pow(x1,2)", g).values, limit=1)
    assert len(bad) == 1
    # nonconvex domain: finite ends, +inf in the middle
    assert midpoint_violations(sample("inf if x1 == 0 else 0", g).values)


def test_nodeset_ops():
    g = Grid(((0, 4, 5), (0, 4, 5)))
    A = NodeSet.from_points(g, [[2, 2]])
    B = NodeSet.from_points(g, [[3, 3]])
    assert len(A) == 1 and [2, 2] in A and [9, 9] not in A
    assert not A.issubset(B) and A.issubset(B, dilation=1)
    assert A.same_as(B, 1) and len(A.dilate(1)) == 9
    lo, hi = A.bounds()
    np.testing.assert_allclose(lo, [2, 2])


def test_csv_errors():
    with pytest.raises(MalformedExpr):
        from_csv("axis_0_lo,axis_0_hi,axis_0_count\n0,1\nvalue\n")


@given(st.lists(st.one_of(st.floats(-1e9, 1e9), st.sampled_from([np.inf, -np.inf])), min_size=6, max_size=6))
def test_csv_round_trip_is_bit_exact(vals):
    g = Grid(((-1.3, 2.7, 3), (0.1, 0.2, 2)))
    h = GridFn(g, vals)
    back = from_csv(to_csv(h))
    assert back.grid == g
    np.testing.assert_array_equal(back.values, h.values)


def test_domain_convexity_detects_wide_gaps():
    from compconj.grid import domain_is_convex
    g = Grid(((-2, 2, 9),))
    x = g.nodes()[:, 0]
    assert domain_is_convex(g, x >= 0)
    assert not domain_is_convex(g, np.abs(x) >= 1)
    g2 = Grid(((-2, 2, 9), (-2, 2, 9)))
    X = g2.nodes()
    assert domain_is_convex(g2, X[:, 0] + X[:, 1] <= 0.5)
    assert domain_is_convex(g2, X[:, 0] == 0.5)
    assert not domain_is_convex(g2, (X[:, 0] == 0.5) & (np.abs(X[:, 1]) >= 1))
    assert not domain_is_convex(g2, np.hypot(X[:, 0], X[:, 1]) >= 1)
