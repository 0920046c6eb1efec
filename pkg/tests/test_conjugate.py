"""Discrete conjugates against closed forms and independent brute-force sups."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from compconj.conjugate import (TransformConfig, biconjugate, conjugate, conjugate_with_argmax,
                                default_tol_fenchel, fenchel_gap, inf_convolution, subdifferential)
from compconj.grid import Grid, GridFn, sample

X1 = Grid(((-4, 4, 161),))
V1 = Grid(((-3, 3, 61),))
X2 = Grid(((-3, 3, 41), (-3, 3, 41)))
V2 = Grid(((-2, 2, 21), (-2, 2, 21)))


def brute(h: GridFn, dual: Grid) -> np.ndarray:
    """Independent oracle: plain double loop over the primal nodes."""
    X = h.grid.nodes()
    f = h.values.ravel()
    fin = np.isfinite(f)
    return np.array([np.max(X[fin] @ v - f[fin]) if fin.any() else -np.inf for v in dual.nodes()])


@pytest.mark.parametrize("method", ["FastLLT", "BruteForce"])
def test_quadratic_is_self_conjugate(backend, method):
    h = sample("pow(x1,2)/2", X1)
    out = conjugate(h, TransformConfig(V1, method=method))
    np.testing.assert_allclose(out.values, V1.nodes()[:, 0] ** 2 / 2, atol=1e-3)


def test_abs_gives_indicator(backend):
    out = conjugate(sample("abs(x1)", X1), TransformConfig(V1))
    v = V1.nodes()[:, 0]
    inside = np.abs(v) <= 1 + 1e-9
    np.testing.assert_allclose(out.values[inside], 0.0, atol=1e-12)
    assert np.all(np.isposinf(out.values[np.abs(v) > 1.2]))
    assert np.all(out.flags[np.abs(v) > 1.2] == 2)


def test_oblique_domain_is_not_promoted(backend):
    # indicator of the band |x1 + x2| <= 1: h*(t, t) = |t| and +inf off the diagonal
    h = sample("0 if x1 + x2 <= 1 and x1 + x2 >= -1 else inf", Grid(((-2, 2, 41), (-2, 2, 41))))
    out = conjugate(h, TransformConfig(V2))
    V = V2.nodes()
    diag = np.isclose(V[:, 0], V[:, 1])
    vals, flags = out.values.ravel(), out.flags.ravel()
    np.testing.assert_allclose(vals[diag], np.abs(V[diag, 0]), atol=1e-9)
    assert np.all(flags[diag] != 2)
    far = np.abs(V[:, 0] - V[:, 1]) > 0.5
    assert np.all(np.isposinf(vals[far]))


def test_raw_policy_is_plain_sup(backend):
    h = sample("abs(x1)", X1)
    raw = conjugate(h, TransformConfig(V1, boundary="raw"))
    np.testing.assert_allclose(raw.values.ravel(), brute(h, V1), atol=1e-12)


def test_exp_conjugate_frozen_values(backend):
    # v log v - v at v = 1, 2 (independent closed form)
    h = sample("exp(x1)", Grid(((-8, 3, 2201),)))
    out = conjugate(h, TransformConfig(Grid(((0.5, 2.0, 4),))))
    np.testing.assert_allclose(out.values, [0.5 * np.log(0.5) - 0.5, -1.0, 1.5 * np.log(1.5) - 1.5,
                                            2 * np.log(2) - 2], atol=1e-5)


def test_two_dimensional_matches_brute(backend):
    h = sample("pow(x1,2) + abs(x2 - 1) + x1*x2/4", X2)
    fast = conjugate(h, TransformConfig(V2, method="FastLLT", boundary="raw"))
    slow = conjugate(h, TransformConfig(V2, method="BruteForce", boundary="raw"))
    ref = brute(h, V2)
    np.testing.assert_allclose(fast.values.ravel(), ref, atol=1e-9)
    np.testing.assert_allclose(slow.values.ravel(), ref, atol=1e-9)


def test_argmax_and_gap(backend):
    h = sample("pow(x1,2)/2", X1)
    out, arg = conjugate_with_argmax(h, TransformConfig(V1))
    j = V1.index_of([1.0])
    assert X1.nodes()[arg.ravel()[j]][0] == pytest.approx(1.0)
    assert float(fenchel_gap(h, out, [1.0], [1.0])) == pytest.approx(0.0, abs=1e-9)
    assert float(fenchel_gap(h, out, [0.0], [1.0])) == pytest.approx(0.5, abs=1e-9)


def test_subdifferential_of_abs_at_zero(backend):
    h = sample("abs(x1)", X1)
    hs = conjugate(h, TransformConfig(V1))
    S = subdifferential(h, hs, [0.0])
    lo, hi = S.bounds()
    assert lo[0] == pytest.approx(-1.0) and hi[0] == pytest.approx(1.0)
    assert len(subdifferential(h, hs, [2.0])) == 1


def test_biconjugate_is_convex_hull(backend):
    h = sample("min(pow(x1-1,2), pow(x1+1,2))", X1)
    hh = biconjugate(h, TransformConfig(Grid(((-10, 10, 401),))))
    mid = np.abs(X1.nodes()[:, 0]) <= 1
    assert np.all(hh.values.ravel() <= h.values.ravel() + 1e-9)
    np.testing.assert_allclose(hh.values.ravel()[mid], 0.0, atol=0.03)


def test_inf_convolution_is_huber(backend):
    # |x| box (1/2)x^2 is the Huber function
    g = Grid(((-4, 4, 161),))
    out, arg = inf_convolution(sample("abs(x1)", g), sample("pow(x1,2)/2", Grid(((-8, 8, 321),))),
                               return_argmin=True)
    x = g.nodes()[:, 0]
    huber = np.where(np.abs(x) <= 1, x ** 2 / 2, np.abs(x) - 0.5)
    np.testing.assert_allclose(out.values, huber, atol=1e-9)
    assert arg.shape == (g.size,)


def test_default_tol_is_positive():
    assert default_tol_fenchel(sample("pow(x1,2)", X1), V1) > 0


coef = st.floats(-2, 2, allow_nan=False)


@st.composite
def convex_1d(draw):
    a = draw(st.floats(0.05, 2))
    b, c = draw(coef), draw(coef)
    k = draw(st.floats(0, 1.5))
    return f"{a}*pow(x1 - ({b}),2) + {k}*abs(x1 - ({c}))"


@given(convex_1d())
def test_fenchel_young_everywhere(src):
    h = sample(src, X1)
    hs = conjugate(h, TransformConfig(V1, boundary="raw"))
    lhs = h.values.ravel()[:, None] + hs.values.ravel()[None, :]
    xv = X1.nodes()[:, 0][:, None] * V1.nodes()[:, 0][None, :]
    assert np.all(lhs >= xv - 1e-9)


@given(convex_1d())
def test_biconjugate_below_and_idempotent(src):
    h = sample(src, X1)
    cfg = TransformConfig(Grid(((-30, 30, 601),)), boundary="raw")
    back = TransformConfig(X1, boundary="raw")
    hs = conjugate(h, cfg)
    hh = conjugate(hs, back)
    assert np.all(hh.values <= h.values + 1e-9)
    hhs = conjugate(hh, cfg)
    np.testing.assert_allclose(hhs.values, hs.values, atol=1e-9)


@given(convex_1d())
def test_fast_matches_brute(src):
    h = sample(src, X1)
    a = conjugate(h, TransformConfig(V1, method="FastLLT"))
    b = conjugate(h, TransformConfig(V1, method="BruteForce"))
    fin = np.isfinite(a.values) & np.isfinite(b.values)
    assert np.array_equal(np.isfinite(a.values), np.isfinite(b.values))
    assert np.max(np.abs(a.values[fin] - b.values[fin])) <= default_tol_fenchel(h, V1)
