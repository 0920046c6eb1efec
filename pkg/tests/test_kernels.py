"""The numba and numpy kernels compute the same thing."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from compconj import _backend, kernels
from compconj.grid import Grid

pytestmark = pytest.mark.skipif(not _backend.HAVE_NUMBA, reason="numba not installed")

vals = st.one_of(st.floats(-50, 50), st.just(np.inf))


def both(fn):
    with _backend.use_backend("numpy"):
        a = fn()
    with _backend.use_backend("numba"):
        b = fn()
    return a, b


@given(arrays(np.float64, (3, 25), elements=vals), st.integers(2, 30))
def test_conj_lines_agree(h, nv):
    x = np.linspace(-2, 2, 25)
    v = np.linspace(-3, 3, nv)
    (a, ia), (b, ib) = both(lambda: kernels.conj_lines(h, x, v))
    np.testing.assert_allclose(a, b, atol=1e-9)
    fin = np.isfinite(a)
    # argmax positions may differ on ties, the attained values may not
    ra = np.where(fin, v[None, :] * x[np.maximum(ia, 0)] - np.take_along_axis(h, np.maximum(ia, 0), 1), 0)
    rb = np.where(fin, v[None, :] * x[np.maximum(ib, 0)] - np.take_along_axis(h, np.maximum(ib, 0), 1), 0)
    np.testing.assert_allclose(ra, rb, atol=1e-9)


@given(arrays(np.float64, 36, elements=vals))
def test_conj_brute_agree(h):
    X = Grid(((-1, 1, 6), (-1, 1, 6))).nodes()
    V = Grid(((-2, 2, 5), (-2, 2, 5))).nodes()
    (a, _), (b, _) = both(lambda: kernels.conj_brute(h, X, V))
    np.testing.assert_allclose(a, b, atol=1e-12)


@given(arrays(np.float64, 11, elements=vals), arrays(np.float64, 21, elements=vals))
def test_inf_conv_agree(h1, h2):
    g1 = Grid(((-1, 1, 11),))
    g2 = Grid(((-2, 2, 21),))
    Z = W = g1.nodes()
    (a, _), (b, _) = both(lambda: kernels.inf_conv(h1, Z, W, h2, g2.lo, g2.spacing, g2.shape))
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_env_flag_selects_backend(monkeypatch):
    import importlib
    monkeypatch.setenv("COMPCONJ_BACKEND", "numpy")
    assert _backend._initial() == "numpy"
    monkeypatch.setenv("COMPCONJ_BACKEND", "bogus")
    with pytest.raises(ValueError):
        _backend._initial()
    monkeypatch.delenv("COMPCONJ_BACKEND")
    assert _backend._initial() == "numba"
    assert importlib.import_module("compconj.kernels").impl() in (kernels._numba, kernels._numpy)
    with pytest.raises(ValueError):
        _backend.set_backend("cuda")
