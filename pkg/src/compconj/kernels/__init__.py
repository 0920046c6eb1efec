"""Dispatch to the numba or numpy kernel implementation.

All kernels take and return contiguous float64/int64 arrays:

``conj_lines(h, x, v)``
    ``h`` is ``(L, nx)``; returns ``(vals, idx)`` of shape ``(L, nv)`` with
    ``vals[r, j] = max_i v[j] * x[i] - h[r, i]`` and its argmax.
``conj_brute(h, X, V)``
    Full sup over all ``n`` points for each of the ``m`` dual points.
``inf_conv(h1, Z, W, h2, lo2, step2, shape2)``
    ``min_i h1[i] + h2(W[j] - Z[i])`` with ``h2`` a flat grid array
    interpolated multilinearly.
"""
import numpy as np

from .. import _backend
from . import _numpy

if _backend.HAVE_NUMBA:
    from . import _numba
else:  # pragma: no cover
    _numba = None

__all__ = ["conj_lines", "conj_brute", "inf_conv", "impl"]


def impl():
    return _numba if _backend.get_backend() == "numba" else _numpy


def _f(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conj_lines(h, x, v):
    return impl().conj_lines(_f(np.atleast_2d(h)), _f(x), _f(v))


def conj_brute(h, X, V):
    return impl().conj_brute(_f(h), _f(X), _f(V))


def inf_conv(h1, Z, W, h2, lo2, step2, shape2):
    return impl().inf_conv(_f(h1), _f(Z), _f(W), _f(h2), _f(lo2), _f(step2),
                           np.ascontiguousarray(shape2, dtype=np.int64))
