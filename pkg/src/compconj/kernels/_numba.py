"""numba kernels: linear-time per-line conjugate, brute-force conjugate and
infimal convolution with multilinear interpolation."""
import numpy as np
from numba import njit, prange

SNAP = 1e-9


@njit(cache=True)
def _line_conj(h, x, v, out_val, out_idx, hull):
    n = h.shape[0]
    nv = v.shape[0]
    nh = 0
    for i in range(n):
        if h[i] == -np.inf:
            for j in range(nv):
                out_val[j] = np.inf
                out_idx[j] = i
            return
    # lower convex hull of the finite points (monotone chain, x ascending)
    for i in range(n):
        if h[i] == np.inf:
            continue
        while nh >= 2:
            a = hull[nh - 2]
            b = hull[nh - 1]
            cross = (x[b] - x[a]) * (h[i] - h[a]) - (h[b] - h[a]) * (x[i] - x[a])
            if cross <= 0.0:
                nh -= 1
            else:
                break
        hull[nh] = i
        nh += 1
    if nh == 0:
        for j in range(nv):
            out_val[j] = -np.inf
            out_idx[j] = -1
        return
    k = 0
    for j in range(nv):
        vj = v[j]
        while k + 1 < nh and vj * x[hull[k + 1]] - h[hull[k + 1]] > vj * x[hull[k]] - h[hull[k]]:
            k += 1
        # v need not be sorted: walk back when it decreases
        while k > 0 and vj * x[hull[k - 1]] - h[hull[k - 1]] >= vj * x[hull[k]] - h[hull[k]]:
            k -= 1
        out_val[j] = vj * x[hull[k]] - h[hull[k]]
        out_idx[j] = hull[k]


@njit(parallel=True, cache=True)
def conj_lines(h, x, v):
    L = h.shape[0]
    nx = h.shape[1]
    nv = v.shape[0]
    vals = np.empty((L, nv))
    idx = np.empty((L, nv), dtype=np.int64)
    for r in prange(L):
        hull = np.empty(nx, dtype=np.int64)
        _line_conj(h[r], x, v, vals[r], idx[r], hull)
    return vals, idx


@njit(parallel=True, cache=True)
def conj_brute(h, X, V):
    n = X.shape[0]
    p = X.shape[1]
    m = V.shape[0]
    vals = np.empty(m)
    idx = np.empty(m, dtype=np.int64)
    for j in prange(m):
        best = -np.inf
        bi = -1
        for i in range(n):
            hi = h[i]
            if hi == np.inf:
                continue
            if hi == -np.inf:
                best = np.inf
                bi = i
                break
            s = -hi
            for k in range(p):
                s += V[j, k] * X[i, k]
            if s > best:
                best = s
                bi = i
        vals[j] = best
        idx[j] = bi
    return vals, idx


@njit(cache=True)
def _interp(d, values, lo, step, shape, base, frac):
    # base and frac are caller-owned scratch buffers of length p
    p = d.shape[0]
    for k in range(p):
        t = (d[k] - lo[k]) / step[k]
        n = shape[k]
        if t < -SNAP or t > n - 1 + SNAP:
            return np.inf
        if t < 0.0:
            t = 0.0
        if t > n - 1:
            t = n - 1.0
        b = int(np.floor(t))
        if b > n - 2:
            b = n - 2
        f = t - b
        if abs(f) < SNAP:
            f = 0.0
        elif abs(f - 1.0) < SNAP:
            f = 1.0
        base[k] = b
        frac[k] = f
    acc = 0.0
    minus = False
    for c in range(1 << p):
        w = 1.0
        flat = 0
        for k in range(p):
            bit = (c >> k) & 1
            w *= frac[k] if bit else 1.0 - frac[k]
            flat = flat * shape[k] + base[k] + bit
        if w <= 0.0:
            continue
        val = values[flat]
        if val == np.inf:
            return np.inf
        if val == -np.inf:
            minus = True
        else:
            acc += w * val
    if minus:
        return -np.inf
    return acc


@njit(parallel=True, cache=True)
def inf_conv(h1, Z, W, h2, lo2, step2, shape2):
    n = Z.shape[0]
    p = Z.shape[1]
    m = W.shape[0]
    vals = np.empty(m)
    idx = np.empty(m, dtype=np.int64)
    for j in prange(m):
        d = np.empty(p)
        base = np.empty(p, dtype=np.int64)
        frac = np.empty(p)
        best = np.inf
        bi = -1
        for i in range(n):
            a = h1[i]
            if a == np.inf:
                continue
            for k in range(p):
                d[k] = W[j, k] - Z[i, k]
            b = _interp(d, h2, lo2, step2, shape2, base, frac)
            if b == np.inf:
                continue
            s = a + b
            if s < best:
                best = s
                bi = i
        vals[j] = best
        idx[j] = bi
    return vals, idx
