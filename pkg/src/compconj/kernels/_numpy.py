"""Pure-numpy kernels with the same signatures as the numba ones.

The per-line conjugate is a dense max over the line (exact, since the sup
over a product box can be taken one axis at a time)."""
import numpy as np

SNAP = 1e-9
_CHUNK = 1 << 22


def conj_lines(h, x, v):
    L, nx = h.shape
    nv = v.shape[0]
    vals = np.empty((L, nv))
    idx = np.empty((L, nv), dtype=np.int64)
    step = max(1, _CHUNK // max(1, nx * nv))
    vx = v[:, None] * x[None, :]
    for s in range(0, L, step):
        blk = h[s:s + step]
        with np.errstate(invalid="ignore"):
            obj = vx[None, :, :] - blk[:, None, :]
        k = np.argmax(obj, axis=2)
        vals[s:s + step] = np.take_along_axis(obj, k[:, :, None], axis=2)[:, :, 0]
        idx[s:s + step] = k
    allinf = np.all(h == np.inf, axis=1)
    vals[allinf] = -np.inf
    idx[allinf] = -1
    return vals, idx


def conj_brute(h, X, V):
    n = X.shape[0]
    m = V.shape[0]
    vals = np.empty(m)
    idx = np.empty(m, dtype=np.int64)
    if np.any(h == -np.inf):
        vals[:] = np.inf
        idx[:] = int(np.argmax(h == -np.inf))
        return vals, idx
    keep = np.flatnonzero(h < np.inf)
    if keep.size == 0:
        vals[:] = -np.inf
        idx[:] = -1
        return vals, idx
    Xk, hk = X[keep], h[keep]
    step = max(1, _CHUNK // max(1, keep.size))
    for s in range(0, m, step):
        obj = V[s:s + step] @ Xk.T - hk[None, :]
        k = np.argmax(obj, axis=1)
        vals[s:s + step] = obj[np.arange(len(k)), k]
        idx[s:s + step] = keep[k]
    return vals, idx


def _interp(d, values, lo, step, shape):
    """Vectorised multilinear interpolation of a flat value array."""
    n = np.asarray(shape)
    p = d.shape[1]
    t = (d - lo) / step
    outside = np.any((t < -SNAP) | (t > n - 1 + SNAP), axis=1)
    t = np.clip(t, 0, n - 1)
    base = np.minimum(np.floor(t).astype(np.int64), n - 2)
    frac = t - base
    frac[np.abs(frac) < SNAP] = 0.0
    frac[np.abs(frac - 1.0) < SNAP] = 1.0
    out = np.zeros(len(d))
    plus = outside.copy()
    minus = np.zeros(len(d), dtype=bool)
    for c in range(1 << p):
        bits = np.array([(c >> k) & 1 for k in range(p)])
        w = np.prod(np.where(bits == 1, frac, 1.0 - frac), axis=1)
        flat = np.zeros(len(d), dtype=np.int64)
        for k in range(p):
            flat = flat * n[k] + base[:, k] + bits[k]
        val = values[flat]
        act = w > 0
        plus |= act & (val == np.inf)
        minus |= act & (val == -np.inf)
        out += np.where(act & np.isfinite(val), w * np.where(np.isfinite(val), val, 0.0), 0.0)
    out[minus] = -np.inf
    out[plus] = np.inf
    return out


def inf_conv(h1, Z, W, h2, lo2, step2, shape2):
    m = W.shape[0]
    vals = np.full(m, np.inf)
    idx = np.full(m, -1, dtype=np.int64)
    keep = np.flatnonzero(h1 < np.inf)
    if keep.size == 0:
        return vals, idx
    Zk, hk = Z[keep], h1[keep]
    step = max(1, _CHUNK // (4 * keep.size))
    for s in range(0, m, step):
        Wb = W[s:s + step]
        d = (Wb[:, None, :] - Zk[None, :, :]).reshape(-1, Z.shape[1])
        b = _interp(d, h2, lo2, step2, shape2).reshape(len(Wb), keep.size)
        with np.errstate(invalid="ignore"):
            tot = hk[None, :] + b
        tot[b == np.inf] = np.inf
        k = np.argmin(tot, axis=1)
        best = tot[np.arange(len(k)), k]
        vals[s:s + step] = best
        idx[s:s + step] = np.where(best < np.inf, keep[k], -1)
    return vals, idx
