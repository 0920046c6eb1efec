"""Uniform rectangular grids and extended-real functions sampled on them."""
from __future__ import annotations

import io
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import ArityMismatch, GridMismatch, MalformedExpr, NodeOutOfGrid
from .expr import FunctionExpr, as_expr
from .extreal import ExtReal, PLUS_INF

__all__ = [
    "Grid",
    "GridFn",
    "NodeSet",
    "sample",
    "grid_inf",
    "midpoint_violations",
    "is_discretely_convex",
    "interpolate",
    "to_csv",
    "from_csv",
]

MAX_DIM = 3
SNAP = 1e-9


@dataclass(frozen=True)
class Grid:
    """Tensor grid ``axes = ((lo, hi, count), ...)`` with ``p <= 3`` axes."""

    axes: tuple

    def __post_init__(self):
        axes = tuple((float(lo), float(hi), int(n)) for lo, hi, n in self.axes)
        if not 1 <= len(axes) <= MAX_DIM:
            raise GridMismatch(f"grid dimension must be 1..{MAX_DIM}, got {len(axes)}")
        for lo, hi, n in axes:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise GridMismatch(f"bad axis bounds [{lo}, {hi}]")
            if n < 2:
                raise GridMismatch("each axis needs at least 2 nodes")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def uniform(cls, lo: float, hi: float, count: int, dim: int = 1) -> "Grid":
        return cls(((lo, hi, count),) * dim)

    @classmethod
    def from_spec(cls, spec) -> "Grid":
        """Accept ``[lo, hi, n]``, ``[[lo, hi, n], ...]`` or a ``Grid``."""
        if isinstance(spec, Grid):
            return spec
        spec = list(spec)
        if spec and not isinstance(spec[0], (list, tuple)):
            spec = [spec]
        return cls(tuple(tuple(a) for a in spec))

    def to_spec(self) -> list:
        return [[lo, hi, n] for lo, hi, n in self.axes]

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(n for _, _, n in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / (n - 1) for lo, hi, n in self.axes])

    @property
    def lo(self) -> np.ndarray:
        return np.array([a[0] for a in self.axes])

    @property
    def hi(self) -> np.ndarray:
        return np.array([a[1] for a in self.axes])

    def axis_nodes(self, i: int) -> np.ndarray:
        lo, hi, n = self.axes[i]
        x = np.linspace(lo, hi, n)
        # exact zero where the axis straddles the origin
        x[np.abs(x) < 1e-12 * (hi - lo)] = 0.0
        return x

    def node(self, index: Sequence[int]) -> np.ndarray:
        return np.array([self.axis_nodes(i)[k] for i, k in enumerate(index)])

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*[self.axis_nodes(i) for i in range(self.dim)], indexing="ij")

    def nodes(self) -> np.ndarray:
        """All nodes as an ``(size, dim)`` array in row-major order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = -1
            mask[tuple(sl)] = True
        return mask

    def fractional_index(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dim:
            raise GridMismatch(f"points of dimension {points.shape[1]} on a {self.dim}-D grid")
        return (points - self.lo) / self.spacing

    def index_of(self, point, tol: float = 1e-7) -> tuple:
        """Multi-index of the node at ``point``; raise ``NodeOutOfGrid`` otherwise."""
        t = self.fractional_index(point)[0]
        k = np.rint(t)
        if np.any(np.abs(t - k) > tol) or np.any(k < 0) or np.any(k > np.array(self.shape) - 1):
            raise NodeOutOfGrid(f"{list(np.ravel(point))} is not a node of {self.to_spec()}")
        return tuple(int(i) for i in k)

    def nearest_index(self, point) -> tuple:
        t = self.fractional_index(point)[0]
        k = np.clip(np.rint(t), 0, np.array(self.shape) - 1)
        return tuple(int(i) for i in k)

    def contains(self, point, tol: float = 1e-9) -> bool:
        p = np.asarray(point, dtype=float)
        span = self.hi - self.lo
        return bool(np.all(p >= self.lo - tol * span) and np.all(p <= self.hi + tol * span))

    def flat_index(self, index) -> int:
        return int(np.ravel_multi_index(tuple(index), self.shape))

    def unravel(self, flat: int) -> tuple:
        return tuple(int(i) for i in np.unravel_index(int(flat), self.shape))

    def var_names(self, prefix: str) -> list[str]:
        return [f"{prefix}{i + 1}" for i in range(self.dim)]


@dataclass(frozen=True, eq=False)
class GridFn:
    """Extended-real values on a grid.

    ``flags`` marks per-node diagnostics produced by transforms:
    0 clean, 1 truncation-suspect (optimiser on the box boundary with a flat
    tail), 2 promoted to an infinite value because the optimiser kept
    improving at the box boundary.
    """

    grid: Grid
    values: np.ndarray
    flags: np.ndarray = field(default=None)
    name: str = ""

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.size != self.grid.size:
            raise GridMismatch(f"{vals.size} values for a grid of {self.grid.size} nodes")
        vals = vals.reshape(self.grid.shape)
        if np.isnan(vals).any():
            raise ValueError("GridFn values may not contain NaN")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        flags = np.zeros(self.grid.shape, dtype=np.uint8) if self.flags is None else np.asarray(
            self.flags, dtype=np.uint8).reshape(self.grid.shape).copy()
        flags.setflags(write=False)
        object.__setattr__(self, "flags", flags)

    @property
    def dom_mask(self) -> np.ndarray:
        return self.values < np.inf

    @property
    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def suspect_mask(self) -> np.ndarray:
        return self.flags != 0

    def at(self, point) -> ExtReal:
        return ExtReal(self.values[self.grid.index_of(point)])

    def at_index(self, index) -> ExtReal:
        return ExtReal(self.values[tuple(index)])

    def interp(self, points) -> np.ndarray:
        return interpolate(self.grid, self.values, points)

    def with_values(self, values, flags=None, name=None) -> "GridFn":
        return GridFn(self.grid, values, flags, self.name if name is None else name)


def sample(expr, grid: Grid, prefix: str | None = None) -> GridFn:
    """Evaluate ``expr`` at every node of ``grid``."""
    expr = as_expr(expr)
    prefixes = expr.prefixes()
    if prefix is None:
        if len(prefixes) > 1:
            raise ArityMismatch(f"{expr.source!r} mixes variable families {sorted(prefixes)}")
        prefix = next(iter(prefixes), "x")
    elif prefixes - {prefix}:
        raise ArityMismatch(f"{expr.source!r} uses {sorted(prefixes)}, expected {prefix!r}")
    if expr.max_index(prefix) > grid.dim:
        raise ArityMismatch(
            f"{expr.source!r} needs {expr.max_index(prefix)} variables on a {grid.dim}-D grid")
    env = dict(zip(grid.var_names(prefix), grid.mesh()))
    vals = expr.evaluate(env)
    return GridFn(grid, np.broadcast_to(vals, grid.shape), name=expr.source)


def grid_inf(h: GridFn, tol: float | None = None):
    """Minimum over the nodes and the list of finite minimisers (as coordinates)."""
    vals = h.values
    m = float(vals.min())
    if not np.isfinite(m):
        return ExtReal(m), []
    if tol is None:
        tol = 1e-9 * (1.0 + abs(m))
    idx = np.argwhere(vals <= m + tol)
    return ExtReal(m), [tuple(h.grid.node(i)) for i in idx]


def interpolate(grid: Grid, values: np.ndarray, points) -> np.ndarray:
    """Multilinear interpolation; a ``+inf`` corner with positive weight poisons
    the result and points outside the box evaluate to ``+inf``."""
    values = np.asarray(values, dtype=float).reshape(grid.shape)
    t = grid.fractional_index(points)
    n = np.array(grid.shape)
    outside = np.any((t < -SNAP) | (t > n - 1 + SNAP), axis=1)
    t = np.clip(t, 0, n - 1)
    base = np.floor(t).astype(int)
    base = np.minimum(base, n - 2)
    frac = t - base
    frac[np.abs(frac) < SNAP] = 0.0
    frac[np.abs(frac - 1) < SNAP] = 1.0
    out = np.zeros(len(t))
    plus = np.zeros(len(t), dtype=bool)
    minus = np.zeros(len(t), dtype=bool)
    for corner in itertools.product((0, 1), repeat=grid.dim):
        c = np.array(corner)
        w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
        idx = tuple((base[:, d] + c[d]) for d in range(grid.dim))
        v = values[idx]
        active = w > 0
        plus |= active & np.isposinf(v)
        minus |= active & np.isneginf(v)
        vv = np.where(np.isfinite(v), v, 0.0)
        out += np.where(active, w * vv, 0.0)
    out[minus] = -np.inf
    out[plus] = np.inf
    out[outside] = np.inf
    return out


def midpoint_violations(values: np.ndarray, tol: float = 1e-9, strides: Iterable[int] = (1,),
                        diagonals: bool = False, limit: int | None = None) -> list:
    """Index triples ``(a, b, mid)`` along grid lines violating
    ``h(mid) <= (h(a) + h(b)) / 2 + tol``.

    Pairs with an infinite endpoint impose nothing unless both endpoints are
    finite and the midpoint is ``+inf`` (non-convex effective domain).
    """
    v = np.asarray(values, dtype=float)
    p = v.ndim
    dirs = [tuple(1 if k == ax else 0 for k in range(p)) for ax in range(p)]
    if diagonals and p > 1:
        for combo in itertools.product((-1, 0, 1), repeat=p):
            nz = [c for c in combo if c]
            if len(nz) > 1 and next(c for c in combo if c) == 1:
                dirs.append(combo)
    out = []
    for d in dirs:
        for s in strides:
            step = np.array(d) * s
            lo_pad = np.maximum(step, 0)
            hi_pad = np.maximum(-step, 0)
            pad = lo_pad + hi_pad
            sl_mid = tuple(slice(pad[k], v.shape[k] - pad[k]) for k in range(p))
            sizes = [sl.stop - sl.start for sl in sl_mid]
            if any(sz <= 0 for sz in sizes):
                continue
            sl_a = tuple(slice(sl.start - step[k], sl.stop - step[k]) for k, sl in enumerate(sl_mid))
            sl_b = tuple(slice(sl.start + step[k], sl.stop + step[k]) for k, sl in enumerate(sl_mid))
            a, b, m = v[sl_a], v[sl_b], v[sl_mid]
            fin = np.isfinite(a) & np.isfinite(b)
            with np.errstate(invalid="ignore"):
                bound = 0.5 * (a + b)
                scale = tol * (1.0 + np.maximum(np.abs(a), np.abs(b)))
                bad = fin & ((m > bound + scale) | np.isposinf(m))
            for idx in np.argwhere(bad):
                mid = tuple(int(idx[k] + sl_mid[k].start) for k in range(p))
                ia = tuple(mid[k] - int(step[k]) for k in range(p))
                ib = tuple(mid[k] + int(step[k]) for k in range(p))
                out.append((ia, ib, mid))
                if limit is not None and len(out) >= limit:
                    return out
    return out


def domain_is_convex(grid: Grid, mask, tol: float = 1e-9) -> bool:
    """Every node in the convex hull of the ``mask`` nodes is itself in ``mask``.

    Gaps of any width are detected, unlike the local midpoint test.  The hull
    is taken inside the affine hull of the marked nodes, so lower-dimensional
    domains (a line in the plane) are handled.
    """
    from scipy.spatial import Delaunay, QhullError

    mask = np.asarray(mask, dtype=bool).ravel()
    P = grid.nodes()[mask]
    if len(P) <= 1:
        return True
    X = grid.nodes()
    c = P.mean(axis=0)
    _, s, vt = np.linalg.svd(P - c, full_matrices=False)
    scale = float(np.abs(grid.hi - grid.lo).max())
    r = int(np.sum(s > 1e-9 * max(1.0, s[0])))
    B = vt[:r]
    Q = (X - c) @ B.T
    resid = np.linalg.norm((X - c) - Q @ B, axis=1)
    cand = resid <= tol * (1.0 + scale)
    Pp = (P - c) @ B.T
    if r == 1:
        lo, hi = Pp.min(), Pp.max()
        eps = tol * (1.0 + scale)
        inside = cand & (Q[:, 0] >= lo - eps) & (Q[:, 0] <= hi + eps)
    else:
        try:
            tri = Delaunay(Pp)
        except QhullError:  # pragma: no cover - rank estimate disagrees with qhull
            return True
        inside = np.zeros(len(X), dtype=bool)
        idx = np.flatnonzero(cand)
        inside[idx] = tri.find_simplex(Q[idx], tol=tol * (1.0 + scale)) >= 0
    return bool(np.all(mask[inside]))


def is_discretely_convex(h, tol: float = 1e-9, **kw) -> bool:
    values = h.values if isinstance(h, GridFn) else h
    return not midpoint_violations(values, tol, limit=1, **kw)


def to_csv(h: GridFn) -> str:
    """Serialise to the CSV grid-dump format (bit-exact round trip)."""
    buf = io.StringIO()
    for i, (lo, hi, n) in enumerate(h.grid.axes):
        buf.write(f"axis_{i}_lo,axis_{i}_hi,axis_{i}_count\n")
        buf.write(f"{lo!r},{hi!r},{n}\n")
    buf.write("value\n")
    for x in h.values.ravel():
        buf.write(("inf" if x > 0 else "-inf") if not np.isfinite(x) else repr(float(x)))
        buf.write("\n")
    return buf.getvalue()


def from_csv(text: str) -> GridFn:
    lines = [ln.strip() for ln in text.strip().splitlines()]
    axes = []
    i = 0
    while i < len(lines) and lines[i].startswith("axis_"):
        try:
            lo, hi, n = lines[i + 1].split(",")
            axes.append((float(lo), float(hi), int(n)))
        except (ValueError, IndexError) as exc:
            raise MalformedExpr(f"bad axis header near line {i + 2}: {exc}") from exc
        i += 2
    if i >= len(lines) or lines[i] != "value":
        raise MalformedExpr("missing 'value' header")
    vals = np.array([float(s) for s in lines[i + 1:]])
    return GridFn(Grid(tuple(axes)), vals)


@dataclass(frozen=True, eq=False)
class NodeSet:
    """A subset of the nodes of a grid, stored as a boolean mask."""

    grid: Grid
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool).reshape(self.grid.shape).copy()
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @classmethod
    def from_points(cls, grid: Grid, points) -> "NodeSet":
        mask = np.zeros(grid.shape, dtype=bool)
        for pt in points:
            mask[grid.index_of(pt)] = True
        return cls(grid, mask)

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __bool__(self) -> bool:
        return bool(self.mask.any())

    def __contains__(self, point) -> bool:
        try:
            return bool(self.mask[self.grid.index_of(point)])
        except NodeOutOfGrid:
            return False

    def indices(self) -> np.ndarray:
        return np.argwhere(self.mask)

    def points(self) -> np.ndarray:
        idx = self.indices()
        if idx.size == 0:
            return np.zeros((0, self.grid.dim))
        return np.stack([self.grid.axis_nodes(k)[idx[:, k]] for k in range(self.grid.dim)], axis=1)

    def dilate(self, k: int = 1) -> "NodeSet":
        """Grow by ``k`` nodes in the sup-norm index metric."""
        if k <= 0 or not self.mask.any():
            return self
        struct = np.ones((3,) * self.grid.dim, dtype=bool)
        return NodeSet(self.grid, ndimage.binary_dilation(self.mask, struct, iterations=k))

    def issubset(self, other: "NodeSet", dilation: int = 0) -> bool:
        if other.grid != self.grid:
            raise GridMismatch("node sets live on different grids")
        target = other.dilate(dilation).mask if dilation else other.mask
        return bool(np.all(~self.mask | target))

    def same_as(self, other: "NodeSet", dilation: int = 1) -> bool:
        return self.issubset(other, dilation) and other.issubset(self, dilation)

    def bounds(self):
        """Per-axis (min, max) coordinates, or None when empty."""
        pts = self.points()
        if len(pts) == 0:
            return None
        return pts.min(axis=0), pts.max(axis=0)
