"""Discrete Legendre-Fenchel transform and related operations on grids.

The conjugate of a grid function ``h`` on a dual grid is

    h*(v) = max over primal nodes x of <v, x> - h(x)

computed either by brute force over all node pairs or by a separable
linear-time transform (one lower-hull pass per axis).

Boundary policy
---------------
The grid box truncates sup/inf over R^p.  Under ``boundary="extend"`` (the
default) every dual node whose maximiser sits on the box boundary is
inspected: if the objective still increases outward at a rate of at least
``slope_tol`` the true sup is taken to be ``+inf`` (flag 2); a smaller
positive rate marks the node truncation-suspect (flag 1).  The outward rate
is the smaller of two estimates: the difference quotient towards the inward
axis neighbour of the maximiser, and the drop of the sup when the outermost
node layer of the box is removed.  The second estimate keeps domains that
meet the box obliquely (a band along a diagonal, say) from being mistaken
for growth.  ``boundary="raw"``
returns the plain discrete sup with no flags.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import GridMismatch
from .extreal import ExtReal, ext_add
from .grid import Grid, GridFn, NodeSet

log = logging.getLogger(__name__)

__all__ = [
    "TransformConfig",
    "conjugate",
    "conjugate_with_argmax",
    "biconjugate",
    "inf_convolution",
    "fenchel_gap",
    "subdifferential",
    "default_tol_fenchel",
    "INF_CAP",
]

INF_CAP = 1e12
METHODS = ("FastLLT", "BruteForce")


@dataclass(frozen=True)
class TransformConfig:
    """Settings for :func:`conjugate`.

    Parameters
    ----------
    dual_grid : Grid
        Grid on which the conjugate is sampled.
    method : {"FastLLT", "BruteForce"}
    tol_fenchel : float, optional
        Agreement tolerance; ``None`` derives it from the input function.
    boundary : {"extend", "raw"}
        Truncation policy, see the module docstring.
    slope_tol : float, optional
        Outward-rate threshold for promotion to ``+inf``; defaults to half the
        smallest dual spacing.
    """

    dual_grid: Grid
    method: str = "FastLLT"
    tol_fenchel: float | None = None
    boundary: str = "extend"
    slope_tol: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.boundary not in ("extend", "raw"):
            raise ValueError("boundary must be 'extend' or 'raw'")
        if self.tol_fenchel is not None and not self.tol_fenchel > 0:
            raise ValueError("tol_fenchel must be positive")

    @property
    def slope_threshold(self) -> float:
        if self.slope_tol is not None:
            return self.slope_tol
        return 0.5 * float(self.dual_grid.spacing.min())

    def replace(self, **kw) -> "TransformConfig":
        d = dict(dual_grid=self.dual_grid, method=self.method, tol_fenchel=self.tol_fenchel,
                 boundary=self.boundary, slope_tol=self.slope_tol)
        d.update(kw)
        return TransformConfig(**d)


def _gradient_bound(h: GridFn) -> float:
    v = h.values
    g = 0.0
    for ax in range(v.ndim):
        with np.errstate(invalid="ignore"):
            d = np.diff(v, axis=ax)
            d = np.abs(d[np.isfinite(d)]) / h.grid.spacing[ax]
        if d.size:
            g = max(g, float(d.max()))
    return g


def default_tol_fenchel(h: GridFn, dual_grid: Grid | None = None) -> float:
    """``1e-6 + 2 * max spacing * max finite gradient estimate``."""
    return 1e-6 + 2.0 * float(h.grid.spacing.max()) * _gradient_bound(h)


def _separable(values: np.ndarray, grid: Grid, dual: Grid):
    p = grid.dim
    cur = values
    idx_passes = [None] * p
    for ax in range(p - 1, -1, -1):
        moved = np.moveaxis(cur, ax, -1)
        lead = moved.shape[:-1]
        vals, idx = kernels.conj_lines(moved.reshape(-1, moved.shape[-1]),
                                       grid.axis_nodes(ax), dual.axis_nodes(ax))
        nv = dual.shape[ax]
        out = np.moveaxis(vals.reshape(lead + (nv,)), -1, ax)
        idx_passes[ax] = np.moveaxis(idx.reshape(lead + (nv,)), -1, ax)
        cur = -out if ax > 0 else out
    # recover the full maximiser, outermost axis first
    dual_idx = np.indices(dual.shape)
    arg = []
    for ax in range(p):
        sel = tuple(arg) + tuple(dual_idx[k] for k in range(ax, p))
        a = idx_passes[ax][sel]
        arg.append(np.maximum(a, 0))
    return out, np.stack(arg, axis=-1).reshape(-1, p)


def _brute(values: np.ndarray, grid: Grid, dual: Grid):
    vals, idx = kernels.conj_brute(values.ravel(), grid.nodes(), dual.nodes())
    arg = np.stack(np.unravel_index(np.maximum(idx, 0), grid.shape), axis=-1)
    return vals.reshape(dual.shape), arg


def _inner_sup(h: GridFn, dual: Grid, method: str):
    """The discrete sup over the box with its outermost node layer removed."""
    grid = h.grid
    if min(grid.shape) < 3:
        return None
    inner = Grid(tuple((a[0] + s, a[1] - s, a[2] - 2) for a, s in zip(grid.axes, grid.spacing)))
    vals = h.values[tuple(slice(1, -1) for _ in grid.shape)]
    if method == "BruteForce":
        return _brute(vals, inner, dual)[0]
    return _separable(vals, inner, dual)[0]


def _boundary_flags(h: GridFn, dual: Grid, raw: np.ndarray, arg: np.ndarray, slope_tol: float,
                    inner: np.ndarray | None = None):
    grid = h.grid
    vals = raw.ravel().copy()
    flags = np.zeros(vals.shape, dtype=np.uint8)
    V = dual.nodes()
    shape = np.array(grid.shape)
    best = np.full(vals.shape, -np.inf)
    finite = np.isfinite(vals)
    for ax in range(grid.dim):
        for end, step in ((0, 1), (shape[ax] - 1, -1)):
            on = finite & (arg[:, ax] == end)
            if not on.any():
                continue
            nb = arg[on].copy()
            nb[:, ax] += step
            h_nb = h.values[tuple(nb.T)]
            x_nb = np.stack([grid.axis_nodes(k)[nb[:, k]] for k in range(grid.dim)], axis=1)
            with np.errstate(invalid="ignore"):
                obj_nb = np.einsum("ij,ij->i", V[on], x_nb) - h_nb
                slope = (vals[on] - obj_nb) / grid.spacing[ax]
            # an infinite neighbour means the domain ends here, not the box
            slope = np.where(np.isfinite(h_nb), slope, -np.inf)
            best[on] = np.maximum(best[on], slope)
    if inner is not None:
        with np.errstate(invalid="ignore"):
            shrink = (vals - inner.ravel()) / float(grid.spacing.max())
        best = np.where(np.isnan(shrink), best, np.minimum(best, shrink))
    tie = 1e-9 * (1.0 + np.abs(np.where(finite, vals, 0.0))) / float(grid.spacing.min())
    promote = finite & (best >= slope_tol)
    suspect = finite & ~promote & (best > tie)
    flags[suspect] = 1
    flags[promote] = 2
    vals[promote] = np.inf
    cap = vals > INF_CAP
    flags[cap & np.isfinite(vals)] = 2
    vals[cap] = np.inf
    return vals.reshape(dual.shape), flags.reshape(dual.shape)


def conjugate_with_argmax(h: GridFn, cfg: TransformConfig):
    """Conjugate plus the ``(M, p)`` primal multi-index of each maximiser."""
    dual = cfg.dual_grid
    if dual.dim != h.grid.dim:
        raise GridMismatch(f"dual grid is {dual.dim}-D, primal grid is {h.grid.dim}-D")
    if cfg.method == "BruteForce":
        raw, arg = _brute(h.values, h.grid, dual)
    else:
        raw, arg = _separable(h.values, h.grid, dual)
    if cfg.boundary == "raw":
        return GridFn(dual, raw, name=f"({h.name})*"), arg
    inner = _inner_sup(h, dual, cfg.method)
    vals, flags = _boundary_flags(h, dual, raw, arg, cfg.slope_threshold, inner)
    return GridFn(dual, vals, flags, name=f"({h.name})*"), arg


def conjugate(h: GridFn, cfg: TransformConfig) -> GridFn:
    """Discrete convex conjugate of ``h`` on ``cfg.dual_grid``."""
    return conjugate_with_argmax(h, cfg)[0]


def biconjugate(h: GridFn, cfg: TransformConfig) -> GridFn:
    """``h**`` on the primal grid: inner transform under ``cfg``, outer raw."""
    hs = conjugate(h, cfg)
    outer = cfg.replace(dual_grid=h.grid, boundary="raw")
    out = conjugate(hs, outer)
    return GridFn(h.grid, out.values, name=f"({h.name})**")


def inf_convolution(h1: GridFn, h2: GridFn, return_argmin: bool = False):
    """``(h1 □ h2)(w) = min_z h1(z) + h2(w - z)`` on ``h1``'s grid.

    ``h2`` is interpolated multilinearly at ``w - z``; a ``+inf`` corner with
    positive weight, or a point outside ``h2``'s box, gives ``+inf``.
    """
    if h1.grid.dim != h2.grid.dim:
        raise GridMismatch("inf-convolution of functions on grids of different dimension")
    Z = h1.grid.nodes()
    g2 = h2.grid
    vals, idx = kernels.inf_conv(h1.values.ravel(), Z, Z, h2.values.ravel(),
                                 g2.lo, g2.spacing, g2.shape)
    out = GridFn(h1.grid, vals, name=f"({h1.name}) □ ({h2.name})")
    if return_argmin:
        return out, idx
    return out


def fenchel_gap(h: GridFn, h_star: GridFn, x, v) -> ExtReal:
    """``h(x) + h*(v) - <v, x>`` under inf-addition."""
    hx = h.at(x)
    hv = h_star.at(v)
    ip = float(np.dot(np.asarray(v, dtype=float), np.asarray(x, dtype=float)))
    return ext_add(ext_add(hx, hv), -ip)


def subdifferential(h: GridFn, h_star: GridFn, xbar, tol: float | None = None) -> NodeSet:
    """Dual nodes ``v`` with ``h(xbar) + h*(v) - <v, xbar> <= tol``.

    Empty when ``h(xbar)`` is not finite.
    """
    hx = float(h.at(xbar))
    grid = h_star.grid
    if not np.isfinite(hx):
        return NodeSet(grid, np.zeros(grid.shape, dtype=bool))
    if tol is None:
        tol = 1e-6 * (1.0 + abs(hx))
    V = grid.nodes()
    hs = h_star.values.ravel()
    with np.errstate(invalid="ignore"):
        gap = hx + hs - V @ np.asarray(xbar, dtype=float)
    mask = np.isfinite(hs) & (gap <= tol)
    return NodeSet(grid, mask.reshape(grid.shape))
