"""Composite functions ``f0 + g∘F`` and their conjugate formulas.

For ``F: R^n -> R^m ∪ {+inf.}`` and ``g: R^m -> R̄`` the module evaluates

* ``rho(v)     = inf_y (f0 + <y,F>)*(v) + g*(y)``
* ``rho~(v)    = inf_{y,w} f0*(w) + <y,F>*(v - w) + g*(y)``
* ``eta_K(v)   = inf_{y in -K°} <y,F>*(v) + g*(y)``

on grids, together with the perturbation function
``f(x,u) = f0(x) + g(F(x) + u)`` and the set ``U = dom g - F(dom f0 ∩ dom F)``.
The y-infima run over the nodes where ``g*`` is finite; all other nodes
contribute ``+inf``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cones import Cone, polar
from .conjugate import TransformConfig, conjugate
from .errors import DimensionMismatch, ScenarioError
from .expr import FunctionExpr, as_expr
from .extreal import ExtReal
from .grid import Grid, GridFn, interpolate
from .qual import PointCloud, VRepSet

log = logging.getLogger(__name__)

__all__ = [
    "VecMap",
    "CompositeProblem",
    "Perturbation",
    "RhoTable",
    "RhoPoint",
    "SampledSet",
]


class VecMap:
    """``F: R^n -> R^m ∪ {+inf.}`` given by component expressions and an
    optional affine guard.

    Nodes failing the guard, or where a component is not finite, map to the
    infinite element.
    """

    def __init__(self, components, guard: str | None = None, n: int | None = None):
        self.components = [as_expr(c) for c in components]
        self.m = len(self.components)
        if self.m == 0:
            raise ScenarioError("F needs at least one component")
        self.guard_source = guard
        self.guard = None if not guard else FunctionExpr(f"0 if {guard} else inf")
        exprs = self.components + ([self.guard] if self.guard else [])
        for e in exprs:
            if e.prefixes() - {"x"}:
                raise ScenarioError(f"F component {e.source!r} must use x variables")
        need = max(e.max_index("x") for e in exprs)
        self.n = need if n is None else n
        if need > self.n:
            raise DimensionMismatch(f"F uses x{need} but n = {self.n}")

    @classmethod
    def parse(cls, spec, n: int | None = None) -> "VecMap":
        if isinstance(spec, VecMap):
            return spec
        if isinstance(spec, dict):
            return cls(spec["components"], spec.get("guard"), n)
        return cls(list(spec), None, n)

    def to_json(self) -> dict:
        return {"components": [c.source for c in self.components], "guard": self.guard_source}

    @property
    def has_guard(self) -> bool:
        return self.guard is not None

    def evaluate(self, X):
        """Return ``(values (N, m), dom (N,))`` at the rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        vals = np.stack([c.on_points(X, "x") if c.variables else
                         np.full(len(X), float(c.evaluate({}))) for c in self.components], axis=1)
        dom = np.all(np.isfinite(vals), axis=1)
        if self.guard is not None:
            dom &= self.guard.on_points(X, "x") == 0.0
        vals[~dom] = np.nan
        return vals, dom

    def is_affine_on(self, grid: Grid, tol: float = 1e-9) -> bool:
        vals, dom = self.on_grid(grid)
        return all(not _second_differences(vals[..., i], dom, tol) for i in range(self.m))

    def on_grid(self, grid: Grid):
        vals, dom = self.evaluate(grid.nodes())
        return vals.reshape(grid.shape + (self.m,)), dom.reshape(grid.shape)


def _second_differences(v: np.ndarray, dom: np.ndarray, tol: float) -> bool:
    for ax in range(v.ndim):
        a = np.moveaxis(v, ax, 0)
        d = np.moveaxis(dom, ax, 0)
        ok = d[2:] & d[1:-1] & d[:-2]
        dd = a[2:] - 2 * a[1:-1] + a[:-2]
        if np.any(ok & (np.abs(np.where(ok, dd, 0.0)) > tol)):
            return True
    return False


@dataclass(frozen=True, eq=False)
class SampledSet:
    """A set in ``R^m`` as a point cloud, plus an exact V-representation when
    both factors were declared polyhedral."""

    cloud: PointCloud
    vrep: VRepSet | None = None

    @property
    def exactness(self) -> str:
        return "Exact-VRep" if self.vrep is not None else "PointCloud"

    def as_set(self):
        return self.vrep if self.vrep is not None else self.cloud


@dataclass
class RhoTable:
    """``rho`` (or ``eta``) on the whole v-grid.

    Attributes
    ----------
    values : GridFn
        The infimum per v-node; ``flags`` are 1 where the minimising y lies
        on the y-grid boundary (attainment undetermined).
    argmin : ndarray, shape (M, m)
        Minimising y per v-node (NaN where every candidate is ``+inf``).
    trunc : ndarray of uint8
        Boundary flag of the per-y conjugate, or of ``g*``, at the minimiser.
    """

    values: GridFn
    argmin: np.ndarray
    trunc: np.ndarray

    @property
    def boundary_suspect(self) -> np.ndarray:
        return self.values.flags != 0


@dataclass
class RhoPoint:
    value: ExtReal
    minimizers: list
    boundary_suspect: bool
    all_infinite: bool
    refined: bool = False


class Perturbation:
    """Lazy ``f(x, u) = f0(x) + g(F(x) + u)`` on ``x_grid × u_grid``.

    ``g`` is evaluated by expression at ``F(x) + u`` (never interpolated
    unless it was given as a grid function).
    """

    def __init__(self, P: "CompositeProblem"):
        self.P = P
        self.x_grid = P.x_grid
        self.u_grid = P.u_grid

    def slice_u(self, u) -> GridFn:
        """``x -> f(x, u)`` on the x-grid."""
        P = self.P
        u = np.asarray(u, dtype=float).ravel()
        W = P.F_vals.reshape(-1, P.m) + u
        gv = np.full(len(W), np.inf)
        dom = P.base_dom.ravel()
        gv[dom] = P.g_at(W[dom])
        vals = np.where(dom, P.f0_vals.ravel() + gv, np.inf)
        return GridFn(P.x_grid, vals, name=f"f(x,{u.tolist()})")

    def slice_x(self, x) -> GridFn:
        """``u -> f(x, u)`` on the u-grid."""
        P = self.P
        x = np.asarray(x, dtype=float).reshape(1, -1)
        Fx, dom = P.F.evaluate(x)
        f0x = float(P.f0.on_points(x, "x")[0]) if P.f0.variables else float(P.f0.evaluate({}))
        U = P.u_grid.nodes()
        if not dom[0] or f0x == np.inf:
            return GridFn(P.u_grid, np.full(len(U), np.inf))
        with np.errstate(invalid="ignore"):
            vals = f0x + P.g_at(U + Fx[0])
        vals = np.where(np.isnan(vals), np.inf, vals)
        return GridFn(P.u_grid, vals, name=f"f({x.ravel().tolist()},u)")

    def full(self, max_size: int = 20_000_000) -> np.ndarray:
        """Dense array of shape ``x_grid.shape + u_grid.shape``."""
        size = self.x_grid.size * self.u_grid.size
        if size > max_size:
            raise MemoryError(f"perturbation table of {size} entries exceeds {max_size}")
        out = np.empty((self.x_grid.size, self.u_grid.size))
        for j, u in enumerate(self.u_grid.nodes()):
            out[:, j] = self.slice_u(u).values.ravel()
        return out.reshape(self.x_grid.shape + self.u_grid.shape)


@dataclass(eq=False)
class CompositeProblem:
    """Problem data for ``f0 + g∘F`` with its sampling grids.

    Parameters
    ----------
    f0 : str or FunctionExpr
        Over ``x1..xn``; may be the constant ``"0"``.
    g : str, FunctionExpr or GridFn
        Over ``w1..wm``.  A GridFn must live on ``u_grid`` and is
        interpolated off-grid.
    F : VecMap
    x_grid, u_grid, v_grid, y_grid : Grid
        ``x``/``v`` grids are n-dimensional, ``u`` (also the w-grid of ``g``)
        and ``y`` grids m-dimensional.
    method : {"FastLLT", "BruteForce"}
    memo : bool
        Cache per-y conjugates keyed by y-node index.
    flags, sets : dict
        Scenario declarations (``polyhedral_domg``, ``polyhedral_F``,
        ``pwlq_f``; V-representations of ``dom_g``, ``F_image`` ...).
    """

    f0: object
    g: object
    F: VecMap
    x_grid: Grid
    u_grid: Grid
    v_grid: Grid
    y_grid: Grid
    name: str = ""
    method: str = "FastLLT"
    memo: bool = False
    flags: dict = field(default_factory=dict)
    sets: dict = field(default_factory=dict)
    cone: Cone | None = None

    def __post_init__(self):
        self.f0 = as_expr(self.f0)
        if not isinstance(self.g, GridFn):
            self.g = as_expr(self.g)
            if self.g.prefixes() - {"w"}:
                raise ScenarioError(f"g must use w variables, got {self.g.source!r}")
        self.F = VecMap.parse(self.F, self.x_grid.dim)
        n, m = self.x_grid.dim, self.F.m
        if self.F.n != n or self.v_grid.dim != n:
            raise DimensionMismatch(f"x/v grids must be {self.F.n}-D")
        if self.u_grid.dim != m or self.y_grid.dim != m:
            raise DimensionMismatch(f"u/y grids must be {m}-D")
        if self.f0.prefixes() - {"x"}:
            raise ScenarioError(f"f0 must use x variables, got {self.f0.source!r}")
        if isinstance(self.g, GridFn) and self.g.grid != self.u_grid:
            raise DimensionMismatch("a sampled g must live on the u-grid")
        nodes = self.x_grid.nodes()
        f0 = self.f0.on_points(nodes, "x") if self.f0.variables else np.full(
            len(nodes), float(self.f0.evaluate({})))
        self.f0_vals = f0.reshape(self.x_grid.shape)
        Fv, dom = self.F.on_grid(self.x_grid)
        self.F_vals = np.where(dom[..., None], Fv, 0.0)
        self.dom_F = dom
        self.base_dom = dom & (self.f0_vals < np.inf)
        if not self.base_dom.any():
            raise ScenarioError("dom(f0) ∩ dom(F) has no node on the x-grid")
        self._cache = {}
        self._conj_memo = {}

    @property
    def n(self) -> int:
        return self.x_grid.dim

    @property
    def m(self) -> int:
        return self.F.m

    # transforms -------------------------------------------------------

    def cfg(self, dual: Grid, boundary: str = "extend") -> TransformConfig:
        return TransformConfig(dual, method=self.method, boundary=boundary)

    def g_at(self, W) -> np.ndarray:
        W = np.atleast_2d(np.asarray(W, dtype=float))
        if isinstance(self.g, GridFn):
            return interpolate(self.g.grid, self.g.values, W)
        if not self.g.variables:
            return np.full(len(W), float(self.g.evaluate({})))
        return self.g.on_points(W, "w")

    @property
    def g_grid(self) -> GridFn:
        if "g" not in self._cache:
            if isinstance(self.g, GridFn):
                self._cache["g"] = self.g
            else:
                self._cache["g"] = GridFn(self.u_grid, self.g_at(self.u_grid.nodes()),
                                          name=self.g.source)
        return self._cache["g"]

    @property
    def g_star(self) -> GridFn:
        """``g*`` on the y-grid."""
        if "g*" not in self._cache:
            self._cache["g*"] = conjugate(self.g_grid, self.cfg(self.y_grid))
        return self._cache["g*"]

    @property
    def f0_grid(self) -> GridFn:
        return GridFn(self.x_grid, self.f0_vals, name=self.f0.source)

    @property
    def f0_star(self) -> GridFn:
        if "f0*" not in self._cache:
            self._cache["f0*"] = conjugate(self.f0_grid, self.cfg(self.v_grid))
        return self._cache["f0*"]

    def scalarize(self, y) -> GridFn:
        """``<y, F>`` on the x-grid, ``+inf`` off ``dom F``."""
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != self.m:
            raise DimensionMismatch(f"y in R^{y.shape[0]}, F maps to R^{self.m}")
        vals = np.where(self.dom_F, self.F_vals @ y, np.inf)
        return GridFn(self.x_grid, vals, name=f"<{y.tolist()},F>")

    def shifted(self, y) -> np.ndarray:
        """``f0 + <y, F>`` values on the x-grid."""
        y = np.asarray(y, dtype=float).ravel()
        return np.where(self.base_dom, self.f0_vals + self.F_vals @ y, np.inf)

    def composite_fn(self) -> GridFn:
        """``f0 + g∘F`` on the x-grid."""
        s = Perturbation(self).slice_u(np.zeros(self.m))
        return GridFn(self.x_grid, s.values, name="f0+g∘F")

    def perturbation(self) -> Perturbation:
        return Perturbation(self)

    def conj_shifted(self, y, key=None, use_f0: bool = True) -> GridFn:
        """``(f0 + <y,F>)*`` (or ``<y,F>*``) on the v-grid."""
        if self.memo and key is not None and (key, use_f0) in self._conj_memo:
            return self._conj_memo[(key, use_f0)]
        y = np.asarray(y, dtype=float).ravel()
        vals = self.shifted(y) if use_f0 else np.where(self.dom_F, self.F_vals @ y, np.inf)
        out = conjugate(GridFn(self.x_grid, vals), self.cfg(self.v_grid))
        if self.memo and key is not None:
            self._conj_memo.setdefault((key, use_f0), out)
        return out

    def y_candidates(self, mask: np.ndarray | None = None):
        """Flat indices and coordinates of y-nodes with finite ``g*``."""
        fin = np.isfinite(self.g_star.values).ravel()
        if mask is not None:
            fin &= np.asarray(mask, dtype=bool).ravel()
        idx = np.flatnonzero(fin)
        return idx, self.y_grid.nodes()[idx]

    # rho / eta --------------------------------------------------------

    def _table(self, mask=None, use_f0: bool = True, name: str = "rho") -> RhoTable:
        idx, Y = self.y_candidates(mask)
        gs = self.g_star.values.ravel()
        gflags = self.g_star.flags.ravel()
        M = self.v_grid.size
        best = np.full(M, np.inf)
        arg = np.full(M, -1, dtype=np.int64)
        trunc = np.zeros(M, dtype=np.uint8)
        for k, (i, y) in enumerate(zip(idx, Y)):
            c = self.conj_shifted(y, key=int(i), use_f0=use_f0)
            tot = c.values.ravel() + gs[i]
            better = tot < best
            best[better] = tot[better]
            arg[better] = i
            trunc[better] = c.flags.ravel()[better] | gflags[i]
        ybd = self.y_grid.boundary_mask().ravel()
        flags = np.where((arg >= 0) & ybd[np.maximum(arg, 0)], 1, 0).astype(np.uint8)
        argmin = np.full((M, self.m), np.nan)
        ok = arg >= 0
        argmin[ok] = self.y_grid.nodes()[arg[ok]]
        return RhoTable(GridFn(self.v_grid, best, flags, name=name), argmin, trunc.reshape(self.v_grid.shape))

    def rho_table(self) -> RhoTable:
        return self._table()

    def eta_mask(self, K: Cone) -> np.ndarray:
        """Nodes of the y-grid lying in ``-K°``."""
        return (-polar(K)).contains_many(self.y_grid.nodes()).reshape(self.y_grid.shape)

    def eta_table(self, K: Cone) -> RhoTable:
        return self._table(mask=self.eta_mask(K), name="eta")

    def _point(self, vbar, mask=None, use_f0=True, refine=False, tol=None) -> RhoPoint:
        vidx = self.v_grid.index_of(vbar)
        idx, Y = self.y_candidates(mask)
        gs = self.g_star.values.ravel()
        vals = np.array([self.conj_shifted(y, key=int(i), use_f0=use_f0).values[vidx] + gs[i]
                         for i, y in zip(idx, Y)]) if len(idx) else np.zeros(0)
        if len(vals) == 0 or not np.isfinite(vals.min()):
            return RhoPoint(ExtReal(np.inf) if len(vals) == 0 or vals.min() == np.inf else ExtReal(-np.inf),
                            [], False, True)
        best = float(vals.min())
        tol = 1e-9 * (1.0 + abs(best)) if tol is None else tol
        sel = vals <= best + tol
        mins = [tuple(y) for y in Y[sel]]
        ybd = self.y_grid.boundary_mask().ravel()
        bd = bool(ybd[idx[sel]].any())
        out = RhoPoint(ExtReal(best), mins, bd, False)
        if refine:
            out = self._refine(vbar, out, use_f0)
        return out

    def _refine(self, vbar, incumbent: RhoPoint, use_f0: bool) -> RhoPoint:
        """Re-grid a 3x finer box of +/- two coarse cells around the incumbent."""
        y0 = np.asarray(incumbent.minimizers[0], dtype=float)
        h = self.y_grid.spacing
        lo = np.maximum(y0 - 2 * h, self.y_grid.lo)
        hi = np.minimum(y0 + 2 * h, self.y_grid.hi)
        axes = tuple((lo[k], hi[k], int(round((hi[k] - lo[k]) / (h[k] / 3))) + 1) for k in range(self.m))
        local = Grid(axes)
        gs = conjugate(self.g_grid, self.cfg(local))
        vidx = self.v_grid.index_of(vbar)
        best, arg = float(incumbent.value), None
        for j, y in enumerate(local.nodes()):
            gy = gs.values.ravel()[j]
            if not np.isfinite(gy):
                continue
            val = self.conj_shifted(y, use_f0=use_f0).values[vidx] + gy
            if val < best - 1e-12:
                best, arg = float(val), tuple(y)
        if arg is None:
            return incumbent
        return RhoPoint(ExtReal(best), [arg], incumbent.boundary_suspect, False, refined=True)

    def rho(self, vbar, refine: bool = False) -> RhoPoint:
        return self._point(vbar, refine=refine)

    def eta(self, K: Cone, vbar) -> RhoPoint:
        """``rho`` with the y-infimum restricted to ``-K°``."""
        return self._point(vbar, mask=self.eta_mask(K))

    def rho_tilde(self, vbar) -> RhoPoint:
        """Double infimum over ``(y, w)``; ``<y,F>*(vbar - w)`` is interpolated
        on the v-grid."""
        vbar = np.asarray(vbar, dtype=float).ravel()
        f0s = self.f0_star.values.ravel()
        wi = np.flatnonzero(np.isfinite(f0s))
        Wn = self.v_grid.nodes()[wi]
        idx, Y = self.y_candidates()
        gs = self.g_star.values.ravel()
        best, mins = np.inf, []
        vals_all = []
        for i, y in zip(idx, Y):
            c = self.conj_shifted(y, key=int(i), use_f0=False)
            t = f0s[wi] + interpolate(self.v_grid, c.values, vbar - Wn) + gs[i]
            vals_all.append(t)
            k = int(np.argmin(t)) if len(t) else -1
            if k >= 0 and t[k] < best:
                best = float(t[k])
        if not np.isfinite(best):
            return RhoPoint(ExtReal(best), [], False, True)
        tol = 1e-9 * (1.0 + abs(best))
        for (i, y), t in zip(zip(idx, Y), vals_all):
            for k in np.flatnonzero(t <= best + tol):
                mins.append((tuple(y), tuple(Wn[k])))
        ybd = self.y_grid.boundary_mask().ravel()
        bd = any(ybd[self.y_grid.flat_index(self.y_grid.index_of(y))] for y, _ in mins)
        return RhoPoint(ExtReal(best), mins, bool(bd), False)

    def rho_tilde_table(self) -> GridFn:
        """``rho~`` on the whole v-grid.

        The infima over ``y`` and ``w`` commute, so ``rho~ = f0* □ psi`` with
        ``psi(z) = inf_y <y,F>*(z) + g*(y)``: one infimal convolution instead
        of one per y-node.
        """
        psi = self._table(use_f0=False, name="psi").values.values.ravel()
        Vn = self.v_grid.nodes()
        g = self.v_grid
        vals, _ = kernels.inf_conv(self.f0_star.values.ravel(), Vn, Vn, psi, g.lo, g.spacing, g.shape)
        return GridFn(self.v_grid, vals.reshape(g.shape), name="rho_tilde")

    # U and the qualification sets --------------------------------------

    def dom_g_points(self) -> np.ndarray:
        return self.u_grid.nodes()[self.g_grid.dom_mask.ravel()]

    def image_points(self) -> np.ndarray:
        return self.F_vals.reshape(-1, self.m)[self.base_dom.ravel()]

    def _declared(self, key: str, flag: str | None):
        spec = self.sets.get(key)
        if spec is None or (flag is not None and not self.flags.get(flag, False)):
            return None
        return VRepSet.parse(spec)

    def u_set(self, K: Cone | None = None) -> SampledSet:
        """``U = dom g - F(dom f0 ∩ dom F)`` (``dom g - K`` in place of
        ``dom g`` when ``K`` is given)."""
        dg = PointCloud(self.dom_g_points()).to_vrep()
        im = PointCloud(self.image_points()).to_vrep()
        cloud = PointCloud(dg.minus(im).points)
        exact_g = self._declared("dom_g", "polyhedral_domg")
        exact_i = self._declared("F_image", "polyhedral_F")
        vrep = None
        if exact_g is not None and exact_i is not None:
            if K is not None:
                exact_g = exact_g.plus_rays(-K.rays)
            vrep = exact_g.minus(exact_i)
        return SampledSet(cloud, vrep)

    def qual_sets(self) -> dict:
        """Sets consumed by the qualification battery (exact where declared)."""
        out = {}
        out["dom_g"] = self._declared("dom_g", "polyhedral_domg") or PointCloud(self.dom_g_points())
        out["F_image"] = self._declared("F_image", "polyhedral_F") or PointCloud(self.image_points())
        rimg = self._declared("F_rint_image", "polyhedral_F")
        if rimg is None and not self.F.has_guard and isinstance(out["F_image"], VRepSet):
            rimg = out["F_image"]
        if rimg is not None:
            out["F_rint_image"] = rimg
        full = VRepSet.whole_space(self.n)
        out["dom_f0"] = self._declared("dom_f0", None) or (
            full if np.all(self.f0_vals < np.inf) else PointCloud(self.x_grid.nodes()[(self.f0_vals < np.inf).ravel()]))
        out["dom_F"] = self._declared("dom_F", None) or (
            full if not self.F.has_guard else PointCloud(self.x_grid.nodes()[self.dom_F.ravel()]))
        return out

    def with_g(self, g, name: str | None = None) -> "CompositeProblem":
        return CompositeProblem(self.f0, g, self.F, self.x_grid, self.u_grid, self.v_grid, self.y_grid,
                                name or self.name, self.method, self.memo, dict(self.flags),
                                dict(self.sets), self.cone)
