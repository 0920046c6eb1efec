"""Perturbation duality for composite problems on grids.

With ``f(x, u) = f0(x) + g(F(x) + u)`` the primal and dual value functions
are

    p_v(u) = inf_x f(x, u) - <v, x>
    q_u(v) = inf_y f*(v, y) - <u, y>,   f*(v, y) = (f0 + <y,F>)*(v) + g*(y)

and weak duality reads ``p_v(u) + q_u(v) >= 0``.  Grids cannot prove that an
infimum is not attained; a minimiser on the box boundary with the objective
still decreasing outward is reported as "not attained on the grid" together
with a flat-tail or steep-tail diagnostic.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .composite import CompositeProblem
from .conjugate import TransformConfig, conjugate, subdifferential
from .errors import NotConvex
from .extreal import ExtReal, ext_add
from .grid import Grid, GridFn, NodeSet, midpoint_violations

log = logging.getLogger(__name__)

__all__ = [
    "DualityReport",
    "lagrangian",
    "f_star",
    "f_star_direct",
    "primal_value",
    "dual_value",
    "primal_table",
    "dual_table",
    "weak_duality_report",
    "OptimalityCheck",
    "optimality_equivalence_check",
    "optimality_scan",
    "ChainRuleReport",
    "chain_rule_sets",
    "value_conjugate_check",
    "subgradient_escape",
    "argmin_vs_subdifferential",
    "joint_convexity",
]

TIE = 1e-9
CHUNK = 2_000_000


@dataclass
class Extremum:
    """Grid infimum with its minimisers and the boundary diagnosis."""

    value: ExtReal
    argmin: list
    attained: bool
    boundary_suspect: bool
    diagnostic: str | None = None
    tail_rate: float = 0.0


@dataclass
class DualityReport:
    vbar: tuple
    ubar: tuple
    p_val: ExtReal
    q_val: ExtReal
    gap: ExtReal
    P_set: list
    Q_set: list
    flags: dict
    diagnostics: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "vbar": list(self.vbar), "ubar": list(self.ubar),
            "p_val": float(self.p_val), "q_val": float(self.q_val), "gap": float(self.gap),
            "P_set": [list(p) for p in self.P_set], "Q_set": [list(q) for q in self.Q_set],
            "flags": dict(self.flags), "diagnostics": list(self.diagnostics),
        }


# pointwise building blocks ---------------------------------------------

def lagrangian(P: CompositeProblem, x, y) -> ExtReal:
    """``l(x, y) = f0(x) + <y, F(x)> - g*(y)``; ``+inf`` off ``dom f0 ∩ dom F``."""
    i = P.x_grid.index_of(x)
    if not P.base_dom[i]:
        return ExtReal(np.inf)
    gy = float(P.g_star.at(y))
    base = float(P.f0_vals[i] + P.F_vals[i] @ np.asarray(y, dtype=float))
    return ext_add(base, -gy)


def f_star(P: CompositeProblem, v, y, boundary: str = "extend") -> ExtReal:
    """``f*(v, y) = (f0 + <y,F>)*(v) + g*(y)`` with both factors on grids."""
    j = P.y_grid.index_of(y)
    if boundary == "extend":
        gy = float(P.g_star.values[j])
        c = P.conj_shifted(P.y_grid.node(j), key=P.y_grid.flat_index(j))
    else:
        gy = float(_g_star_raw(P).values[j])
        c = conjugate(GridFn(P.x_grid, P.shifted(P.y_grid.node(j))), P.cfg(P.v_grid, "raw"))
    return ext_add(float(c.at(v)), gy)


def f_star_direct(P: CompositeProblem, v, y) -> ExtReal:
    """Raw sup of ``<v,x> + <y,u> - f(x,u)`` over the x- and u-grids."""
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    X = P.x_grid.nodes()
    best = -np.inf
    pert = P.perturbation()
    for u in P.u_grid.nodes():
        f = pert.slice_u(u).values.ravel()
        fin = f < np.inf
        if fin.any():
            best = max(best, float(np.max(X[fin] @ v - f[fin])) + float(u @ y))
    return ExtReal(best)


def _g_star_raw(P: CompositeProblem) -> GridFn:
    if "g*raw" not in P._cache:
        P._cache["g*raw"] = conjugate(P.g_grid, P.cfg(P.y_grid, "raw"))
    return P._cache["g*raw"]


def _boundary_tail(grid: Grid, vals: np.ndarray, k: int, slope_tol: float):
    """Outward decrease rate at a boundary minimiser ``k`` (flat index).

    Returns the largest ``(vals[inward neighbour] - vals[k]) / h`` over the
    axes on which ``k`` sits at a box end; ``-inf`` when interior.
    """
    idx = grid.unravel(k)
    v = vals.reshape(grid.shape)
    best = -np.inf
    for ax in range(grid.dim):
        n = grid.shape[ax]
        if n < 2:
            continue
        for end, step in ((0, 1), (n - 1, -1)):
            if idx[ax] != end:
                continue
            nb = list(idx)
            nb[ax] += step
            vn = v[tuple(nb)]
            if np.isfinite(vn):
                best = max(best, (vn - v[idx]) / float(grid.spacing[ax]))
    return best


def _extremum(grid: Grid, vals: np.ndarray, slope_tol: float, tol: float | None = None) -> Extremum:
    vals = np.asarray(vals, dtype=float).ravel()
    m = float(vals.min())
    if not np.isfinite(m):
        return Extremum(ExtReal(m), [], False, False,
                        "all candidates +inf" if m == np.inf else "value -inf")
    tol = 1e-9 * (1.0 + abs(m)) if tol is None else tol
    sel = np.flatnonzero(vals <= m + tol)
    bd = grid.boundary_mask().ravel()
    rate = max((_boundary_tail(grid, vals, int(k), slope_tol) for k in sel if bd[k]), default=-np.inf)
    tie = TIE * (1.0 + abs(m)) / float(grid.spacing.min())
    pts = [tuple(float(c) for c in grid.node(grid.unravel(int(k)))) for k in sel]
    if rate > tie:
        diag = "flat-tail" if rate < slope_tol else "steep-tail"
        return Extremum(ExtReal(m), [], False, True, diag, float(rate))
    return Extremum(ExtReal(m), pts, True, bool(bd[sel].any()), None, float(max(rate, 0.0)))


# value functions -------------------------------------------------------

def _primal_objective(P: CompositeProblem, vbar, ubar) -> np.ndarray:
    vbar = np.asarray(vbar, dtype=float).ravel()
    f = P.perturbation().slice_u(ubar).values.ravel()
    with np.errstate(invalid="ignore"):
        return np.where(f < np.inf, f - P.x_grid.nodes() @ vbar, np.inf)


def primal_value(P: CompositeProblem, vbar, ubar, slope_tol: float | None = None) -> Extremum:
    """``p_v(u) = inf_x f(x, u) - <v, x>`` over the x-grid.

    ``ubar`` and ``vbar`` need not be nodes: ``f`` is re-evaluated exactly.
    """
    st = 0.5 * float(P.v_grid.spacing.min()) if slope_tol is None else slope_tol
    return _extremum(P.x_grid, _primal_objective(P, vbar, ubar), st)


def _point_conj(P: CompositeProblem, Y: np.ndarray, vbar: np.ndarray, use_f0: bool = True):
    """``(f0 + <y,F>)*(vbar)`` for every row of ``Y`` with the extend policy."""
    X = P.x_grid.nodes()
    dom = (P.base_dom if use_f0 else P.dom_F).ravel()
    Xd = X[dom]
    f0 = P.f0_vals.ravel()[dom] if use_f0 else np.zeros(int(dom.sum()))
    Fv = P.F_vals.reshape(-1, P.m)[dom]
    lin = Xd @ vbar - f0
    out = np.empty(len(Y))
    arg = np.empty(len(Y), dtype=np.int64)
    rows = max(1, CHUNK // max(1, len(Xd)))
    for s in range(0, len(Y), rows):
        obj = lin[None, :] - Y[s:s + rows] @ Fv.T
        a = np.argmax(obj, axis=1)
        out[s:s + rows] = obj[np.arange(len(a)), a]
        arg[s:s + rows] = a
    # promote maximisers that still improve past the box
    st = 0.5 * float(P.v_grid.spacing.min())
    full = np.flatnonzero(dom)
    shape = P.x_grid.shape
    for r in range(len(Y)):
        k = P.x_grid.unravel(int(full[arg[r]]))
        for ax in range(P.n):
            n = shape[ax]
            for end, step in ((0, 1), (n - 1, -1)):
                if n < 2 or k[ax] != end:
                    continue
                nb = list(k)
                nb[ax] += step
                nb = tuple(nb)
                if not (P.base_dom if use_f0 else P.dom_F)[nb]:
                    continue
                xn = P.x_grid.node(nb)
                on = float(xn @ vbar - (P.f0_vals[nb] if use_f0 else 0.0) - Y[r] @ P.F_vals[nb])
                if (out[r] - on) / float(P.x_grid.spacing[ax]) >= st:
                    out[r] = np.inf
    return out


def dual_value(P: CompositeProblem, vbar, ubar, slope_tol: float | None = None) -> Extremum:
    """``q_u(v) = inf_y f*(v, y) - <u, y>`` over the y-grid.

    ``f*(v, ·)`` is evaluated exactly at ``vbar`` (no interpolation).
    """
    vbar = np.asarray(vbar, dtype=float).ravel()
    ubar = np.asarray(ubar, dtype=float).ravel()
    idx, Y = P.y_candidates()
    vals = np.full(P.y_grid.size, np.inf)
    if len(idx):
        c = _point_conj(P, Y, vbar)
        with np.errstate(invalid="ignore"):
            vals[idx] = c + P.g_star.values.ravel()[idx] - Y @ ubar
        vals[np.isnan(vals)] = np.inf
    st = 0.5 * float(P.u_grid.spacing.min()) if slope_tol is None else slope_tol
    return _extremum(P.y_grid, vals, st)


def primal_table(P: CompositeProblem, vbar) -> GridFn:
    """``p_v`` on the u-grid."""
    U = P.u_grid.nodes()
    vals = np.array([float(np.min(_primal_objective(P, vbar, u))) for u in U])
    return GridFn(P.u_grid, vals, name=f"p_{np.asarray(vbar).tolist()}")


def dual_table(P: CompositeProblem, ubar) -> GridFn:
    """``q_u`` on the v-grid."""
    ubar = np.asarray(ubar, dtype=float).ravel()
    idx, Y = P.y_candidates()
    gs = P.g_star.values.ravel()
    best = np.full(P.v_grid.size, np.inf)
    for i, y in zip(idx, Y):
        c = P.conj_shifted(y, key=int(i))
        best = np.minimum(best, c.values.ravel() + gs[i] - float(y @ ubar))
    return GridFn(P.v_grid, best, name=f"q_{ubar.tolist()}")


def weak_duality_report(P: CompositeProblem, vbar, ubar, tol: float | None = None) -> DualityReport:
    """``p_v(u)``, ``q_u(v)`` and the gap ``p + q`` (weak duality: ``>= 0``)."""
    pr = primal_value(P, vbar, ubar)
    du = dual_value(P, vbar, ubar)
    gap = ext_add(pr.value, du.value)
    scale = sum(abs(float(t)) for t in (pr.value, du.value) if np.isfinite(t))
    tol = 1e-6 * (1.0 + scale) if tol is None else tol
    g = float(gap)
    diags = []
    if pr.diagnostic:
        diags.append(f"primal: {pr.diagnostic}")
    if du.diagnostic:
        diags.append(f"dual: {du.diagnostic}")
    flags = {
        "weak_ok": bool(g >= -tol or np.isnan(g)),
        "strong_eq": bool(np.isfinite(g) and abs(g) <= tol),
        "primal_attained": bool(pr.attained),
        "dual_attained": bool(du.attained),
        "boundary_suspect": bool(pr.boundary_suspect or du.boundary_suspect),
    }
    return DualityReport(tuple(np.ravel(vbar).tolist()), tuple(np.ravel(ubar).tolist()),
                         pr.value, du.value, gap, pr.argmin, du.argmin, flags, diags)


# optimality conditions ---------------------------------------------------

@dataclass
class OptimalityCheck:
    residuals: dict
    composite_holds: bool
    split_holds: bool
    tol: float

    @property
    def equivalent(self) -> bool:
        return self.composite_holds == self.split_holds

    @property
    def discrepancy(self) -> bool:
        """One side holds at ``tol`` while the other fails even at ``2 tol``.

        Both pairs of residuals are nonnegative and have the same sum, so a
        disagreement inside this band is rounding, not a counterexample.
        """
        r = self.residuals
        s_h = max(r["h_fy"], r["h_split"])
        s_c = max(r["g_fy"], r["phi_fy"])
        return (s_h <= self.tol and s_c > 2 * self.tol) or (s_c <= self.tol and s_h > 2 * self.tol)

    def to_json(self) -> dict:
        return {"residuals": dict(self.residuals), "composite_holds": self.composite_holds,
                "split_holds": self.split_holds, "equivalent": self.equivalent,
                "discrepancy": self.discrepancy}


def _raw_pieces(P: CompositeProblem):
    if "opt" not in P._cache:
        h = P.composite_fn()
        hs = conjugate(h, P.cfg(P.v_grid, "raw"))
        P._cache["opt"] = (h, hs)
    return P._cache["opt"]


def _residual(*terms) -> float:
    tot = 0.0
    for t in terms:
        tot = float(ext_add(tot, t))
    return abs(tot) if np.isfinite(tot) else np.inf


def optimality_equivalence_check(P: CompositeProblem, vbar, xbar, ybar, tol: float = 1e-9) -> OptimalityCheck:
    """Evaluate both optimality-condition pairs at ``(vbar, xbar, ybar)``.

    * h_fy: ``h(x) + h*(v) = <v, x>`` for ``h = f0 + g∘F``
    * h_split: ``h*(v) = (f0 + <y,F>)*(v) + g*(y)``
    * g_fy: ``g(F(x)) + g*(y) = <y, F(x)>``
    * phi_fy: ``(f0 + <y,F>)(x) + (f0 + <y,F>)*(v) = <v, x>``

    All transforms use the raw discrete sup so that discrete Fenchel-Young
    inequalities hold exactly on grid-compatible problems.
    """
    h, hs = _raw_pieces(P)
    vbar = np.asarray(vbar, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    ybar = np.asarray(ybar, dtype=float)
    xi = P.x_grid.index_of(xbar)
    yi = P.y_grid.index_of(ybar)
    gs = float(_g_star_raw(P).values[yi])
    phi = GridFn(P.x_grid, P.shifted(ybar))
    phis = conjugate(phi, P.cfg(P.v_grid, "raw"))
    hv, hsv = float(h.values[xi]), float(hs.at(vbar))
    vx = float(vbar @ xbar)
    if P.base_dom[xi]:
        Fx = P.F_vals[xi]
        gF = float(P.g_at(Fx[None, :])[0])
        yF = float(ybar @ Fx)
    else:
        gF, yF = np.inf, 0.0
    r = {
        "h_fy": _residual(hv, hsv, -vx),
        "h_split": _residual(hsv, -float(phis.at(vbar)), -gs),
        "g_fy": _residual(gF, gs, -yF),
        "phi_fy": _residual(float(phi.values[xi]), float(phis.at(vbar)), -vx),
    }
    comp = r["h_fy"] <= tol and r["h_split"] <= tol
    split = r["g_fy"] <= tol and r["phi_fy"] <= tol
    return OptimalityCheck(r, bool(comp), bool(split), tol)


def optimality_scan(P: CompositeProblem, tol: float = 1e-9) -> dict:
    """Exhaustive scan of all ``(v, x, y)`` node triples.

    Returns counts of triples where each pair holds, disagreements and
    disagreements outside the tolerance band (see
    :attr:`OptimalityCheck.discrepancy`).
    """
    h, hs = _raw_pieces(P)
    X, V, Yn = P.x_grid.nodes(), P.v_grid.nodes(), P.y_grid.nodes()
    gsr = _g_star_raw(P).values.ravel()
    hx = h.values.ravel()
    hsv = hs.values.ravel()
    VX = V @ X.T
    dom = P.base_dom.ravel()
    Fv = P.F_vals.reshape(-1, P.m)
    gF = np.where(dom, P.g_at(Fv), np.inf)
    out = {"triples": 0, "composite": 0, "split": 0, "disagree": 0, "discrepancies": 0, "examples": []}
    with np.errstate(invalid="ignore"):
        r_hfy = np.abs(hx[None, :] + hsv[:, None] - VX)
        r_hfy[~np.isfinite(r_hfy)] = np.inf
        for j, y in enumerate(Yn):
            phi = P.shifted(y)
            phis = conjugate(GridFn(P.x_grid, phi), P.cfg(P.v_grid, "raw")).values.ravel()
            r_hsplit = np.abs(hsv - phis - gsr[j])
            r_hsplit[~np.isfinite(r_hsplit)] = np.inf
            r_gfy = np.abs(gF + gsr[j] - Fv @ y)
            r_gfy[~np.isfinite(r_gfy)] = np.inf
            r_phify = np.abs(phi.ravel()[None, :] + phis[:, None] - VX)
            r_phify[~np.isfinite(r_phify)] = np.inf
            s_h = np.maximum(r_hfy, r_hsplit[:, None])
            s_c = np.maximum(r_gfy[None, :], r_phify)
            e_h, e_c = s_h <= tol, s_c <= tol
            bad = (e_h & (s_c > 2 * tol)) | (e_c & (s_h > 2 * tol))
            out["triples"] += e_h.size
            out["composite"] += int(e_h.sum())
            out["split"] += int(e_c.sum())
            out["disagree"] += int((e_h != e_c).sum())
            out["discrepancies"] += int(bad.sum())
            for a, b in np.argwhere(bad)[:3]:
                if len(out["examples"]) < 5:
                    out["examples"].append({"v": V[a].tolist(), "x": X[b].tolist(), "y": y.tolist()})
    return out


# chain rule --------------------------------------------------------------

@dataclass
class ChainRuleReport:
    lhs: NodeSet
    rhs: NodeSet
    dg: NodeSet
    additive: NodeSet | None
    inclusion_ok: bool
    equality_holds: bool
    equality_ok: bool | None

    def to_json(self) -> dict:
        return {
            "lhs": self.lhs.points().tolist(), "rhs": self.rhs.points().tolist(),
            "dg": self.dg.points().tolist(),
            "additive": None if self.additive is None else self.additive.points().tolist(),
            "inclusion_ok": self.inclusion_ok, "equality_holds": self.equality_holds,
            "equality_ok": self.equality_ok,
        }


def _minkowski(A: NodeSet, B: NodeSet) -> NodeSet:
    grid = A.grid
    mask = np.zeros(grid.shape, dtype=bool)
    pa, pb = A.points(), B.points()
    if len(pa) and len(pb):
        S = (pa[:, None, :] + pb[None, :, :]).reshape(-1, grid.dim)
        t = grid.fractional_index(S)
        r = np.round(t)
        ok = np.all((np.abs(t - r) < 1e-6) & (r >= 0) & (r <= np.array(grid.shape) - 1), axis=1)
        mask[tuple(r[ok].astype(int).T)] = True
    return NodeSet(grid, mask)


def chain_rule_sets(P: CompositeProblem, xbar, certified: bool = False, tol: float | None = None,
                    convexity_tol: float = 1e-7) -> ChainRuleReport:
    """Compare ``∂(f0 + g∘F)(x)`` with ``∪_{y in ∂g(F(x))} ∂(f0 + <y,F>)(x)``.

    Subdifferentials are conjugate-gap node sets on the v-grid (and
    ``∂g`` on the y-grid).  ``rhs ⊆ lhs`` is tested with a one-node
    dilation; equality is asserted only when ``certified`` is set.

    Raises
    ------
    NotConvex
        When the composite fails the discrete midpoint test.
    """
    h = P.composite_fn()
    if midpoint_violations(h.values, convexity_tol, limit=1):
        raise NotConvex("f0 + g∘F is not discretely convex")
    cfg = P.cfg(P.v_grid)
    hs = conjugate(h, cfg)
    lhs = subdifferential(h, hs, xbar, tol)
    xi = P.x_grid.index_of(xbar)
    empty_v = NodeSet(P.v_grid, np.zeros(P.v_grid.shape, dtype=bool))
    if not P.base_dom[xi]:
        dg = NodeSet(P.y_grid, np.zeros(P.y_grid.shape, dtype=bool))
        return ChainRuleReport(lhs, empty_v, dg, None, True, not lhs, None if not certified else not lhs)
    Fx = P.F_vals[xi]
    gF = float(P.g_at(Fx[None, :])[0])
    gs = P.g_star
    if np.isfinite(gF):
        gap = gF + gs.values.ravel() - P.y_grid.nodes() @ Fx
        gt = 1e-6 * (1.0 + abs(gF)) if tol is None else tol
        dg = NodeSet(P.y_grid, (np.isfinite(gap) & (gap <= gt)).reshape(P.y_grid.shape))
    else:
        dg = NodeSet(P.y_grid, np.zeros(P.y_grid.shape, dtype=bool))
    rmask = np.zeros(P.v_grid.shape, dtype=bool)
    amask = np.zeros(P.v_grid.shape, dtype=bool)
    f0_const = P.f0.is_constant
    df0 = None
    if not f0_const:
        f0s = P.f0_star
        df0 = subdifferential(P.f0_grid, f0s, xbar, tol)
    for y in dg.points():
        phi = GridFn(P.x_grid, P.shifted(y))
        rmask |= subdifferential(phi, conjugate(phi, cfg), xbar, tol).mask
        if df0 is not None:
            sc = P.scalarize(y)
            amask |= _minkowski(df0, subdifferential(sc, conjugate(sc, cfg), xbar, tol)).mask
    rhs = NodeSet(P.v_grid, rmask)
    additive = None if df0 is None else NodeSet(P.v_grid, amask)
    inclusion = rhs.issubset(lhs, 1) and (additive is None or additive.issubset(lhs, 1))
    equal = rhs.same_as(lhs, 1)
    return ChainRuleReport(lhs, rhs, dg, additive, bool(inclusion), bool(equal),
                           bool(equal) if certified else None)


# further identities and diagnostics ---------------------------------------

def value_conjugate_check(P: CompositeProblem, vbar) -> dict:
    """Compare ``(p_v)*`` on the y-grid with ``f*(v, ·)``.

    Both sides are raw discrete sups: the left conjugates the sampled
    ``p_v`` table, the right uses the split ``(f0 + <y,F>)*(v) + g*(y)``.
    """
    p = primal_table(P, vbar)
    ps = conjugate(p, P.cfg(P.y_grid, "raw"))
    vi = P.v_grid.index_of(vbar)
    gsr = _g_star_raw(P).values.ravel()
    rhs = np.empty(P.y_grid.size)
    for j, y in enumerate(P.y_grid.nodes()):
        c = conjugate(GridFn(P.x_grid, P.shifted(y)), P.cfg(P.v_grid, "raw"))
        rhs[j] = float(ext_add(float(c.values[vi]), gsr[j]))
    lhs = ps.values.ravel()
    both = np.isfinite(lhs) & np.isfinite(rhs)
    dev = float(np.max(np.abs(lhs[both] - rhs[both]))) if both.any() else 0.0
    same_dom = bool(np.array_equal(np.isfinite(lhs), np.isfinite(rhs)))
    return {"max_abs_dev": dev, "domains_match": same_dom, "compared_nodes": int(both.sum()),
            "lhs": ps, "rhs": GridFn(P.y_grid, rhs, name="f*(v,.)")}


def subgradient_escape(P: CompositeProblem, vbar, ubar, refine: int = 4, growth: float = 1.5) -> dict:
    """One-sided difference quotients of ``p_v`` at ``ubar`` at two spacings.

    ``p_v`` is re-evaluated exactly at ``ubar ± h e_i`` and ``ubar ± (h /
    refine) e_i``.  A quotient growing by more than ``growth`` under
    refinement, or an infinite one, signals a subdifferential escaping to
    infinity (the grid analogue of ``∂p(u) = ∅``).
    """
    ubar = np.asarray(ubar, dtype=float).ravel()
    p0 = float(primal_value(P, vbar, ubar).value)
    out = {"p": p0, "axes": [], "escaping": False}
    if not np.isfinite(p0):
        out["escaping"] = True
        return out
    for ax in range(P.m):
        h = float(P.u_grid.spacing[ax])
        e = np.zeros(P.m)
        e[ax] = 1.0
        entry = {}
        for side, sgn in (("left", -1.0), ("right", 1.0)):
            qs = []
            for step in (h, h / refine):
                pv = float(primal_value(P, vbar, ubar + sgn * step * e).value)
                qs.append(sgn * (pv - p0) / step if np.isfinite(pv) else sgn * np.inf)
            grows = (not np.isfinite(qs[1])) or abs(qs[1]) > growth * max(abs(qs[0]), 1e-12)
            entry[side] = {"coarse": qs[0], "fine": qs[1], "grows": bool(grows)}
        # the subdifferential is [right..left]-bounded; an escaping bound on
        # either side with the other side infinite leaves nothing behind
        entry["escaping"] = bool(entry["left"]["grows"] and abs(entry["left"]["fine"]) > 1.0
                                 and not np.isfinite(entry["right"]["fine"])) or bool(
            entry["right"]["grows"] and abs(entry["right"]["fine"]) > 1.0
            and not np.isfinite(entry["left"]["fine"]))
        out["axes"].append(entry)
        out["escaping"] |= entry["escaping"]
    return out


def argmin_vs_subdifferential(P: CompositeProblem, vbar, ubar) -> dict:
    """``P(u, v)`` versus ``∂q_u(v)`` as node sets on the x-grid."""
    q = dual_table(P, ubar)
    qs = conjugate(q, P.cfg(P.x_grid, "raw"))
    sub = subdifferential(q, qs, vbar)
    pr = primal_value(P, vbar, ubar)
    argset = NodeSet.from_points(P.x_grid, pr.argmin) if pr.argmin else NodeSet(
        P.x_grid, np.zeros(P.x_grid.shape, dtype=bool))
    return {"argmin": argset, "subdifferential": sub, "match": argset.same_as(sub, 1)}


def joint_convexity(P: CompositeProblem, tol: float = 1e-7, max_size: int = 5_000_000) -> bool:
    """Discrete midpoint convexity of ``f(x, u)`` on ``x_grid × u_grid``."""
    f = P.perturbation().full(max_size)
    return not midpoint_violations(f, tol, diagonals=f.ndim <= 3, limit=1)
