"""Qualification conditions: V-represented polyhedra, relative-interior tests,
piecewise linear-quadratic declarations and the condition battery."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateSet, DimensionMismatch, MissingVRep, PieceInconsistent, SampleMismatch
from .simplex import solve_lp

log = logging.getLogger(__name__)

__all__ = [
    "VRepSet",
    "PointCloud",
    "PwlqPiece",
    "PwlqFn",
    "PwlqReport",
    "Condition",
    "ConditionReport",
    "contains_point",
    "contains_rint",
    "rint_intersects",
    "intersects",
    "rint_meets",
    "relative_interior_point",
    "is_pwlq",
    "qualification_battery",
]

RAY_BOUND = 100.0


@dataclass(frozen=True, eq=False)
class VRepSet:
    """``conv(points) + cone(rays)``."""

    points: np.ndarray
    rays: np.ndarray = None

    def __post_init__(self):
        P = np.asarray(self.points, dtype=float)
        if P.size == 0:
            raise DegenerateSet("a V-representation needs at least one point")
        P = np.atleast_2d(P)
        d = P.shape[1]
        R = np.zeros((0, d)) if self.rays is None or np.size(self.rays) == 0 else np.atleast_2d(
            np.asarray(self.rays, dtype=float))
        if R.shape[1] != d:
            raise DimensionMismatch("points and rays differ in dimension")
        R = R[np.linalg.norm(R, axis=1) > 0]
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "rays", R)

    @classmethod
    def parse(cls, spec) -> "VRepSet":
        if isinstance(spec, VRepSet):
            return spec
        return cls(spec["points"], spec.get("rays"))

    @classmethod
    def whole_space(cls, d: int) -> "VRepSet":
        eye = np.eye(d)
        return cls(np.zeros((1, d)), np.vstack([eye, -eye]))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_json(self) -> dict:
        return {"points": self.points.tolist(), "rays": self.rays.tolist()}

    def minus(self, other: "VRepSet") -> "VRepSet":
        """Minkowski difference ``self - other``."""
        if other.dim != self.dim:
            raise DimensionMismatch("Minkowski difference of sets in different dimensions")
        P = (self.points[:, None, :] - other.points[None, :, :]).reshape(-1, self.dim)
        P = np.unique(np.round(P, 12), axis=0)
        return VRepSet(P, np.vstack([self.rays, -other.rays]))

    def plus_rays(self, rays) -> "VRepSet":
        rays = np.asarray(rays, dtype=float).reshape(-1, self.dim)
        return VRepSet(self.points, np.vstack([self.rays, rays]))

    def affine_basis(self, tol: float = 1e-10) -> np.ndarray:
        """Orthonormal basis of the linear space parallel to the affine hull."""
        D = np.vstack([self.points[1:] - self.points[0], self.rays])
        if D.size == 0:
            return np.zeros((0, self.dim))
        _, s, vt = np.linalg.svd(D)
        rank = int(np.sum(s > tol * max(1.0, s[0])))
        return vt[:rank]

    def scale(self) -> float:
        norms = np.concatenate([np.linalg.norm(self.points, axis=1), np.linalg.norm(self.rays, axis=1)])
        return float(norms.max(initial=0.0))


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Finite sample of a set; tests on it give approximate verdicts."""

    points: np.ndarray

    def to_vrep(self) -> VRepSet:
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        if len(P) > 3 * P.shape[1] + 1:
            P = _hull_vertices(P)
        return VRepSet(P)


def _hull_vertices(P: np.ndarray) -> np.ndarray:
    from scipy.spatial import ConvexHull, QhullError

    P = np.unique(np.round(P, 12), axis=0)
    if len(P) <= P.shape[1] + 1:
        return P
    c = P.mean(axis=0)
    _, s, vt = np.linalg.svd(P - c, full_matrices=False)
    rank = int(np.sum(s > 1e-9 * max(1.0, s[0])))
    if rank == 0:
        return P[:1]
    Q = (P - c) @ vt[:rank].T
    if rank == 1:
        return P[[int(np.argmin(Q[:, 0])), int(np.argmax(Q[:, 0]))]]
    try:
        return P[ConvexHull(Q).vertices]
    except QhullError:  # pragma: no cover - degenerate after rounding
        return P


def _membership_lp(S: VRepSet, x: np.ndarray):
    k, r = len(S.points), len(S.rays)
    A = np.zeros((S.dim + 1, k + r))
    A[:S.dim, :k] = S.points.T
    A[:S.dim, k:] = S.rays.T
    A[S.dim, :k] = 1.0
    b = np.concatenate([x, [1.0]])
    return A, b


def contains_point(S: VRepSet, x) -> bool:
    """LP feasibility of ``x = sum l_i p_i + sum m_j r_j`` with ``l`` in the
    simplex and ``m >= 0``."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != S.dim:
        raise DimensionMismatch(f"point in R^{x.shape[0]} vs set in R^{S.dim}")
    A, b = _membership_lp(S, x)
    return solve_lp(np.zeros(A.shape[1]), A, b).status == "optimal"


def default_eps(S: VRepSet) -> float:
    return 1e-6 * (1.0 + S.scale())


def contains_rint(S: VRepSet, x, eps: float | None = None) -> bool:
    """``x`` and ``x +/- eps * b_i`` lie in ``S`` for an orthonormal basis
    ``b_i`` of the affine hull directions."""
    if len(S.points) == 0:
        raise DegenerateSet("empty V-representation")
    x = np.asarray(x, dtype=float).ravel()
    eps = default_eps(S) if eps is None else eps
    if not contains_point(S, x):
        return False
    for b in S.affine_basis():
        if not (contains_point(S, x + eps * b) and contains_point(S, x - eps * b)):
            return False
    return True


def rint_intersects(A: VRepSet, B: VRepSet, eps: float | None = None) -> bool:
    """``rint A ∩ rint B ≠ ∅``.

    When the relative interiors meet, ``rint(A ∩ B) = rint A ∩ rint B``, so a
    single relative-interior point of ``A ∩ B`` decides.  This is computed
    on the intersection itself, independently of ``0 ∈ rint(A - B)``.
    """
    p = relative_interior_point(A, B)
    if p is None:
        return False
    return contains_rint(A, p, eps) and contains_rint(B, p, eps)


def intersects(A: VRepSet, B: VRepSet) -> bool:
    """``A ∩ B ≠ ∅`` by LP feasibility on the two representations."""
    return relative_interior_point(A, B, n_random=0) is not None


def relative_interior_point(A: VRepSet, C: VRepSet, n_random: int = 8, seed: int = 0):
    """A point in the relative interior of ``A ∩ C`` (``None`` if empty).

    Averages LP maximisers of ``±e_i`` and seeded random directions over the
    intersection, with the ray multipliers bounded to keep the LPs finite.
    """
    d = A.dim
    ka, ra, kc, rc = len(A.points), len(A.rays), len(C.points), len(C.rays)
    nv = ka + ra + kc + rc + 1
    rows = []
    rhs = []
    # A-representation equals C-representation
    for i in range(d):
        row = np.zeros(nv)
        row[:ka] = A.points[:, i]
        row[ka:ka + ra] = A.rays[:, i]
        row[ka + ra:ka + ra + kc] = -C.points[:, i]
        row[ka + ra + kc:nv - 1] = -C.rays[:, i]
        rows.append(row)
        rhs.append(0.0)
    row = np.zeros(nv)
    row[:ka] = 1.0
    rows.append(row)
    rhs.append(1.0)
    row = np.zeros(nv)
    row[ka + ra:ka + ra + kc] = 1.0
    rows.append(row)
    rhs.append(1.0)
    row = np.zeros(nv)
    row[ka:ka + ra] = 1.0
    row[ka + ra + kc:] = 1.0  # includes slack
    rows.append(row)
    rhs.append(RAY_BOUND * (1.0 + max(A.scale(), C.scale())))
    M = np.array(rows)
    b = np.array(rhs)
    rng = np.random.default_rng(seed)
    dirs = list(np.eye(d)) + list(-np.eye(d)) + list(rng.normal(size=(n_random, d)))
    pts = []
    for dvec in dirs:
        c = np.zeros(nv)
        c[:ka] = -A.points @ dvec
        c[ka:ka + ra] = -A.rays @ dvec
        res = solve_lp(c, M, b)
        if res.status == "infeasible":
            return None
        if res.status == "optimal":
            lam = res.x
            pts.append(A.points.T @ lam[:ka] + A.rays.T @ lam[ka:ka + ra])
    return np.mean(pts, axis=0)


def rint_meets(A: VRepSet, C: VRepSet, eps: float | None = None) -> bool:
    """``rint A ∩ C ≠ ∅``.

    If the intersection ``D = A ∩ C`` is nonempty and meets ``rint A`` then
    ``rint D ⊆ rint A``, so one relative-interior point of ``D`` decides.
    """
    p = relative_interior_point(A, C)
    if p is None:
        return False
    return contains_rint(A, p, eps)


# piecewise linear-quadratic functions


@dataclass(frozen=True, eq=False)
class PwlqPiece:
    """``1/2 <x, A x> + <q, x> - u`` on the polyhedron ``G x <= h``."""

    G: np.ndarray
    h: np.ndarray
    A: np.ndarray
    q: np.ndarray
    u: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.q, dtype=float).size
        object.__setattr__(self, "G", np.asarray(self.G, dtype=float).reshape(-1, n))
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float).ravel())
        A = np.asarray(self.A, dtype=float).reshape(n, n)
        object.__setattr__(self, "A", 0.5 * (A + A.T))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).ravel())
        object.__setattr__(self, "u", float(self.u))

    def inside(self, X: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        if len(self.G) == 0:
            return np.ones(len(X), dtype=bool)
        return np.all(X @ self.G.T <= self.h + tol * (1.0 + np.abs(self.h)), axis=1)

    def value(self, X: np.ndarray) -> np.ndarray:
        return 0.5 * np.einsum("ij,jk,ik->i", X, self.A, X) + X @ self.q - self.u


@dataclass(frozen=True, eq=False)
class PwlqFn:
    pieces: tuple

    @classmethod
    def parse(cls, spec) -> "PwlqFn":
        return cls(tuple(PwlqPiece(p.get("G", []), p.get("h", []), p["A"], p["q"], p.get("u", 0.0))
                         for p in spec["pieces"]))

    @property
    def dim(self) -> int:
        return self.pieces[0].q.size

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(len(X), np.inf)
        for pc in self.pieces:
            m = pc.inside(X)
            out[m] = np.minimum(out[m], pc.value(X[m]))
        return out

    def consistency_violation(self, box: float = 4.0, n: int = 400, seed: int = 0, tol: float = 1e-7):
        """Largest disagreement between pieces at shared sample points,
        including points projected onto every facet."""
        rng = np.random.default_rng(seed)
        X = rng.uniform(-box, box, size=(n, self.dim))
        extra = [X]
        for pc in self.pieces:
            for g, hh in zip(pc.G, pc.h):
                nn = g @ g
                if nn > 0:
                    extra.append(X - np.outer((X @ g - hh) / nn, g))
        X = np.vstack(extra)
        worst = 0.0
        where = None
        for i, a in enumerate(self.pieces):
            for b in self.pieces[i + 1:]:
                m = a.inside(X, tol) & b.inside(X, tol)
                if m.any():
                    dev = np.abs(a.value(X[m]) - b.value(X[m]))
                    k = int(np.argmax(dev))
                    if dev[k] > worst:
                        worst = float(dev[k])
                        where = X[m][k]
        return worst, where


@dataclass
class PwlqReport:
    valid: bool
    mode: str  # "explicit" or "declared, spot-checked"
    detail: str
    error: str | None = None

    def to_json(self) -> dict:
        return {"valid": self.valid, "mode": self.mode, "detail": self.detail, "error": self.error}


def _line_spot_check(f: Callable, dim: int, box: float, n_lines: int, seed: int,
                     n_t: int = 201, max_breaks: int = 8, tol: float = 1e-6):
    """Along random lines a PWLQ function is piecewise quadratic in the line
    parameter, so its third differences vanish away from finitely many
    breakpoints.  Returns the worst line's count of nonzero third differences."""
    rng = np.random.default_rng(seed)
    worst = 0
    t = np.linspace(-1.0, 1.0, n_t)
    for _ in range(n_lines):
        a = rng.uniform(-box, box, dim)
        d = rng.normal(size=dim)
        d *= box / np.linalg.norm(d)
        vals = np.asarray(f(a[None, :] + t[:, None] * d[None, :]), dtype=float)
        fin = np.isfinite(vals)
        with np.errstate(invalid="ignore"):
            d3 = vals[3:] - 3 * vals[2:-1] + 3 * vals[1:-2] - vals[:-3]
        ok = fin[3:] & fin[2:-1] & fin[1:-2] & fin[:-3]
        scale = tol * (1.0 + np.abs(vals[:-3]).clip(max=1e6))
        bad = int(np.sum(ok & (np.abs(np.where(ok, d3, 0.0)) > scale)))
        worst = max(worst, bad)
    return worst, 3 * max_breaks


def is_pwlq(decl, f: Callable | None = None, dim: int | None = None, box: float = 4.0,
            n_samples: int = 100, seed: int = 0, strict: bool = False) -> PwlqReport:
    """Validate a PWLQ declaration.

    Parameters
    ----------
    decl : PwlqFn or bool
        Explicit pieces, or the scenario's ``pwlq_f`` flag.
    f : callable, optional
        Vectorised evaluator of the function as sampled (rows are points).
    strict : bool
        Raise ``PieceInconsistent`` / ``SampleMismatch`` instead of
        returning an invalid report.
    """
    if isinstance(decl, PwlqFn):
        worst, where = decl.consistency_violation(box=box, seed=seed)
        if worst > 1e-7:
            msg = f"pieces disagree by {worst:.3g} at {np.round(where, 6).tolist()}"
            if strict:
                raise PieceInconsistent(msg)
            return PwlqReport(False, "explicit", msg, "PieceInconsistent")
        if f is not None:
            rng = np.random.default_rng(seed)
            X = rng.uniform(-box, box, size=(n_samples, decl.dim))
            a, b = decl(X), np.asarray(f(X), dtype=float)
            same_inf = np.isinf(a) == np.isinf(b)
            dev = np.where(np.isfinite(a) & np.isfinite(b), np.abs(a - b), 0.0)
            if not same_inf.all() or dev.max() > 1e-6 * (1 + np.abs(np.where(np.isfinite(b), b, 0)).max()):
                msg = f"pieces differ from the sampled function (max deviation {dev.max():.3g})"
                if strict:
                    raise SampleMismatch(msg)
                return PwlqReport(False, "explicit", msg, "SampleMismatch")
        return PwlqReport(True, "explicit", f"{len(decl.pieces)} consistent pieces")
    if not decl:
        return PwlqReport(False, "declared, spot-checked", "not declared PWLQ")
    if f is None or dim is None:
        return PwlqReport(True, "declared, spot-checked", "declared without a sampler")
    bad, allowed = _line_spot_check(f, dim, box, max(4, n_samples // 10), seed)
    if bad > allowed:
        msg = f"{bad} nonzero third differences on one line (allowed {allowed}): not piecewise quadratic"
        if strict:
            raise SampleMismatch(msg)
        return PwlqReport(False, "declared, spot-checked", msg, "SampleMismatch")
    return PwlqReport(True, "declared, spot-checked", f"line third differences within {allowed} breakpoints")


# condition battery


@dataclass
class Condition:
    name: str
    statement: str
    verdict: bool | None
    mode: str  # "exact" or "approximate"
    witness: object = None

    def to_json(self) -> dict:
        w = self.witness
        if isinstance(w, np.ndarray):
            w = w.tolist()
        return {"name": self.name, "statement": self.statement, "verdict": self.verdict,
                "mode": self.mode, "witness": w}


@dataclass
class ConditionReport:
    conditions: list = field(default_factory=list)
    conclusions: list = field(default_factory=list)
    pwlq: PwlqReport | None = None

    def __getitem__(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def verdict(self, name: str):
        return self[name].verdict

    def to_json(self) -> dict:
        return {"conditions": [c.to_json() for c in self.conditions],
                "conclusions": self.conclusions,
                "pwlq": None if self.pwlq is None else self.pwlq.to_json()}


def _as_vrep(s):
    if s is None:
        return None, None
    if isinstance(s, VRepSet):
        return s, "exact"
    if isinstance(s, PointCloud):
        return s.to_vrep(), "approximate"
    raise TypeError(f"cannot use {type(s).__name__} as a set")


def qualification_battery(sets: dict, K=None, pwlq: PwlqReport | None = None,
                          convex_f: bool | None = None, require_exact: bool = False) -> ConditionReport:
    """Evaluate the qualification conditions for a composite problem.

    Parameters
    ----------
    sets : dict
        ``dom_g``, ``F_image`` (image of ``dom f0 ∩ dom F``), optionally
        ``F_rint_image`` (image of the relative interior of ``dom F``),
        ``dom_f0`` and ``dom_F``.  Values are :class:`VRepSet` (exact) or
        :class:`PointCloud` (approximate).
    K : Cone, optional
        Monotonicity cone for the K-conditions; ``{0}`` when omitted.
    pwlq : PwlqReport, optional
    convex_f : bool, optional
        Outcome of the numerical convexity diagnostic on ``f``; conclusions
        are stated conditionally on it.
    require_exact : bool
        Raise ``MissingVRep`` if any needed set is only a point cloud.
    """
    dom_g, m_g = _as_vrep(sets.get("dom_g"))
    img, m_i = _as_vrep(sets.get("F_image"))
    if dom_g is None or img is None:
        raise MissingVRep("dom_g and F_image are required")
    modes = [m_g, m_i]
    if require_exact and "approximate" in modes:
        raise MissingVRep("exact mode needs V-representations of dom(g) and F(dom F)")
    mode = "exact" if all(m == "exact" for m in modes) else "approximate"
    d = dom_g.dim
    zero = np.zeros(d)
    krays = np.zeros((0, d)) if K is None else K.rays
    rep = ConditionReport(pwlq=pwlq)
    add = rep.conditions.append

    U = dom_g.minus(img)
    in_u = contains_point(U, zero)
    in_rint_u = contains_rint(U, zero)
    add(Condition("0_in_U", "0 in dom g - F(dom f0 ∩ dom F)", in_u, mode))
    add(Condition("0_in_rint_U", "0 in rint U", in_rint_u, mode))

    # K-regularised forms
    dom_gK = dom_g.plus_rays(-krays)
    img_K = img.plus_rays(krays)
    U_K = dom_gK.minus(img)
    add(Condition("0_in_U_K", "0 in (dom g - K) - F(dom f0 ∩ dom F)", contains_point(U_K, zero), mode))
    add(Condition("0_in_rint_U_K", "0 in rint U_K", contains_rint(U_K, zero), mode))
    add(Condition("rint_dom_g_meets_rint_img_K", "rint(dom g) meets rint(F(dom f0 ∩ dom F) + K)", rint_intersects(dom_g, img_K), mode))
    add(Condition("dom_g_meets_img_K", "dom g meets F(dom f0 ∩ dom F) + K", intersects(dom_g, img_K), mode))

    rimg, m_r = _as_vrep(sets.get("F_rint_image"))
    if rimg is None:
        rimg, m_r = img, m_i
    add(Condition("rint_dom_gK_meets_rint_img", "rint(dom g - K) meets F(rint dom F)", rint_meets(dom_gK, rimg),
                  "exact" if mode == "exact" and m_r == "exact" else "approximate"))

    dom_f0, m_f0 = _as_vrep(sets.get("dom_f0"))
    dom_F, m_F = _as_vrep(sets.get("dom_F"))
    if dom_f0 is not None and dom_F is not None:
        add(Condition("rint_dom_f0_meets_rint_dom_F", "rint(dom f0) meets rint(dom F)",
                      rint_intersects(dom_f0, dom_F),
                      "exact" if m_f0 == m_F == "exact" else "approximate"))

    is_pw = bool(pwlq.valid) if pwlq is not None else False
    add(Condition("pwlq_relaxation_applicable", "f PWLQ and 0 in U", is_pw and in_u,
                  "exact" if pwlq is not None and pwlq.mode == "explicit" else "approximate"))

    premise = "f convex and closed (diagnostic)" + ("" if convex_f is None else f" = {convex_f}")
    certified = (in_rint_u or (is_pw and in_u))
    rep.conclusions = [
        {"claim": "q_0 is proper", "from": "qualification condition, properness",
         "premises": [premise, "0 in dom p_0 = U"], "holds": bool(in_u) and convex_f is not False},
        {"claim": "q_0 is closed", "from": "qualification condition, closedness",
         "premises": [premise, "0 in rint U, or 0 in U and f PWLQ"],
         "holds": bool(certified) and convex_f is not False},
        {"claim": "strong duality at (0, v) with dual attainment when finite",
         "from": "qualification condition, dual attainment",
         "premises": [premise, "0 in rint U, or 0 in U and f PWLQ"],
         "holds": bool(certified) and convex_f is not False},
        {"claim": "conjugate of the composite equals rho, infimum attained",
         "from": "composite conjugate formula, attainment case",
         "premises": [premise, "0 in rint U, or 0 in U and f PWLQ"],
         "holds": bool(certified) and convex_f is not False},
    ]
    return rep


def equality_certified(rep: ConditionReport) -> bool:
    """True when the report certifies the composite conjugate equality."""
    return any(c["claim"].startswith("conjugate of the composite") and c["holds"]
               for c in rep.conclusions)
