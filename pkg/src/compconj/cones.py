"""Finitely generated closed convex cones in R^m (m <= 3)."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .errors import DimensionMismatch, DimensionTooLarge, ScenarioError
from .grid import Grid, GridFn

log = logging.getLogger(__name__)

__all__ = [
    "Cone",
    "InfElem",
    "INF_ELEM",
    "polar",
    "contains",
    "k_leq",
    "indicator_grid",
    "cone_angle",
    "MAX_GENERATORS",
]

MAX_DIM = 3
MAX_GENERATORS = 32
DEFAULT_TOL = 1e-7


class InfElem:
    """The adjoined largest element ``+inf.`` of every ``<=_K`` order."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "INF_ELEM"


INF_ELEM = InfElem()


def _unit_rows(R: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    R = np.asarray(R, dtype=float).reshape(-1, R.shape[-1] if np.ndim(R) > 1 else 0)
    norms = np.linalg.norm(R, axis=1)
    if np.any(norms <= tol):
        raise ValueError("cone generators must be nonzero")
    return R / norms[:, None]


def _dedupe(R: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    keep = []
    for r in R:
        if not any(np.linalg.norm(r - k) <= tol for k in keep):
            keep.append(r)
    return np.array(keep).reshape(-1, R.shape[1])


@dataclass(frozen=True, eq=False)
class Cone:
    """``cone(rays) = {sum_i mu_i r_i : mu >= 0}``; no rays means ``{0}``.

    Parameters
    ----------
    dim : int
        Ambient dimension ``m <= 3``.
    rays : array_like, shape (k, m)
        Nonzero generators, stored normalised.
    estimate : bool
        True when the cone was estimated from samples.
    """

    dim: int
    rays: np.ndarray
    estimate: bool = False

    def __post_init__(self):
        if self.dim > MAX_DIM:
            raise DimensionTooLarge(f"cones are limited to m <= {MAX_DIM}")
        R = np.asarray(self.rays, dtype=float)
        if R.size == 0:
            R = np.zeros((0, self.dim))
        R = R.reshape(-1, self.dim)
        if len(R):
            R = _dedupe(_unit_rows(R)) + 0.0
        R.setflags(write=False)
        object.__setattr__(self, "rays", R)

    @classmethod
    def zero(cls, m: int) -> "Cone":
        return cls(m, np.zeros((0, m)))

    @classmethod
    def full(cls, m: int) -> "Cone":
        eye = np.eye(m)
        return cls(m, np.vstack([eye, -eye]))

    @classmethod
    def parse(cls, spec, m: int | None = None) -> "Cone":
        """Build from a scenario literal.

        Accepts ``{"rays": [[...], ...]}``, a list of rays, ``"0"``,
        ``"full"``, or a product shorthand such as ``"R+xR"`` or ``"R+x0"``
        whose factors are ``R``, ``R+``, ``R-`` and ``0``.
        """
        if isinstance(spec, Cone):
            return spec
        if isinstance(spec, dict):
            if "rays" not in spec:
                raise ScenarioError("cone literal needs a 'rays' field")
            rays = spec["rays"]
            dim = spec.get("dim", m if m is not None else (len(rays[0]) if rays else None))
            if dim is None:
                raise ScenarioError("empty ray list needs an explicit dimension")
            return cls(int(dim), np.asarray(rays, dtype=float).reshape(-1, int(dim)))
        if isinstance(spec, (list, tuple)):
            return cls.parse({"rays": list(spec)}, m)
        if not isinstance(spec, str):
            raise ScenarioError(f"cannot interpret cone {spec!r}")
        s = spec.replace(" ", "")
        if s in ("0", "full"):
            m = 2 if m is None else m
            return cls.zero(m) if s == "0" else cls.full(m)
        factors = s.split("x")
        rays = []
        for i, f in enumerate(factors):
            e = np.zeros(len(factors))
            e[i] = 1.0
            if f == "R":
                rays += [e, -e]
            elif f == "R+":
                rays.append(e)
            elif f == "R-":
                rays.append(-e)
            elif f != "0":
                raise ScenarioError(f"unknown cone factor {f!r} in {spec!r}")
        if m is not None and m != len(factors):
            raise DimensionMismatch(f"cone {spec!r} has dimension {len(factors)}, expected {m}")
        return cls(len(factors), np.array(rays).reshape(-1, len(factors)))

    def to_json(self) -> dict:
        return {"dim": self.dim, "rays": self.rays.tolist(), "estimate": self.estimate}

    def __neg__(self) -> "Cone":
        return Cone(self.dim, -self.rays, self.estimate)

    @property
    def is_zero(self) -> bool:
        return len(self.rays) == 0

    def contains(self, x, tol: float = DEFAULT_TOL) -> bool:
        return contains(self, x, tol)

    def contains_many(self, X, tol: float = DEFAULT_TOL) -> np.ndarray:
        """Vectorised membership through the polar (``K = K°°``)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise DimensionMismatch(f"points in R^{X.shape[1]} vs cone in R^{self.dim}")
        P = polar(self).rays
        scale = tol * (1.0 + np.linalg.norm(X, axis=1))
        if len(P) == 0:
            return np.ones(len(X), dtype=bool)
        return np.max(X @ P.T, axis=1) <= scale

    def is_subset(self, other: "Cone", tol: float = 1e-6) -> bool:
        """Generator membership: every ray of ``self`` lies in ``other``."""
        return all(contains(other, r, tol) for r in self.rays)

    def equals(self, other: "Cone", tol: float = 1e-6) -> bool:
        return self.is_subset(other, tol) and other.is_subset(self, tol)

    def simplified(self, tol: float = 1e-9) -> "Cone":
        """Drop generators that are conic combinations of the others."""
        R = list(self.rays)
        i = 0
        while i < len(R):
            others = np.array(R[:i] + R[i + 1:]).reshape(-1, self.dim)
            if len(others) and _dist_to_cone(others, R[i]) <= tol:
                R.pop(i)
            else:
                i += 1
        return Cone(self.dim, np.array(R).reshape(-1, self.dim), self.estimate)

    def lineality_basis(self, tol: float = 1e-9) -> np.ndarray:
        """Orthonormal basis of ``K ∩ -K``."""
        basis = np.zeros((0, self.dim))
        for r in self.rays:
            if contains(self, -r, tol):
                cand = r - basis.T @ (basis @ r) if len(basis) else r.copy()
                nrm = np.linalg.norm(cand)
                if nrm > 1e-8:
                    basis = np.vstack([basis, cand / nrm])
        return basis

    def __repr__(self):
        tag = ", estimate" if self.estimate else ""
        return f"Cone(dim={self.dim}, rays={np.round(self.rays, 6).tolist()}{tag})"


def _dist_to_cone(R: np.ndarray, x: np.ndarray) -> float:
    if len(R) == 0:
        return float(np.linalg.norm(x))
    _, res = nnls(R.T, np.asarray(x, dtype=float))
    return float(res)


def _project(R: np.ndarray, x: np.ndarray) -> np.ndarray:
    if len(R) == 0:
        return np.zeros_like(x)
    mu, _ = nnls(R.T, x)
    return R.T @ mu


def contains(K: Cone, x, tol: float = DEFAULT_TOL) -> bool:
    """``dist(x, K) <= tol * (1 + |x|)`` via nonnegative least squares."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != K.dim:
        raise DimensionMismatch(f"vector in R^{x.shape[0]} vs cone in R^{K.dim}")
    return _dist_to_cone(K.rays, x) <= tol * (1.0 + np.linalg.norm(x))


def k_leq(K: Cone, x1, x2, tol: float = DEFAULT_TOL) -> bool:
    """``x1 <=_K x2``; every vector is below ``INF_ELEM``."""
    if x2 is INF_ELEM:
        return True
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x1.shape != x2.shape:
        raise DimensionMismatch("k_leq arguments differ in dimension")
    return contains(K, x2 - x1, tol)


def _null_space(A: np.ndarray, m: int, tol: float = 1e-10) -> np.ndarray:
    if A.size == 0:
        return np.eye(m)
    _, s, vt = np.linalg.svd(A)
    rank = int(np.sum(s > tol * max(1.0, s[0] if len(s) else 1.0)))
    return vt[rank:]


def polar(K: Cone, tol: float = 1e-9) -> Cone:
    """``K° = {v : <r, v> <= 0 for every generator r}``.

    The lineality space of ``K°`` is the null space of the generator matrix;
    on its orthogonal complement ``K°`` is pointed and its extreme rays are
    the feasible directions orthogonal to ``d - 1`` linearly independent
    generators.
    """
    m = K.dim
    if m > MAX_DIM:
        raise DimensionTooLarge(f"polar is limited to m <= {MAX_DIM}")
    R = K.rays
    if len(R) == 0:
        return Cone.full(m)
    L = _null_space(R, m)
    d = m - len(L)
    rays = [b for b in L] + [-b for b in L]
    comp = _null_space(L, m) if len(L) else np.eye(m)
    for subset in itertools.combinations(range(len(R)), d - 1):
        A = np.vstack([R[list(subset)], L]) if len(L) else R[list(subset)].reshape(-1, m)
        N = _null_space(A, m) if A.size else comp
        if len(N) != 1:
            continue
        u = N[0] - (L.T @ (L @ N[0]) if len(L) else 0.0)
        nrm = np.linalg.norm(u)
        if nrm < 1e-9:
            continue
        u = u / nrm
        for s in (u, -u):
            if np.all(R @ s <= tol):
                rays.append(s)
    if len(rays) > 2 * MAX_GENERATORS:
        log.warning("polar has %d generators; simplifying", len(rays))
        return Cone(m, np.array(rays), K.estimate).simplified()
    return Cone(m, np.array(rays).reshape(-1, m), K.estimate)


def indicator_grid(K: Cone, grid: Grid, negate: bool = False, tol: float = DEFAULT_TOL) -> GridFn:
    """``delta_K`` (or ``delta_{-K}``) sampled on ``grid``."""
    if grid.dim != K.dim:
        raise DimensionMismatch(f"{grid.dim}-D grid for a cone in R^{K.dim}")
    C = -K if negate else K
    inside = C.contains_many(grid.nodes(), tol)
    vals = np.where(inside, 0.0, np.inf)
    return GridFn(grid, vals, name=("delta_-K" if negate else "delta_K"))


def cone_angle(A: Cone, B: Cone) -> float:
    """Symmetric angular discrepancy between two cones, in degrees.

    For each generator ``r`` of one cone the angle between ``r`` and its
    projection onto the other cone is measured; the result is the largest.
    """
    if A.dim != B.dim:
        raise DimensionMismatch("cones of different dimension")
    if A.is_zero and B.is_zero:
        return 0.0
    if A.is_zero or B.is_zero:
        return 180.0
    worst = 0.0
    for S, T in ((A, B), (B, A)):
        for r in S.rays:
            p = _project(T.rays, r)
            worst = max(worst, math.degrees(math.atan2(np.linalg.norm(r - p), np.linalg.norm(p))))
    return worst
