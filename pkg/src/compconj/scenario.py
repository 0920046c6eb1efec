"""Scenario files: problem declaration, grids, cones, expected values.

A scenario is a JSON object::

    {
      "name": "...", "citation": "...",
      "f0": "0", "g": "abs(w1)",
      "F": {"components": ["pow(x1,2)/2", "x2"], "guard": null},
      "grids": {"x": [[-4, 4, 81], [-4, 4, 81]], "u": ..., "v": ..., "y": ...},
      "cone": "R+x0",
      "flags": {"polyhedral_domg": true, "polyhedral_F": true, "pwlq_f": false},
      "sets": {"dom_g": {"points": [[0, 0]], "rays": [[1, 0], ...]}, ...},
      "method": "FastLLT",
      "tolerances": {"value": 0.05, "scalar": 0.01, "angle_deg": 2.0},
      "expected": {...}
    }

Missing grids default to ``[-4, 4]`` with 81 nodes per axis for ``x``,
``u`` and ``v`` and ``[-8, 8]`` with 161 nodes per axis for ``y``.  The keys
of ``expected`` are documented in :mod:`compconj.harness`.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

from .cones import Cone
from .composite import CompositeProblem, VecMap
from .errors import MalformedExpr, ScenarioError, UnknownExample
from .expr import as_expr
from .grid import Grid

__all__ = ["Scenario", "load_scenario", "BUILTINS", "builtin", "DEFAULT_TOLERANCES"]

DEFAULT_TOLERANCES = {"value": 5e-2, "scalar": 1e-2, "angle_deg": 2.0, "weak": 1e-6}
XU_DEFAULT = (-4.0, 4.0, 81)
Y_DEFAULT = (-8.0, 8.0, 161)

# expected-block entries holding closed forms, with the variable family used
# and the grid they are sampled on
_FN_KEYS = {
    "composite": ("x", "x"),
    "composite_conjugate": ("v", "v"),
    "g_star": ("v", "y"),
    "rho": ("v", "v"),
    "rho_tilde": ("v", "v"),
}


@dataclass
class Scenario:
    name: str
    raw: dict
    problem: CompositeProblem
    cone: Cone | None
    expected: dict
    tolerances: dict
    citation: str = ""
    notes: list = field(default_factory=list)

    def cone_of(self, spec) -> Cone:
        return Cone.parse(spec, self.problem.m)

    def to_json(self) -> dict:
        return copy.deepcopy(self.raw)


def _grid(spec, dim: int, default) -> Grid:
    if spec is None:
        return Grid((tuple(default),) * dim)
    if len(spec) == 3 and all(isinstance(t, (int, float)) for t in spec):
        spec = [list(spec)] * dim
    g = Grid.from_spec(spec)
    if g.dim != dim:
        raise ScenarioError(f"grid {spec!r} has dimension {g.dim}, expected {dim}")
    return g


def _check_expr(src, prefix: str, dim: int, where: str) -> None:
    try:
        e = as_expr(src)
    except MalformedExpr as exc:
        raise MalformedExpr(f"{where}: {exc}") from exc
    extra = e.prefixes() - {prefix}
    if extra:
        raise ScenarioError(f"{where}: {e.source!r} uses {sorted(extra)}, expected {prefix}-variables")
    if e.max_index(prefix) > dim:
        raise ScenarioError(f"{where}: {e.source!r} needs {e.max_index(prefix)} variables, grid has {dim}")


def _validate_expected(exp: dict, n: int, m: int) -> None:
    dims = {"x": n, "v": n, "u": m, "w": m, "y": m}
    for key, (prefix, _) in _FN_KEYS.items():
        if key in exp:
            _check_expr(exp[key], prefix, dims[prefix], f"expected.{key}")
    for i, item in enumerate(exp.get("eta", [])):
        _check_expr(item["expr"], "v", n, f"expected.eta[{i}]")
    for i, item in enumerate(exp.get("g_K", [])):
        if "expr" in item:
            _check_expr(item["expr"], "w", m, f"expected.g_K[{i}]")
    for i, item in enumerate(exp.get("g_K_conjugate", [])):
        if "expr" in item:
            _check_expr(item["expr"], "v", m, f"expected.g_K_conjugate[{i}]")
    for i, item in enumerate(exp.get("p", [])):
        _check_expr(item["expr"], "u", m, f"expected.p[{i}]")
    for i, item in enumerate(exp.get("q", [])):
        _check_expr(item["expr"], "v", n, f"expected.q[{i}]")


def load_scenario(obj, grid_override: dict | None = None, tol_scale: float = 1.0) -> Scenario:
    """Build a :class:`Scenario` from a dict, a JSON string or a file path."""
    if isinstance(obj, str):
        text = obj
        if not obj.lstrip().startswith("{"):
            try:
                with open(obj) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ScenarioError(f"cannot read scenario {obj!r}: {exc}") from exc
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON (line {exc.lineno}, column {exc.colno}): "
                                f"{exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ScenarioError("a scenario must be a JSON object")
    raw = copy.deepcopy(obj)
    for key in ("g", "F"):
        if key not in raw:
            raise ScenarioError(f"scenario is missing the {key!r} field")
    n = raw.get("n")
    if n is None:
        probe = VecMap.parse(raw["F"])
        try:
            n = max(probe.n, as_expr(raw.get("f0", "0")).max_index("x"), 1)
        except MalformedExpr:
            n = max(probe.n, 1)
    F = VecMap.parse(raw["F"], int(n))
    n, m = F.n, F.m
    grids = dict(raw.get("grids", {}))
    if grid_override:
        grids.update(grid_override)
    x = _grid(grids.get("x"), n, XU_DEFAULT)
    u = _grid(grids.get("u"), m, XU_DEFAULT)
    v = _grid(grids.get("v"), n, XU_DEFAULT)
    y = _grid(grids.get("y"), m, Y_DEFAULT)
    _check_expr(raw.get("f0", "0"), "x", n, "f0")
    _check_expr(raw["g"], "w", m, "g")
    cone = Cone.parse(raw["cone"], m) if raw.get("cone") is not None else None
    P = CompositeProblem(raw.get("f0", "0"), raw["g"], F, x, u, v, y, name=raw.get("name", ""),
                         method=raw.get("method", "FastLLT"), memo=bool(raw.get("memo", False)),
                         flags=dict(raw.get("flags", {})), sets=dict(raw.get("sets", {})), cone=cone)
    exp = dict(raw.get("expected", {}))
    _validate_expected(exp, n, m)
    tols = dict(DEFAULT_TOLERANCES)
    tols.update(raw.get("tolerances", {}))
    tols = {k: float(t) * tol_scale for k, t in tols.items()}
    return Scenario(raw.get("name", "scenario"), raw, P, cone, exp, tols, raw.get("citation", ""))


# built-in examples ------------------------------------------------------

_PLANE = {"points": [[0, 0]], "rays": [[1, 0], [-1, 0], [0, 1], [0, -1]]}
_HALF = {"points": [[0, 0]], "rays": [[1, 0], [0, 1], [0, -1]]}
_AXIS2 = {"points": [[0, 0]], "rays": [[0, 1], [0, -1]]}

_G51_STAR = "2/3*pow(v1,3/2) if v1>=0 and v2==0 else (0 if v1<0 and v2==0 else inf)"
_G51K_STAR = "2/3*pow(v1,3/2) if v1>=0 and v2==0 else inf"
_DELTA0 = "0 if v1==0 and v2==0 else inf"
_RHO52 = "pow(v1,2)/2 if v2==0 else inf"

BUILTINS = {
    "ex51": {
        "name": "ex51",
        "citation": "worked example: cubic g on a half-plane composed with F(x) = (0, x2)",
        "f0": "0",
        "g": "pow(w1,3)/3 if w1>=0 else inf",
        "F": {"components": ["0", "x2"]},
        "flags": {"polyhedral_domg": True, "polyhedral_F": True, "pwlq_f": False},
        "sets": {"dom_g": _HALF, "F_image": _AXIS2},
        "cone": "R+x0",
        "expected": {
            "composite": "0",
            "composite_conjugate": _DELTA0,
            "g_star": _G51_STAR,
            "rho": _DELTA0,
            "eta": [{"cone": "R+x0", "expr": _DELTA0}],
            "K_F": "0",
            "hzn_g": "0xR",
            "kfg_empty": False,
            "k_increasing": [
                {"cone": "R+x0", "restrict_to_range": False, "expected": False},
                {"cone": "R+x0", "restrict_to_range": True, "expected": True},
            ],
            "g_K": [{"cone": "R+x0", "expr": "pow(w1,3)/3 if w1>=0 else 0", "improper": False,
                     "restrict_to_range": False}],
            "g_K_conjugate": [{"cone": "R+x0", "expr": _G51K_STAR}],
            "convex_f": True,
            "pwlq_spot": False,
            "conditions": [
                {"cone": None, "verdicts": {"0_in_U": True, "0_in_rint_U": False},
                 "equality_certificate": False},
                {"cone": "0xR", "verdicts": {"rint_dom_g_meets_rint_img_K": False}},
                {"cone": "R+x0", "verdicts": {"rint_dom_g_meets_rint_img_K": True, "0_in_rint_U_K": True}},
            ],
            "values": [{"kind": "lagrangian", "x": [0, 0], "y": [1, 0], "value": -2 / 3}],
            "chain_rule": [{"x": [0, 0], "inclusion": True}],
        },
    },
    "ex51-repaired": {
        "name": "ex51-repaired",
        "citation": "worked example continued: the cubic g regularised along R+ x {0}",
        "f0": "0",
        "g": "pow(w1,3)/3 if w1>=0 else 0",
        "F": {"components": ["0", "x2"]},
        "flags": {"polyhedral_domg": True, "polyhedral_F": True, "pwlq_f": False},
        "sets": {"dom_g": _PLANE, "F_image": _AXIS2},
        "cone": "R+x0",
        "expected": {
            "composite": "0",
            "composite_conjugate": _DELTA0,
            "g_star": _G51K_STAR,
            "rho": _DELTA0,
            "convex_f": True,
            "conditions": [
                {"cone": None, "verdicts": {"0_in_U": True, "0_in_rint_U": True},
                 "equality_certificate": True},
                {"cone": "R+x0", "verdicts": {"0_in_rint_U_K": True}},
            ],
            "eta": [{"cone": "R+x0", "expr": _DELTA0}],
            "chain_rule": [{"x": [0, 0], "inclusion": True, "equality": True}],
        },
    },
    "ex52": {
        "name": "ex52",
        "citation": "worked example: g = |w1| composed with F(x) = (x1^2/2, x2)",
        "f0": "0",
        "g": "abs(w1)",
        "F": {"components": ["pow(x1,2)/2", "x2"]},
        "flags": {"polyhedral_domg": True, "polyhedral_F": True, "pwlq_f": False},
        "sets": {"dom_g": _PLANE, "F_image": _HALF},
        "cone": "R+x0",
        "expected": {
            "composite": "pow(x1,2)/2",
            "composite_conjugate": _RHO52,
            "g_star": "0 if v1>=-1 and v1<=1 and v2==0 else inf",
            "rho": _RHO52,
            "eta": [{"cone": "R+x0", "expr": _RHO52}],
            "K_F": "R+x0",
            "hzn_g": "0xR",
            "kfg_empty": True,
            "k_convex": [{"cone": "R+x0", "expected": True}, {"cone": "R-x0", "expected": False}],
            "g_K_conjugate": [{"cone": "R+x0", "expr": "0 if v1>=0 and v1<=1 and v2==0 else inf"}],
            "convex_f": False,
            "conditions": [
                {"cone": None, "verdicts": {"0_in_U": True, "0_in_rint_U": True},
                 "equality_certificate": False},
            ],
            "optimality": [{"v": [1, 0], "x": [1, 0], "y": [1, 0], "composite": True, "split": True}],
            "chain_rule": [{"x": [0, 0], "inclusion": True}],
        },
    },
    "ex52-repaired": {
        "name": "ex52-repaired",
        "citation": "worked example continued: g replaced by max(w1, 0) along K_F = R+ x {0}",
        "f0": "0",
        "g": "max(w1,0)",
        "F": {"components": ["pow(x1,2)/2", "x2"]},
        "flags": {"polyhedral_domg": True, "polyhedral_F": True, "pwlq_f": True},
        "sets": {"dom_g": _PLANE, "F_image": _HALF},
        "cone": "R+x0",
        "expected": {
            "composite": "pow(x1,2)/2",
            "composite_conjugate": _RHO52,
            "g_star": "0 if v1>=0 and v1<=1 and v2==0 else inf",
            "rho": _RHO52,
            "convex_f": True,
            "pwlq_spot": True,
            "conditions": [
                {"cone": None, "verdicts": {"0_in_U": True, "0_in_rint_U": True},
                 "equality_certificate": True},
            ],
            "chain_rule": [
                {"x": [0, 0], "inclusion": True, "equality": True},
                {"x": [1, 0], "inclusion": True, "equality": True},
                {"x": [-1, 0], "inclusion": True, "equality": True},
            ],
        },
    },
    "ex53": {
        "name": "ex53",
        "citation": "worked example: g = -sqrt(w1 w2) regularised along R+ x {0}",
        "f0": "0",
        "g": "-sqrt(w1*w2) if w1>=0 and w2>=0 else inf",
        "F": {"components": ["x1", "0"], "guard": "x1 >= 0"},
        "flags": {"polyhedral_domg": True, "polyhedral_F": True},
        "sets": {"dom_g": {"points": [[0, 0]], "rays": [[1, 0], [0, 1]]},
                 "F_image": {"points": [[0, 0]], "rays": [[1, 0]]}},
        "cone": "R+x0",
        "expected": {
            "k_convex": [{"cone": "R+x0", "expected": True}],
            "k_increasing": [
                {"cone": "R+x0", "restrict_to_range": False, "expected": False},
                {"cone": "R+x0", "restrict_to_range": True, "expected": True},
            ],
            "g_K": [
                {"cone": "R+x0", "restrict_to_range": False, "improper": True,
                 "expr": "-inf if w2>0 else (0 if w2==0 else inf)"},
                {"cone": "R+x0", "restrict_to_range": True, "improper": False,
                 "expr": "0 if w2==0 else inf"},
            ],
        },
    },
    "nonattain-dual": {
        "name": "nonattain-dual",
        "citation": "non-attainment example: f(x,u) = x + indicator(x^2 + u <= 0), dual infimum not attained",
        "f0": "x1",
        "g": "0 if w1 <= 0 else inf",
        "F": {"components": ["pow(x1,2)"]},
        "grids": {"x": [[-4, 4, 1601]], "u": [[-4, 4, 1601]], "v": [[-4, 4, 81]],
                  "y": [[-4, 200, 2041]]},
        "expected": {
            "p": [{"v": [0], "expr": "-sqrt(-u1) if u1 <= 0 else inf", "region": [[-4, 0]]}],
            "q": [{"u": [0], "expr": "0"}],
            "values": [
                {"kind": "f_star", "v": [0], "y": [1], "value": 0.25},
                {"kind": "f_star", "v": [1], "y": [0], "value": 0.0},
            ],
            "duality": [{"v": [0], "u": [0], "p": 0.0, "q": 0.0, "P_set": [[0]], "Q_set": [],
                         "primal_attained": True, "dual_attained": False,
                         "boundary_suspect": True, "diagnostic": "dual: flat-tail"}],
            "subgradient_empty": [{"v": [0], "u": [0]}],
        },
    },
    "nonattain-primal": {
        "name": "nonattain-primal",
        "citation": "non-attainment example: f(x,u) = exp(x) + u, primal infimum not attained",
        "f0": "exp(x1)",
        "g": "w1",
        "F": {"components": ["0"]},
        "n": 1,
        "grids": {"x": [[-4, 4, 801]], "u": [[-4, 4, 801]], "v": [[-4, 4, 81]],
                  "y": [[-4, 4, 81]]},
        "expected": {
            "p": [{"v": [0], "expr": "u1"}],
            "values": [{"kind": "f_star", "v": [1], "y": [1], "value": -1.0}],
            "duality": [{"v": [0], "u": [0], "p": 0.0, "q": 0.0, "P_set": [], "Q_set": [[1]],
                         "primal_attained": False, "dual_attained": True,
                         "diagnostic": "primal: flat-tail"}],
        },
    },
}


def builtin(name: str) -> dict:
    """A deep copy of a built-in scenario."""
    if name not in BUILTINS:
        raise UnknownExample(f"unknown example {name!r}; choose from {sorted(BUILTINS)}")
    return copy.deepcopy(BUILTINS[name])
